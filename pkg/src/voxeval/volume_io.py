"""Reading and writing a NIfTI-1 subset: single-file .nii / .nii.gz volumes.

Supported: 3D images, datatypes uint8/int16/float32/float64, either byte
order (auto-detected), optional gzip envelope chosen purely by file suffix,
scl_slope/scl_inter intensity scaling, origin from the sform or qform
translation. Oblique orientations are not interpreted; a rotation in the
header raises a warning and the volume is treated as axis-aligned.
"""
from __future__ import annotations

import gzip
import struct
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Volume",
    "NiftiFormatError",
    "BadMagicError",
    "UnsupportedDatatypeError",
    "DimensionError",
    "TruncatedPayloadError",
    "read_volume",
    "write_volume",
]

HEADER_SIZE = 348
MIN_VOX_OFFSET = 352

# NIfTI-1 datatype code -> numpy dtype character (endianness applied at read).
_DTYPES = {2: "u1", 4: "i2", 16: "f4", 64: "f8"}
_DTYPE_CODES = {np.dtype("uint8"): 2, np.dtype("int16"): 4,
                np.dtype("float32"): 16, np.dtype("float64"): 64}
_BITPIX = {2: 8, 4: 16, 16: 32, 64: 64}


class NiftiFormatError(ValueError):
    """Malformed or unsupported NIfTI-1 content."""


class BadMagicError(NiftiFormatError):
    """Header magic is not the single-file signature b'n+1\\0'."""


class UnsupportedDatatypeError(NiftiFormatError):
    """Datatype code outside the supported set {2, 4, 16, 64}."""


class DimensionError(NiftiFormatError):
    """Volume is not reducible to 3 spatial dimensions, or dims are invalid."""


class TruncatedPayloadError(NiftiFormatError):
    """File ends before the declared voxel payload is complete."""


@dataclass(frozen=True)
class Volume:
    """An axis-aligned volumetric image on a regular grid.

    ``data`` is indexed [x, y, z] with x the fastest-varying axis on disk;
    ``spacing`` is the voxel edge length per axis in mm; ``origin`` is the
    mm offset of voxel (0, 0, 0) taken from the header translation. Boxes
    derived from masks place voxel index i at [i*spacing + origin,
    (i+1)*spacing + origin) per axis. The array is marked read-only.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise DimensionError(f"volume data must be 3D, got {data.ndim}D")
        if data.dtype.kind not in "uif":
            raise UnsupportedDatatypeError(f"unsupported array dtype {data.dtype}")
        data = data.view()
        data.flags.writeable = False
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(spacing) != 3 or len(origin) != 3:
            raise ValueError("spacing and origin must have exactly 3 components")
        if any(not s > 0 for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def _open_for_read(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_volume(path) -> Volume:
    """Read a .nii or .nii.gz file (gzip decided by the .gz suffix alone)."""
    with _open_for_read(path) as f:
        header = f.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE:
            raise TruncatedPayloadError(f"{path}: file shorter than the {HEADER_SIZE}-byte header")
        magic = header[344:348]
        if magic != b"n+1\x00":
            raise BadMagicError(f"{path}: bad magic {magic!r}, expected b'n+1\\x00'")

        # Byte order is whichever makes sizeof_hdr read as 348.
        if struct.unpack_from("<i", header, 0)[0] == HEADER_SIZE:
            end = "<"
        elif struct.unpack_from(">i", header, 0)[0] == HEADER_SIZE:
            end = ">"
        else:
            raise NiftiFormatError(f"{path}: sizeof_hdr is not {HEADER_SIZE} in either byte order")

        dim = struct.unpack_from(end + "8h", header, 40)
        datatype, = struct.unpack_from(end + "h", header, 70)
        pixdim = struct.unpack_from(end + "8f", header, 76)
        vox_offset, = struct.unpack_from(end + "f", header, 108)
        scl_slope, = struct.unpack_from(end + "f", header, 112)
        scl_inter, = struct.unpack_from(end + "f", header, 116)
        qform_code, sform_code = struct.unpack_from(end + "2h", header, 252)
        quatern = struct.unpack_from(end + "3f", header, 256)
        qoffset = struct.unpack_from(end + "3f", header, 268)
        srow = np.array(struct.unpack_from(end + "12f", header, 280)).reshape(3, 4)

        ndim = dim[0]
        if not 1 <= ndim <= 7:
            raise DimensionError(f"{path}: dim[0] = {ndim} outside 1..7")
        shape = list(dim[1:1 + ndim])
        # Degenerate trailing axes (e.g. a 4th dimension of size 1) are squeezed.
        while len(shape) > 3 and shape[-1] == 1:
            shape.pop()
        if len(shape) != 3:
            raise DimensionError(f"{path}: expected 3 spatial dimensions, got shape {tuple(shape)}")
        if any(n < 1 for n in shape):
            raise DimensionError(f"{path}: non-positive dimension in shape {tuple(shape)}")

        if datatype not in _DTYPES:
            raise UnsupportedDatatypeError(f"{path}: datatype code {datatype} not supported")
        dtype = np.dtype(end + _DTYPES[datatype])

        spacing = pixdim[1:4]
        if any(not s > 0 for s in spacing):
            raise NiftiFormatError(f"{path}: non-positive pixdim {spacing}")

        if sform_code > 0:
            origin = tuple(float(v) for v in srow[:, 3])
            rotated = bool(np.any(srow[:, :3] != np.diag(np.diagonal(srow[:, :3]))))
        elif qform_code > 0:
            origin = tuple(float(v) for v in qoffset)
            rotated = any(v != 0.0 for v in quatern)
        else:
            origin = (0.0, 0.0, 0.0)
            rotated = False
        if rotated:
            warnings.warn(
                f"{path}: header encodes a rotation; axes are treated as grid-aligned",
                RuntimeWarning,
                stacklevel=2,
            )

        offset = int(vox_offset)
        if offset < MIN_VOX_OFFSET:
            raise NiftiFormatError(f"{path}: vox_offset {offset} below minimum {MIN_VOX_OFFSET}")
        skip = offset - HEADER_SIZE
        if skip:
            gap = f.read(skip)
            if len(gap) < skip:
                raise TruncatedPayloadError(f"{path}: file ends inside the header extension gap")

        count = int(np.prod(shape))
        payload = f.read(count * dtype.itemsize)
        if len(payload) < count * dtype.itemsize:
            raise TruncatedPayloadError(
                f"{path}: payload has {len(payload)} bytes, "
                f"expected {count * dtype.itemsize} for shape {tuple(shape)}"
            )

    # NIfTI payloads are Fortran-ordered: x varies fastest.
    data = np.frombuffer(payload, dtype=dtype).reshape(shape, order="F")
    data = data.astype(dtype.newbyteorder("="), copy=False)

    if scl_slope != 0.0 and (scl_slope, scl_inter) != (1.0, 0.0):
        out_dtype = np.float64 if data.dtype == np.float64 else np.float32
        data = (data.astype(np.float64) * float(scl_slope) + float(scl_inter)).astype(out_dtype)

    return Volume(data=data, spacing=tuple(float(s) for s in spacing), origin=origin)


def write_volume(volume: Volume, path, byteorder: str = "<") -> None:
    """Write a single-file NIfTI-1 volume; gzip-compress iff path ends in .gz.

    Output is deterministic: the gzip stream carries no timestamp, and the
    header stores spacing on the pixdim/sform diagonal with scl 1/0.
    """
    if byteorder not in ("<", ">"):
        raise ValueError("byteorder must be '<' or '>'")
    data = volume.data
    code = _DTYPE_CODES.get(data.dtype.newbyteorder("="))
    if code is None:
        raise UnsupportedDatatypeError(
            f"cannot write dtype {data.dtype}; supported: uint8, int16, float32, float64"
        )

    header = bytearray(HEADER_SIZE)
    struct.pack_into(byteorder + "i", header, 0, HEADER_SIZE)
    struct.pack_into(byteorder + "8h", header, 40, 3, *data.shape, 1, 1, 1, 1)
    struct.pack_into(byteorder + "h", header, 70, code)
    struct.pack_into(byteorder + "h", header, 72, _BITPIX[code])
    struct.pack_into(byteorder + "8f", header, 76, 1.0, *volume.spacing, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into(byteorder + "f", header, 108, float(MIN_VOX_OFFSET))
    struct.pack_into(byteorder + "2f", header, 112, 1.0, 0.0)  # scl_slope, scl_inter
    struct.pack_into(byteorder + "2h", header, 252, 1, 1)  # qform_code, sform_code
    struct.pack_into(byteorder + "3f", header, 268, *volume.origin)
    srow = np.zeros((3, 4), dtype=np.float64)
    srow[:, :3] = np.diag(volume.spacing)
    srow[:, 3] = volume.origin
    struct.pack_into(byteorder + "12f", header, 280, *srow.ravel())
    struct.pack_into("4s", header, 344, b"n+1\x00")

    payload = np.asfortranarray(data.astype(np.dtype(byteorder + _DTYPES[code]), copy=False))
    blob = bytes(header) + b"\x00" * (MIN_VOX_OFFSET - HEADER_SIZE) + payload.tobytes(order="F")

    if str(path).endswith(".gz"):
        # filename="" keeps the target path out of the stream so identical
        # volumes compress to identical bytes wherever they are written.
        with open(path, "wb") as raw:
            with gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as gz:
                gz.write(blob)
    else:
        with open(path, "wb") as f:
            f.write(blob)
