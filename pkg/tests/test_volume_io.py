"""NIfTI-1 reader/writer tests against hand-packed header bytes."""
import gzip
import struct

import numpy as np
import pytest

from voxeval import (
    BadMagicError,
    DimensionError,
    NiftiFormatError,
    TruncatedPayloadError,
    UnsupportedDatatypeError,
    Volume,
    read_volume,
    write_volume,
)

DTYPE_CODES = {2: np.uint8, 4: np.int16, 16: np.float32, 64: np.float64}


def raw_nifti(
    data: np.ndarray,
    end: str = "<",
    spacing=(1.0, 1.0, 1.0),
    vox_offset: int = 352,
    scl_slope: float = 0.0,
    scl_inter: float = 0.0,
    qform_code: int = 0,
    sform_code: int = 0,
    qoffset=(0.0, 0.0, 0.0),
    srow_trans=(0.0, 0.0, 0.0),
    magic: bytes = b"n+1\x00",
    dim0: int | None = None,
    dims: tuple | None = None,
    datatype: int | None = None,
    truncate: int | None = None,
) -> bytes:
    """Pack a single-file NIfTI-1 byte string field by field."""
    code = {np.uint8: 2, np.int16: 4, np.float32: 16, np.float64: 64}.get(
        data.dtype.type, datatype
    )
    if datatype is not None:
        code = datatype
    bitpix = {2: 8, 4: 16, 16: 32, 64: 64}.get(code, data.dtype.itemsize * 8)
    shape = dims if dims is not None else data.shape
    ndim = dim0 if dim0 is not None else len(shape)
    header = bytearray(348)
    struct.pack_into(end + "i", header, 0, 348)
    dim = [1] * 8
    dim[0] = ndim
    for i, n in enumerate(shape):
        dim[1 + i] = n
    struct.pack_into(end + "8h", header, 40, *dim)
    struct.pack_into(end + "2h", header, 70, code, bitpix)
    pixdim = [0.0] + list(spacing) + [0.0] * (7 - len(spacing))
    struct.pack_into(end + "8f", header, 76, *pixdim)
    struct.pack_into(end + "f", header, 108, float(vox_offset))
    struct.pack_into(end + "2f", header, 112, scl_slope, scl_inter)
    struct.pack_into(end + "2h", header, 252, qform_code, sform_code)
    struct.pack_into(end + "3f", header, 268, *qoffset)
    struct.pack_into(end + "4f", header, 280, spacing[0], 0, 0, srow_trans[0])
    struct.pack_into(end + "4f", header, 296, 0, spacing[1], 0, srow_trans[1])
    struct.pack_into(end + "4f", header, 312, 0, 0, spacing[2], srow_trans[2])
    header[344:348] = magic
    payload = np.asfortranarray(data.astype(data.dtype.newbyteorder(end))).tobytes(order="F")
    blob = bytes(header) + b"\x00" * (vox_offset - 348) + payload
    if truncate is not None:
        blob = blob[:truncate]
    return blob


def rng_data(dtype, shape=(4, 3, 2), seed=0):
    rng = np.random.default_rng(seed)
    if np.issubdtype(dtype, np.integer):
        info = np.iinfo(dtype)
        return rng.integers(info.min, info.max, size=shape, endpoint=True).astype(dtype)
    return rng.standard_normal(shape).astype(dtype)


@pytest.mark.parametrize("code,dtype", sorted(DTYPE_CODES.items()))
@pytest.mark.parametrize("end", ["<", ">"])
def test_read_raw_header_all_dtypes_both_endians(tmp_path, code, dtype, end):
    data = rng_data(dtype)
    path = tmp_path / "v.nii"
    path.write_bytes(raw_nifti(data, end=end, spacing=(0.7, 1.25, 2.5)))
    vol = read_volume(path)
    assert vol.data.dtype == dtype
    np.testing.assert_array_equal(vol.data, data)
    assert vol.spacing == pytest.approx((0.7, 1.25, 2.5))
    assert vol.origin == (0.0, 0.0, 0.0)


def test_gzip_suffix_transparent(tmp_path):
    data = rng_data(np.int16)
    path = tmp_path / "v.nii.gz"
    path.write_bytes(gzip.compress(raw_nifti(data)))
    np.testing.assert_array_equal(read_volume(path).data, data)


def test_payload_is_fortran_order(tmp_path):
    # A non-symmetric volume distinguishes C from Fortran layouts.
    data = np.arange(24, dtype=np.int16).reshape(2, 3, 4)
    path = tmp_path / "v.nii"
    path.write_bytes(raw_nifti(data))
    np.testing.assert_array_equal(read_volume(path).data, data)


class TestScaling:
    def test_slope_inter_applied(self, tmp_path):
        data = np.array([[[0, 1], [2, 3]]], dtype=np.int16).reshape(1, 2, 2)
        path = tmp_path / "v.nii"
        path.write_bytes(raw_nifti(data, scl_slope=2.0, scl_inter=10.0))
        vol = read_volume(path)
        assert vol.data.dtype == np.float32
        np.testing.assert_allclose(vol.data, data.astype(np.float32) * 2.0 + 10.0)

    def test_slope_zero_means_unscaled(self, tmp_path):
        data = rng_data(np.int16)
        path = tmp_path / "v.nii"
        path.write_bytes(raw_nifti(data, scl_slope=0.0, scl_inter=99.0))
        vol = read_volume(path)
        assert vol.data.dtype == np.int16
        np.testing.assert_array_equal(vol.data, data)

    def test_identity_slope_skips_scaling(self, tmp_path):
        data = rng_data(np.uint8)
        path = tmp_path / "v.nii"
        path.write_bytes(raw_nifti(data, scl_slope=1.0, scl_inter=0.0))
        vol = read_volume(path)
        assert vol.data.dtype == np.uint8
        np.testing.assert_array_equal(vol.data, data)

    def test_scaled_float64_stays_float64(self, tmp_path):
        data = rng_data(np.float64)
        path = tmp_path / "v.nii"
        path.write_bytes(raw_nifti(data, scl_slope=3.0, scl_inter=-1.0))
        vol = read_volume(path)
        assert vol.data.dtype == np.float64
        np.testing.assert_allclose(vol.data, data * 3.0 - 1.0)

    def test_slope_one_nonzero_inter_scales(self, tmp_path):
        data = rng_data(np.uint8)
        path = tmp_path / "v.nii"
        path.write_bytes(raw_nifti(data, scl_slope=1.0, scl_inter=5.0))
        vol = read_volume(path)
        assert vol.data.dtype == np.float32
        np.testing.assert_allclose(vol.data, data.astype(np.float32) + 5.0)


class TestOrigin:
    def test_sform_wins_over_qform(self, tmp_path):
        data = rng_data(np.uint8)
        path = tmp_path / "v.nii"
        path.write_bytes(
            raw_nifti(data, qform_code=1, sform_code=1,
                      qoffset=(9.0, 9.0, 9.0), srow_trans=(-12.5, 3.0, 40.0))
        )
        assert read_volume(path).origin == pytest.approx((-12.5, 3.0, 40.0))

    def test_qform_when_no_sform(self, tmp_path):
        data = rng_data(np.uint8)
        path = tmp_path / "v.nii"
        path.write_bytes(raw_nifti(data, qform_code=1, sform_code=0, qoffset=(1.0, -2.0, 3.5)))
        assert read_volume(path).origin == pytest.approx((1.0, -2.0, 3.5))

    def test_no_codes_origin_zero(self, tmp_path):
        data = rng_data(np.uint8)
        path = tmp_path / "v.nii"
        path.write_bytes(raw_nifti(data, qoffset=(1.0, 1.0, 1.0), srow_trans=(2.0, 2.0, 2.0)))
        assert read_volume(path).origin == (0.0, 0.0, 0.0)


class TestValidation:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "v.nii"
        path.write_bytes(raw_nifti(rng_data(np.uint8), magic=b"ni1\x00"))
        with pytest.raises(BadMagicError):
            read_volume(path)

    def test_unsupported_datatype(self, tmp_path):
        path = tmp_path / "v.nii"
        path.write_bytes(raw_nifti(rng_data(np.uint8), datatype=8))  # int32 not in subset
        with pytest.raises(UnsupportedDatatypeError):
            read_volume(path)

    def test_two_dimensional_rejected(self, tmp_path):
        path = tmp_path / "v.nii"
        data = rng_data(np.uint8, shape=(4, 3, 1))
        path.write_bytes(raw_nifti(data, dim0=2, dims=(4, 3)))
        with pytest.raises(DimensionError):
            read_volume(path)

    def test_trailing_singleton_dims_squeezed(self, tmp_path):
        data = rng_data(np.int16, shape=(4, 3, 2))
        path = tmp_path / "v.nii"
        path.write_bytes(raw_nifti(data, dim0=5, dims=(4, 3, 2, 1, 1)))
        vol = read_volume(path)
        assert vol.shape == (4, 3, 2)
        np.testing.assert_array_equal(vol.data, data)

    def test_real_fourth_dimension_rejected(self, tmp_path):
        data = rng_data(np.int16, shape=(4, 3, 2))
        path = tmp_path / "v.nii"
        blob = raw_nifti(data, dim0=4, dims=(4, 3, 1, 2))
        path.write_bytes(blob)
        with pytest.raises(DimensionError):
            read_volume(path)

    def test_truncated_payload(self, tmp_path):
        data = rng_data(np.float32, shape=(6, 5, 4))
        blob = raw_nifti(data)
        path = tmp_path / "v.nii"
        path.write_bytes(blob[:-10])
        with pytest.raises(TruncatedPayloadError):
            read_volume(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "v.nii"
        path.write_bytes(b"\x00" * 100)
        with pytest.raises(TruncatedPayloadError):
            read_volume(path)

    def test_vox_offset_below_352_rejected(self, tmp_path):
        data = rng_data(np.uint8)
        blob = raw_nifti(data)
        # rewrite vox_offset to 348 in place
        blob = blob[:108] + struct.pack("<f", 348.0) + blob[112:]
        path = tmp_path / "v.nii"
        path.write_bytes(blob)
        with pytest.raises(NiftiFormatError):
            read_volume(path)

    def test_vox_offset_gap_honored(self, tmp_path):
        data = rng_data(np.int16)
        path = tmp_path / "v.nii"
        path.write_bytes(raw_nifti(data, vox_offset=400))
        np.testing.assert_array_equal(read_volume(path).data, data)


class TestWriter:
    @pytest.mark.parametrize("dtype", [np.uint8, np.int16, np.float32, np.float64])
    @pytest.mark.parametrize("suffix", [".nii", ".nii.gz"])
    def test_round_trip(self, tmp_path, dtype, suffix):
        data = rng_data(dtype, shape=(5, 4, 3), seed=3)
        vol = Volume(data, spacing=(0.5, 0.75, 2.0), origin=(-10.0, 4.5, 0.25))
        path = tmp_path / f"v{suffix}"
        write_volume(vol, path)
        back = read_volume(path)
        assert back.data.dtype == dtype
        np.testing.assert_array_equal(back.data, data)
        assert back.spacing == pytest.approx(vol.spacing)
        assert back.origin == pytest.approx(vol.origin)

    def test_gzip_output_reproducible(self, tmp_path):
        # byte-identical rewrites require a pinned gzip mtime
        vol = Volume(rng_data(np.float32), spacing=(1.0, 1.0, 1.0))
        a, b = tmp_path / "a.nii.gz", tmp_path / "b.nii.gz"
        write_volume(vol, a)
        write_volume(vol, b)
        assert a.read_bytes() == b.read_bytes()

    def test_written_header_fields(self, tmp_path):
        vol = Volume(rng_data(np.int16), spacing=(2.0, 3.0, 4.0), origin=(1.0, 2.0, 3.0))
        path = tmp_path / "v.nii"
        write_volume(vol, path)
        blob = path.read_bytes()
        assert struct.unpack_from("<i", blob, 0)[0] == 348
        assert blob[344:348] == b"n+1\x00"
        assert struct.unpack_from("<f", blob, 108)[0] >= 352.0
        dim = struct.unpack_from("<8h", blob, 40)
        assert dim[0] == 3 and dim[1:4] == vol.shape

    def test_big_endian_write_reads_back(self, tmp_path):
        vol = Volume(rng_data(np.float64), spacing=(1.5, 1.5, 1.5))
        path = tmp_path / "v.nii"
        write_volume(vol, path, byteorder=">")
        assert struct.unpack_from(">i", path.read_bytes(), 0)[0] == 348
        np.testing.assert_array_equal(read_volume(path).data, vol.data)

    def test_writer_rejects_unsupported_dtype(self, tmp_path):
        with pytest.raises(UnsupportedDatatypeError):
            write_volume(Volume(np.zeros((2, 2, 2), dtype=np.int32)), tmp_path / "v.nii")


def test_volume_data_read_only():
    vol = Volume(np.zeros((2, 2, 2), dtype=np.uint8))
    with pytest.raises(ValueError):
        vol.data[0, 0, 0] = 1
