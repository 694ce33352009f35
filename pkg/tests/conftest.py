import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synth import build_ranking_set, build_sphere_benchmark  # noqa: E402


@pytest.fixture(scope="session")
def sphere_benchmark(tmp_path_factory):
    return build_sphere_benchmark(tmp_path_factory.mktemp("spheres"))


@pytest.fixture(scope="session")
def ranking_set(tmp_path_factory):
    return build_ranking_set(tmp_path_factory.mktemp("rankset"))
