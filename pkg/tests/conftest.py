import pytest

from app_utils.seeding import derive_rng
from nv_engine.spin import NVParams


@pytest.fixture
def params():
    """Default NV parameters with the bias azimuth fixed at zero"""
    return NVParams.from_defaults(phi_b=0.0)


@pytest.fixture
def auto_params():
    """Default NV parameters with phi_b left for alignment"""
    return NVParams.from_defaults()


@pytest.fixture
def rng():
    return derive_rng(1234, "tests")


@pytest.fixture
def out_dir(tmp_path):
    directory = tmp_path / "out"
    directory.mkdir()
    return directory