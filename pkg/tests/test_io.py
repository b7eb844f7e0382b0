import numpy as np
import pytest

from app_utils.errors import OutputIOError, ValidationError
from data_manager.charge_map_io import load_charge_map, read_raster_text, save_charge_map
from data_manager.image_io import load_scan_image, save_scan_image
from data_manager.table_io import read_table, write_table
from nv_engine.fields import ChargeMap
from nv_engine.imaging import ScanImage

NM = 1e-9


@pytest.fixture
def charge(rng):
    return ChargeMap(rng.normal(size=(4, 6)) * 1e-3, 2 * NM, 3 * NM, (5 * NM, -7 * NM))


@pytest.fixture
def image(rng):
    meta = {"mode": "intermittent", "z_nv": 20 * NM, "amplitude": 5 * NM, "phi_b": 0.25}
    return ScanImage(rng.normal(size=(5, 3)), 4 * NM, (-8 * NM, -4 * NM), meta)


def test_text_charge_map_round_trip(charge, tmp_path):
    path = save_charge_map(charge, tmp_path / "charge.txt")
    loaded = load_charge_map(path)
    np.testing.assert_array_equal(loaded.sigma, charge.sigma)
    assert (loaded.dx, loaded.dy) == (charge.dx, charge.dy)
    assert loaded.origin == charge.origin


def test_binary_charge_map_is_centered(rng, tmp_path):
    square = ChargeMap(rng.normal(size=(4, 6)), 2 * NM, 2 * NM, (5 * NM, 5 * NM))
    loaded = load_charge_map(save_charge_map(square, tmp_path / "charge.bin", "binary"))
    np.testing.assert_array_equal(loaded.sigma, square.sigma)
    assert loaded.dx == loaded.dy == 2 * NM
    assert loaded.origin == pytest.approx((-3 * NM, -5 * NM))


def test_binary_needs_square_pixels(charge, tmp_path):
    with pytest.raises(ValidationError):
        save_charge_map(charge, tmp_path / "charge.bin", "binary")
    with pytest.raises(ValidationError):
        save_charge_map(charge, tmp_path / "charge.xyz", "xyz")


def test_malformed_rasters_are_rejected(tmp_path):
    wrong_header = tmp_path / "wrong.txt"
    wrong_header.write_text("# a b c\n# 1 2 3\n1 2\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        read_raster_text(wrong_header)

    short = tmp_path / "short.txt"
    short.write_text("# nx ny dx dy x0 y0\n# 3 2 1 1 0 0\n1 2\n3 4\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_charge_map(short)

    truncated = tmp_path / "truncated.bin"
    truncated.write_bytes(b"\x00" * 10)
    with pytest.raises(ValidationError):
        load_charge_map(truncated)

    with pytest.raises(OutputIOError):
        load_charge_map(tmp_path / "missing.txt")


def test_table_round_trip(tmp_path):
    data = np.array([[0.0, 0.5], [1e-7, 0.25]])
    path = write_table(tmp_path / "sweep.txt", [("tau_w", "s"), ("p_s_plus", "1")], data,
                       meta={"model": "sine", "points": 2})
    table = read_table(path)
    assert table.names == ["tau_w", "p_s_plus"]
    assert table.units == ["s", "1"]
    assert table.meta == {"model": "sine", "points": "2"}
    np.testing.assert_array_equal(table.column("p_s_plus"), [0.5, 0.25])
    with pytest.raises(KeyError):
        table.column("p_c_plus")


def test_table_column_mismatch(tmp_path):
    with pytest.raises(ValidationError):
        write_table(tmp_path / "bad.txt", [("x", "m")], np.zeros((3, 2)))
    headerless = tmp_path / "headerless.txt"
    headerless.write_text("1 2\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        read_table(headerless)


def test_repeated_writes_are_byte_identical(image, tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    first = save_scan_image(image, tmp_path / "a" / "scan", ["binary", "text"])
    second = save_scan_image(image, tmp_path / "b" / "scan", ["binary", "text"])
    assert [p.name for p in first] == ["scan.bin", "scan.txt", "scan.json"]
    for a, b in zip(first, second):
        assert a.read_bytes() == b.read_bytes()


def test_scan_image_round_trip(image, tmp_path):
    save_scan_image(image, tmp_path / "scan", ["binary"])
    loaded = load_scan_image(tmp_path / "scan")
    np.testing.assert_array_equal(loaded.values, image.values)
    assert loaded.pitch == image.pitch
    assert loaded.origin == image.origin
    assert loaded.meta == image.meta

    save_scan_image(image, tmp_path / "text_only", ["text"])
    np.testing.assert_array_equal(load_scan_image(tmp_path / "text_only").values, image.values)


def test_scan_image_needs_its_header(tmp_path):
    with pytest.raises(OutputIOError):
        load_scan_image(tmp_path / "nothing")
    with pytest.raises(ValidationError):
        save_scan_image(ScanImage(np.zeros((2, 2)), 1.0, (0.0, 0.0)), tmp_path / "x", ["png"])
