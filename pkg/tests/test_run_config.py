import json

import pytest

from app_utils.errors import ConfigError, OutputIOError
from command_interface.run_config import RunConfig, dump_run_config, load_run_config
from nv_engine.probe import OscillationMode, Projection

NM = 1e-9

DOCUMENT = {
    "seed": 7,
    "nv": {"phi_b": {"value": 30, "unit": "deg"}},
    "probe": {
        "mode": "shear_x",
        "amplitude": {"value": 2, "unit": "nm"},
        "frequency": {"value": 32, "unit": "kHz"},
        "z_nv": {"value": 25, "unit": "nm"},
        "projection": "e_z",
    },
    "timing": {"tau_e": {"value": 0.7, "unit": "us"}},
    "sample": {
        "model": "line_defect",
        "line_density": {"value": 1e-10, "unit": "C/m"},
        "resolution": {"value": 1, "unit": "nm"},
        "extent": {"value": 400, "unit": "nm"},
    },
    "scan": {"extent": {"value": 64, "unit": "nm"}, "pixels": 16},
    "resolution": {"z_values": {"value": [10, 20], "unit": "nm"}},
    "output": {"directory": "results", "formats": ["text", "svg"]},
}


def with_entry(section, key, value):
    document = json.loads(json.dumps(DOCUMENT))
    document.setdefault(section, {})[key] = value
    return document


def test_quantities_are_converted_to_si():
    config = RunConfig.from_document(DOCUMENT)
    assert config.seed == 7
    assert config.probe.mode is OscillationMode.SHEAR_X
    assert config.probe.projection is Projection.E_Z
    assert config.probe.amplitude == pytest.approx(2 * NM)
    assert config.probe.frequency == pytest.approx(32e3)
    assert config.timing.f == config.probe.frequency
    assert config.timing.tau_e == pytest.approx(0.7e-6)
    assert config.nv.phi_b == pytest.approx(0.5235987755982988)
    assert config.resolution["z_values"] == pytest.approx([10 * NM, 20 * NM])
    assert config.scan.grid.nx == 16
    assert config.sample.build().nx == 401


def test_empty_document_uses_defaults():
    config = RunConfig.from_document({})
    assert config.probe.mode is OscillationMode.INTERMITTENT
    assert config.probe.amplitude == pytest.approx(0.8 * NM)
    assert config.probe.z_nv == pytest.approx(17 * NM)
    assert config.timing.tau == pytest.approx(1 / 180e3)
    assert config.nv.phi_b is None
    assert config.sample is None and config.scan is None
    assert config.output.formats == ["text"]


@pytest.mark.parametrize("document", [
    {"probes": {}},
    with_entry("probe", "speed", {"value": 1, "unit": "nm"}),
    with_entry("probe", "amplitude", {"value": 2, "unit": "kHz"}),
    with_entry("probe", "amplitude", {"value": 2, "unit": "furlong"}),
    with_entry("probe", "amplitude", 2),
    with_entry("probe", "samples", 16),
    with_entry("scan", "pixels", 0),
    with_entry("sample", "model", "striped"),
    with_entry("sample", "n", 4),
    with_entry("output", "formats", ["png"]),
    with_entry("calibration", "side", "middle"),
    with_entry("calibration", "trace_path", "trace.txt"),
    with_entry("resolution", "metric", "area"),
    with_entry("delay_sweep", "noise_sine", -0.1),
    {"seed": -1},
    [],
])
def test_invalid_documents_are_rejected(document):
    with pytest.raises(ConfigError):
        RunConfig.from_document(document)


def test_intermittent_amplitude_must_stay_above_the_surface():
    document = with_entry("probe", "mode", "intermittent")
    document["probe"]["amplitude"] = {"value": 30, "unit": "nm"}
    with pytest.raises(ConfigError):
        RunConfig.from_document(document)


def test_document_round_trip(tmp_path):
    config = RunConfig.from_document(DOCUMENT)
    assert config.to_document() == DOCUMENT
    path = dump_run_config(config, tmp_path / "run_config.json")
    assert load_run_config(path).to_document() == DOCUMENT


def test_overrides_rewrite_the_document(tmp_path):
    config = RunConfig.from_document(DOCUMENT).with_overrides(3, tmp_path, ["binary"])
    assert config.seed == 3
    assert config.output.directory == tmp_path
    assert config.output.formats == ["binary"]
    assert config.to_document()["output"]["directory"] == str(tmp_path)
    assert DOCUMENT["output"]["directory"] == "results"


def test_load_errors(tmp_path):
    with pytest.raises(OutputIOError):
        load_run_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(broken)


def test_file_samples_resolve_next_to_the_config(tmp_path):
    document = {"sample": {"model": "file", "path": "charge.txt"}}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    config = load_run_config(path)
    assert config.base_dir == tmp_path.resolve()
    with pytest.raises(OutputIOError):
        config.sample.build(config.base_dir)
