import json

import pytest

from app_utils.config_manager import get_config_manager
from app_utils.errors import OutputIOError
from command_interface import cli, commands
from command_interface.acceptance import CheckResult
from data_manager.table_io import read_table

PSF_DOCUMENT = {
    "probe": {
        "mode": "intermittent",
        "amplitude": {"value": 0.8, "unit": "nm"},
        "z_nv": {"value": 17, "unit": "nm"},
    },
}


def write_config(directory, document):
    path = directory / "config.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def test_psf_run_writes_tables_and_figure(tmp_path, out_dir):
    config = write_config(tmp_path, PSF_DOCUMENT)
    code = cli.main(["psf", "--config", str(config), "--out", str(out_dir),
                     "--format", "text", "--format", "svg"])
    assert code == cli.EXIT_OK
    names = {p.name for p in out_dir.iterdir()}
    assert {"psf.txt", "psf_report.txt", "psf.svg", "run_config.json"} <= names
    assert get_config_manager().get_lock_filename() not in names

    profile = read_table(out_dir / "psf.txt")
    assert profile.data.shape[0] == 513
    report = read_table(out_dir / "psf_report.txt")
    assert float(report.meta["edge_width_10_90_m"]) > 0
    recorded = json.loads((out_dir / "run_config.json").read_text(encoding="utf-8"))
    assert recorded["output"]["directory"] == str(out_dir)


def test_repeated_runs_are_byte_identical(tmp_path):
    config = write_config(tmp_path, PSF_DOCUMENT)
    for name in ("first", "second"):
        assert cli.main(["psf", "--config", str(config), "--out", str(tmp_path / name),
                         "--format", "text", "--format", "svg"]) == cli.EXIT_OK
    for file_name in ("psf.txt", "psf_report.txt", "psf.svg"):
        assert ((tmp_path / "first" / file_name).read_bytes()
                == (tmp_path / "second" / file_name).read_bytes())


@pytest.mark.parametrize("document", [
    {"probe": {"amplitude": {"value": 0.8, "unit": "kHz"}}},
    {"unknown": {}},
])
def test_bad_config_exits_with_config_code(tmp_path, out_dir, document):
    config = write_config(tmp_path, document)
    assert cli.main(["psf", "--config", str(config), "--out", str(out_dir)]) == cli.EXIT_CONFIG


def test_scan_without_its_sections_is_a_config_error(tmp_path, out_dir):
    config = write_config(tmp_path, PSF_DOCUMENT)
    assert cli.main(["scan", "--config", str(config), "--out", str(out_dir)]) == cli.EXIT_CONFIG


def test_negative_seed_and_bad_log_level(tmp_path, out_dir):
    config = write_config(tmp_path, PSF_DOCUMENT)
    assert cli.main(["psf", "--config", str(config), "--out", str(out_dir),
                     "--seed", "-3"]) == cli.EXIT_CONFIG
    assert cli.main(["psf", "--config", str(config), "--out", str(out_dir),
                     "--log-level", "chatty"]) == cli.EXIT_CONFIG


def test_missing_config_file_is_an_io_error(tmp_path, out_dir):
    assert cli.main(["psf", "--config", str(tmp_path / "nope.json"),
                     "--out", str(out_dir)]) == cli.EXIT_IO


def test_locked_output_directory(tmp_path, out_dir):
    config = write_config(tmp_path, PSF_DOCUMENT)
    lock = out_dir / get_config_manager().get_lock_filename()
    lock.write_text("1\n", encoding="utf-8")
    assert cli.main(["psf", "--config", str(config), "--out", str(out_dir)]) == cli.EXIT_IO
    assert lock.exists()


def test_output_lock_is_exclusive(out_dir):
    with commands.OutputLock(out_dir):
        with pytest.raises(OutputIOError):
            with commands.OutputLock(out_dir):
                pass
    assert not (out_dir / get_config_manager().get_lock_filename()).exists()


def test_subcommand_is_required():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args([])


def failing_check():
    raise RuntimeError("boom")


def test_repro_report(monkeypatch, out_dir):
    checks = {
        "quick": lambda: CheckResult("quick", True, "fine", 0.0),
        "broken": failing_check,
    }
    monkeypatch.setattr(commands, "acceptance_checks", lambda seed: {"quick": checks["quick"]})
    assert cli.main(["repro", "--out", str(out_dir)]) == cli.EXIT_OK
    report = (out_dir / "report.txt").read_text(encoding="utf-8")
    assert report.startswith("seed: 0\n")
    assert "PASS quick: fine" in report

    monkeypatch.setattr(commands, "acceptance_checks", lambda seed: checks)
    assert cli.main(["repro", "--out", str(out_dir), "--seed", "5"]) == cli.EXIT_NUMERIC
    report = (out_dir / "report.txt").read_text(encoding="utf-8")
    assert "FAIL broken: raised RuntimeError: boom" in report
