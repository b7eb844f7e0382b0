"""Run configuration documents.

A run configuration is a JSON document with the sections nv, probe, timing,
sample, scan, resolution, calibration, delay_sweep, output and seed. Every
physical quantity is written ``{"value": ..., "unit": ...}``; unknown
sections or keys are rejected. All values are converted to SI and checked
against the engine preconditions when the document is loaded.
"""

import copy
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from app_utils.config_manager import get_config_manager
from app_utils.errors import ConfigError, NVGradError, OutputIOError
from app_utils.units import quantity_to_si, to_si
from nv_engine.fields import (BlobSpec, ChargeMap, FieldConvention, make_gaussian_blobs,
                              make_line_defect, make_striped_domains, zero_charge)
from nv_engine.imaging import ScanGrid
from nv_engine.probe import EchoTiming, OscillationMode, OscillationSpec, Projection
from nv_engine.spin import NVParams, ReadoutAxis, nv_rotation_from_angles

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# key kinds: a dimension name for {"value", "unit"} quantities, "list:<dimension>"
# for {"value": [...], "unit"} lists, or int, float, str, bool, blobs
SCHEMA: Dict[str, Dict[str, str]] = {
    "nv": {
        "d_gs": "frequency",
        "gamma_e": "gyromagnetic",
        "d_perp": "dipole",
        "b_perp": "magnetic_field",
        "phi_b": "angle",
        "theta": "angle",
        "phi": "angle",
    },
    "probe": {
        "mode": "str",
        "amplitude": "length",
        "frequency": "frequency",
        "phase": "angle",
        "z_nv": "length",
        "projection": "str",
        "convention": "str",
        "samples": "int",
    },
    "timing": {
        "tau": "time",
        "tau_e": "time",
        "tau_w": "time",
        "readout_axis": "str",
    },
    "sample": {
        "model": "str",
        "path": "str",
        "period": "length",
        "sigma0": "surface_charge",
        "extent": "length",
        "resolution": "length",
        "smoothing": "length",
        "line_density": "line_charge",
        "n": "int",
        "blobs": "blobs",
    },
    "scan": {
        "extent": "length",
        "pixels": "int",
        "center_x": "length",
        "center_y": "length",
        "output": "str",
        "signal": "str",
    },
    "resolution": {
        "z_values": "list:length",
        "a_values": "list:length",
        "metric": "str",
        "target_edge_width": "length",
    },
    "calibration": {
        "profile_width": "length",
        "profile_background": "counts",
        "profile_peak": "counts",
        "drive_voltages": "list:voltage",
        "profile_points": "int",
        "amplitudes": "list:length",
        "side": "str",
        "trace_periods": "int",
        "bins_per_period": "int",
        "count_scale": "float",
        "trials": "int",
        "shot_noise": "bool",
        "trace_path": "str",
        "profile_path": "str",
    },
    "delay_sweep": {
        "e_ac": "electric_field",
        "points": "int",
        "span": "time",
        "noise_sine": "float",
        "noise_cosine": "float",
        "trials": "int",
    },
    "output": {
        "directory": "str",
        "formats": "list:str",
    },
}

_BLOB_KEYS = {"x": "length", "y": "length", "width": "length", "sigma0": "surface_charge"}

SAMPLE_MODELS = {
    "striped": ("period", "sigma0", "extent", "resolution"),
    "line_defect": ("line_density", "resolution", "extent"),
    "blobs": ("n", "resolution", "blobs"),
    "zero": ("n", "resolution"),
    "file": ("path",),
}


def _check_int(value: Any, key: str, minimum: int = 0) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ConfigError(f"{key}: expected an integer >= {minimum}, got {value!r}")
    return value


def _convert(kind: str, value: Any, key: str) -> Any:
    """Validate one raw entry and return its SI/plain value"""
    if kind == "int":
        return _check_int(value, key)
    if kind == "float":
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
            raise ConfigError(f"{key}: expected a finite number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true or false, got {value!r}")
        return value
    if kind == "blobs":
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{key}: expected a non-empty list of blobs")
        blobs = []
        for i, blob in enumerate(value):
            if not isinstance(blob, dict) or set(blob) != set(_BLOB_KEYS):
                raise ConfigError(f"{key}[{i}]: blobs need exactly the keys {sorted(_BLOB_KEYS)}")
            blobs.append(BlobSpec(**{name: quantity_to_si(blob[name], dim, f"{key}[{i}].{name}")
                                     for name, dim in _BLOB_KEYS.items()}))
        return blobs
    if kind == "list:str":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{key}: expected a list of strings, got {value!r}")
        return list(value)
    if kind.startswith("list:"):
        dimension = kind.split(":", 1)[1]
        if (not isinstance(value, dict) or set(value) != {"value", "unit"}
                or not isinstance(value["value"], list) or not value["value"]):
            raise ConfigError(f"{key}: expected {{\"value\": [...], \"unit\": ...}}, got {value!r}")
        try:
            return [to_si(v, value["unit"], dimension) for v in value["value"]]
        except ConfigError as e:
            raise ConfigError(f"{key}: {e}") from e
    return quantity_to_si(value, kind, key)


def _parse_section(document: Dict[str, Any], section: str) -> Dict[str, Any]:
    raw = document.get(section, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"Section '{section}' must be an object")
    schema = SCHEMA[section]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"Unknown key(s) in '{section}': {', '.join(unknown)}")
    return {key: _convert(schema[key], value, f"{section}.{key}") for key, value in raw.items()}


@dataclass(frozen=True)
class ProbeSettings:
    mode: OscillationMode
    amplitude: float
    frequency: float
    phase: float
    z_nv: float
    projection: Projection
    convention: FieldConvention
    samples: Optional[int]

    def spec(self, x: float = 0.0, y: float = 0.0) -> OscillationSpec:
        return OscillationSpec.for_mode(self.mode, (x, y, self.z_nv), self.amplitude,
                                        self.frequency, self.phase)


@dataclass(frozen=True)
class SampleSettings:
    model: str
    values: Dict[str, Any]

    def build(self, base_dir: Optional[Path] = None) -> ChargeMap:
        """Charge map for the configured model"""
        v = self.values
        if self.model == "striped":
            return make_striped_domains(v["period"], v["sigma0"], v["extent"], v["resolution"],
                                        v.get("smoothing", 0.0))
        if self.model == "line_defect":
            return make_line_defect(v["line_density"], v["resolution"], v["extent"])
        if self.model == "blobs":
            return make_gaussian_blobs(v["blobs"], v["n"], v["resolution"])
        if self.model == "zero":
            return zero_charge(v["n"], v["resolution"])

        from data_manager.charge_map_io import load_charge_map

        path = Path(v["path"])
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        return load_charge_map(path)


@dataclass(frozen=True)
class ScanSettings:
    extent: float
    pixels: int
    center: Tuple[float, float]
    output: str
    signal: str

    @property
    def grid(self) -> ScanGrid:
        return ScanGrid.square(self.extent, self.pixels, self.center)


@dataclass(frozen=True)
class OutputSettings:
    directory: Path
    formats: List[str]


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; ``document`` keeps the raw loaded form"""
    document: Dict[str, Any]
    nv: NVParams
    probe: ProbeSettings
    timing: EchoTiming
    sample: Optional[SampleSettings]
    scan: Optional[ScanSettings]
    resolution: Dict[str, Any]
    calibration: Dict[str, Any]
    delay_sweep: Dict[str, Any]
    output: OutputSettings
    seed: int
    base_dir: Optional[Path] = field(default=None, compare=False)

    @classmethod
    def from_document(cls, document: Any, base_dir: Optional[Path] = None) -> "RunConfig":
        """Validate a parsed document"""
        if not isinstance(document, dict):
            raise ConfigError("Run configuration must be a JSON object")
        unknown = sorted(set(document) - set(SCHEMA) - {"seed"})
        if unknown:
            raise ConfigError(f"Unknown section(s): {', '.join(unknown)}")
        sections = {name: _parse_section(document, name) for name in SCHEMA}
        seed = _check_int(document.get("seed", 0), "seed")

        try:
            nv = _build_nv(sections["nv"])
            probe = _build_probe(sections["probe"])
            probe.spec()
            timing = _build_timing(sections["timing"], probe.frequency)
            sample = _build_sample(sections["sample"])
            scan = _build_scan(sections["scan"])
            resolution = _check_resolution(sections["resolution"])
            calibration = _check_calibration(sections["calibration"])
            delay_sweep = _check_delay_sweep(sections["delay_sweep"])
            output = _build_output(sections["output"])
        except ConfigError:
            raise
        except (NVGradError, ValueError) as e:
            raise ConfigError(f"Invalid run configuration: {e}") from e

        return cls(copy.deepcopy(document), nv, probe, timing, sample, scan, resolution,
                   calibration, delay_sweep, output, seed, base_dir)

    def to_document(self) -> Dict[str, Any]:
        """The loaded document, values and units exactly as given"""
        return copy.deepcopy(self.document)

    def with_overrides(self, seed: Optional[int] = None, directory: Optional[PathLike] = None,
                       formats: Optional[Sequence[str]] = None) -> "RunConfig":
        """New config with command-line overrides applied to the document"""
        document = self.to_document()
        if seed is not None:
            document["seed"] = seed
        if directory is not None or formats is not None:
            output = document.setdefault("output", {})
            if directory is not None:
                output["directory"] = str(directory)
            if formats is not None:
                output["formats"] = list(formats)
        return RunConfig.from_document(document, self.base_dir)


def _build_nv(values: Dict[str, Any]) -> NVParams:
    config = get_config_manager()
    theta_deg, phi_deg = config.get_nv_angles_deg()
    theta = values.get("theta", math.radians(theta_deg))
    phi = values.get("phi", math.radians(phi_deg))
    return NVParams(
        d_gs=values.get("d_gs", config.get_d_gs()),
        gamma_e=values.get("gamma_e", config.get_gamma_e()),
        d_perp=values.get("d_perp", config.get_d_perp()),
        b_perp=values.get("b_perp", 0.0),
        phi_b=values.get("phi_b"),
        nv_rotation=nv_rotation_from_angles(theta, phi),
    )


def _build_probe(values: Dict[str, Any]) -> ProbeSettings:
    samples = values.get("samples")
    minimum = int(get_config_manager().get("numerics.min_trajectory_samples"))
    if samples is not None and samples < minimum:
        raise ConfigError(f"probe.samples must be at least {minimum}, got {samples}")
    return ProbeSettings(
        mode=OscillationMode(values.get("mode", OscillationMode.INTERMITTENT.value)),
        amplitude=values.get("amplitude", 0.8e-9),
        frequency=values.get("frequency", 180e3),
        phase=values.get("phase", 0.0),
        z_nv=values.get("z_nv", 17e-9),
        projection=Projection(values.get("projection", Projection.NV_TRANSVERSE_COS.value)),
        convention=FieldConvention(values.get("convention", FieldConvention.PAPER.value)),
        samples=samples,
    )


def _build_timing(values: Dict[str, Any], frequency: float) -> EchoTiming:
    return EchoTiming(
        f=frequency,
        tau=values.get("tau"),
        tau_e=values.get("tau_e", 0.0),
        tau_w=values.get("tau_w", 0.0),
        readout_axis=ReadoutAxis(values.get("readout_axis", ReadoutAxis.Y_PI_HALF.value)),
    )


def _build_sample(values: Dict[str, Any]) -> Optional[SampleSettings]:
    if not values:
        return None
    model = values.get("model")
    if model not in SAMPLE_MODELS:
        raise ConfigError(f"sample.model must be one of {sorted(SAMPLE_MODELS)}, got {model!r}")
    required = SAMPLE_MODELS[model]
    allowed = set(required) | {"model"} | ({"smoothing"} if model == "striped" else set())
    missing = [key for key in required if key not in values]
    extra = sorted(set(values) - allowed)
    if missing:
        raise ConfigError(f"sample model '{model}' needs: {', '.join(missing)}")
    if extra:
        raise ConfigError(f"sample model '{model}' does not take: {', '.join(extra)}")
    settings = SampleSettings(model, {k: v for k, v in values.items() if k != "model"})
    if model != "file":
        settings.build()
    return settings


def _build_scan(values: Dict[str, Any]) -> Optional[ScanSettings]:
    if not values:
        return None
    if "extent" not in values or "pixels" not in values:
        raise ConfigError("scan needs extent and pixels")
    settings = ScanSettings(
        extent=values["extent"],
        pixels=_check_int(values["pixels"], "scan.pixels", 1),
        center=(values.get("center_x", 0.0), values.get("center_y", 0.0)),
        output=values.get("output", "e_ac"),
        signal=values.get("signal", "signed"),
    )
    if settings.output not in ("e_ac", "phase"):
        raise ConfigError(f"scan.output must be 'e_ac' or 'phase', got {settings.output!r}")
    if settings.signal not in ("signed", "magnitude"):
        raise ConfigError(f"scan.signal must be 'signed' or 'magnitude', got {settings.signal!r}")
    ScanGrid.square(settings.extent, settings.pixels, settings.center)
    return settings


def _check_positive_list(values: Dict[str, Any], key: str, section: str) -> None:
    if key in values and any(not (v > 0) for v in values[key]):
        raise ConfigError(f"{section}.{key}: all entries must be positive")


def _check_resolution(values: Dict[str, Any]) -> Dict[str, Any]:
    for key in ("z_values", "a_values"):
        _check_positive_list(values, key, "resolution")
    metric = values.get("metric")
    if metric is not None and metric not in ("edge_width_10_90", "fwhm",
                                             "shear_sharpest_transition_width"):
        raise ConfigError(f"resolution.metric: unknown metric {metric!r}")
    if "target_edge_width" in values and not (values["target_edge_width"] > 0):
        raise ConfigError("resolution.target_edge_width must be positive")
    return values


def _check_calibration(values: Dict[str, Any]) -> Dict[str, Any]:
    _check_positive_list(values, "amplitudes", "calibration")
    if "profile_width" in values and not (values["profile_width"] > 0):
        raise ConfigError("calibration.profile_width must be positive")
    if values.get("side", "left") not in ("left", "right"):
        raise ConfigError(f"calibration.side must be 'left' or 'right', got {values['side']!r}")
    if ("trace_path" in values) != ("profile_path" in values):
        raise ConfigError("calibration.trace_path and profile_path must be given together")
    if "count_scale" in values and not (values["count_scale"] > 0):
        raise ConfigError("calibration.count_scale must be positive")
    return values


def _check_delay_sweep(values: Dict[str, Any]) -> Dict[str, Any]:
    for key in ("noise_sine", "noise_cosine"):
        if key in values and values[key] < 0:
            raise ConfigError(f"delay_sweep.{key} must be non-negative")
    if "points" in values and values["points"] < 2:
        raise ConfigError("delay_sweep.points must be at least 2")
    if "span" in values and not (values["span"] > 0):
        raise ConfigError("delay_sweep.span must be positive")
    return values


def _build_output(values: Dict[str, Any]) -> OutputSettings:
    available = get_config_manager().get_available_formats()
    formats = values.get("formats", ["text"])
    bad = [f for f in formats if f not in available]
    if bad:
        raise ConfigError(f"output.formats: unknown format(s) {bad}; available: {available}")
    return OutputSettings(Path(values.get("directory", "nvgrad_output")), formats)


def load_run_config(path: PathLike) -> RunConfig:
    """Read and validate a run configuration file"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise OutputIOError(f"Failed to read config {path}: {e}") from e
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e}") from e
    config = RunConfig.from_document(document, base_dir=path.resolve().parent)
    logger.debug("Loaded run configuration %s", path)
    return config


def dump_run_config(config: RunConfig, path: PathLike) -> Path:
    """Write the configuration document back to disk"""
    path = Path(path)
    try:
        path.write_text(json.dumps(config.to_document(), indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputIOError(f"Failed to write config {path}: {e}") from e
    return path
