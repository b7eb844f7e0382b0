"""Subcommand implementations.

Every command takes a validated ``RunConfig``, writes its artifacts into the
configured output directory and returns the paths it wrote. The directory
is locked for the duration of a command.
"""

import logging
import os
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from app_utils.config_manager import get_config_manager
from app_utils.errors import ConfigError, DegenerateDataError, NumericError, OutputIOError
from app_utils.seeding import derive_rng
from app_utils.threading_helper import get_thread_manager, run_in_background
from command_interface import svg_renderer
from command_interface.acceptance import CheckResult, acceptance_checks, timed
from command_interface.run_config import RunConfig, dump_run_config
from data_manager.charge_map_io import save_charge_map, write_raster_binary, write_raster_text
from data_manager.image_io import save_scan_image
from data_manager.table_io import read_table, write_table
from nv_engine.calibration import (GaussianProfile, PhotonTrace, SQRT_HALF_PI, calibrate_amplitude,
                                   delay_sweep, fit_amplitude_vs_voltage, fit_delay_sweep,
                                   half_maximum_point, synthesize_photon_trace,
                                   synthesize_profile_samples)
from nv_engine.fields import (AnalyticLineChargeSampler, default_sampler_for, describe)
from nv_engine.imaging import (LineProfile, dominant_period, extract_profile,
                               find_distance_for_edge_width, fwhm, psf_delta_line,
                               resolution_map, resolution_report, simulate_scan)
from nv_engine.spin import readout_populations, echo_phase_closed

logger = logging.getLogger(__name__)

NM = 1e-9


class OutputLock:
    """Exclusive lock file in an output directory"""

    def __init__(self, directory: Path):
        self.directory = directory
        self.path = directory / get_config_manager().get_lock_filename()

    def __enter__(self) -> "OutputLock":
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as e:
            raise OutputIOError(
                f"Output directory {self.directory} is in use (lock file {self.path})") from e
        except OSError as e:
            raise OutputIOError(f"Failed to create lock file {self.path}: {e}") from e
        with os.fdopen(fd, "w") as f:
            f.write(f"{os.getpid()}\n")
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        try:
            self.path.unlink()
        except FileNotFoundError:
            logger.warning("Lock file %s vanished before release", self.path)


def _raster_formats(config: RunConfig) -> List[str]:
    return [fmt for fmt in config.output.formats if fmt in ("text", "binary")]


def _write_raster(directory: Path, name: str, values: np.ndarray, dx: float, dy: float,
                  origin, formats: List[str]) -> List[Path]:
    written = []
    if "text" in formats:
        written.append(write_raster_text(directory / f"{name}.txt", values, dx, dy, origin))
    if "binary" in formats:
        written.append(write_raster_binary(directory / f"{name}.bin", values, dx))
    return written


def _profile_table(path: Path, profile: LineProfile, meta=None) -> Path:
    return write_table(path, [(profile.axis, "m"), ("signal", profile.unit)],
                       np.column_stack([profile.positions, profile.values]), meta)


def _write_summary(path: Path, summary: Dict[str, object]) -> Path:
    """key: value metadata file with no data rows"""
    return write_table(path, [("value", "1")], np.empty((0, 1)), summary)


def _svg(config: RunConfig, name: str):
    return svg_renderer.figure_path(config.output.directory, name, config.output.formats)


def _require_sample(config: RunConfig):
    if config.sample is None:
        raise ConfigError("This command needs a 'sample' section")
    return config.sample.build(config.base_dir)


def cmd_field(config: RunConfig) -> List[Path]:
    """Field maps of the sample at the NV height"""
    out = config.output.directory
    charge = _require_sample(config)
    probe = config.probe
    logger.info("Field maps for %s at z = %g m", describe(charge), probe.z_nv)
    sampler = default_sampler_for(charge, probe.z_nv, probe.convention)
    fields = sampler.grid_field()
    formats = _raster_formats(config)

    written = []
    if "binary" in formats and charge.dx != charge.dy:
        formats = [fmt for fmt in formats if fmt != "binary"]
        logger.warning("Binary rasters need square pixels; writing text only")
    for fmt in formats:
        suffix = "txt" if fmt == "text" else "bin"
        written.append(save_charge_map(charge, out / f"charge_map.{suffix}", fmt))
    for i, name in enumerate(("field_x", "field_y", "field_z")):
        written += _write_raster(out, name, fields[i], charge.dx, charge.dy, charge.origin, formats)

    row = charge.ny // 2
    meta = {"model": config.sample.model, "z_nv_m": probe.z_nv,
            "convention": probe.convention.value, "row_y_m": float(charge.y_coords[row])}
    for i, name in enumerate(("e_x", "e_y", "e_z")):
        meta[f"{name}_min"] = float(fields[i].min())
        meta[f"{name}_max"] = float(fields[i].max())
    try:
        meta["dominant_period_m"] = dominant_period(LineProfile(charge.x_coords, fields[2][:, row]))
    except DegenerateDataError as e:
        logger.info("No dominant period in E_z: %s", e)

    columns = [("x", "m"), ("e_x", "V/m"), ("e_z", "V/m")]
    data = [charge.x_coords, fields[0][:, row], fields[2][:, row]]
    if config.sample.model == "line_defect":
        analytic = AnalyticLineChargeSampler(config.sample.values["line_density"],
                                             convention=probe.convention)
        points = np.stack([charge.x_coords, np.full(charge.nx, charge.y_coords[row]),
                           np.full(charge.nx, probe.z_nv)], axis=-1)
        reference = analytic.field(points)
        columns += [("e_x_analytic", "V/m"), ("e_z_analytic", "V/m")]
        data += [reference[:, 0], reference[:, 2]]
    written.append(write_table(out / "field_profile.txt", columns, np.column_stack(data), meta))

    svg = _svg(config, "field_maps")
    if svg:
        written.append(svg_renderer.render_field_components(fields, charge.x_coords,
                                                            charge.y_coords, svg,
                                                            f"Stray field at z = {probe.z_nv / NM:g} nm"))
    return written


def cmd_scan(config: RunConfig) -> List[Path]:
    """Gradiometry image of the sample"""
    if config.scan is None:
        raise ConfigError("scan needs a 'scan' section")
    out = config.output.directory
    charge = _require_sample(config)
    probe = config.probe
    image = simulate_scan(charge, config.nv, probe.mode, probe.z_nv, probe.amplitude,
                          config.scan.grid, config.timing, config.scan.output, probe.projection,
                          config.scan.signal, probe.convention, probe.samples)

    written = save_scan_image(image, out / "scan", _raster_formats(config) or ["binary"])
    y_center = float(image.y_coords[image.ny // 2])
    profile = extract_profile(image, "x", y_center)
    meta = {"y_m": y_center}
    try:
        meta["dominant_period_m"] = dominant_period(profile)
    except DegenerateDataError as e:
        logger.info("No dominant period in the scan profile: %s", e)
    written.append(_profile_table(out / "scan_profile.txt", profile, meta))

    svg = _svg(config, "scan")
    if svg:
        written.append(svg_renderer.render_image(image, svg, f"{probe.mode.value} scan"))
        written.append(svg_renderer.render_profile(profile, _svg(config, "scan_profile"),
                                                   "Profile through the image center"))
    return written


def cmd_psf(config: RunConfig) -> List[Path]:
    """Delta-line PSF and its widths"""
    out = config.output.directory
    probe = config.probe
    profile = psf_delta_line(probe.z_nv, probe.amplitude, probe.mode, probe.projection,
                             config.nv, probe.convention, n_samples=probe.samples)
    report = resolution_report(profile, probe.mode)
    meta = {"z_nv_m": probe.z_nv, "amplitude_m": probe.amplitude, "mode": probe.mode.value,
            "projection": probe.projection.value}
    written = [_profile_table(out / "psf.txt", profile, meta)]

    summary = dict(meta)
    summary["edge_width_10_90_m"] = report.edge_width_10_90
    if report.fwhm is not None:
        summary["fwhm_m"] = report.fwhm
    if report.shear_sharpest_width is not None:
        summary["shear_sharpest_width_m"] = report.shear_sharpest_width
    target = config.resolution.get("target_edge_width")
    if target is not None:
        z_star = find_distance_for_edge_width(target, probe.amplitude, probe.mode,
                                              probe.projection, config.nv,
                                              convention=probe.convention)
        summary["target_edge_width_m"] = target
        summary["z_for_target_m"] = z_star
        if report.fwhm is not None:
            summary["fwhm_at_target_m"] = fwhm(psf_delta_line(z_star, probe.amplitude, probe.mode,
                                                             probe.projection, config.nv,
                                                             probe.convention))
    for note in report.notes:
        logger.debug("PSF report: %s", note)
    written.append(_write_summary(out / "psf_report.txt", summary))

    svg = _svg(config, "psf")
    if svg:
        written.append(svg_renderer.render_profile(
            profile, svg, f"Delta-line PSF, z = {probe.z_nv / NM:g} nm, A = {probe.amplitude / NM:g} nm"))
    return written


def cmd_resolution_map(config: RunConfig) -> List[Path]:
    """Width over NV-sample distance and oscillation amplitude"""
    out = config.output.directory
    probe = config.probe
    z_values = config.resolution.get("z_values", list(np.linspace(10, 100, 10) * NM))
    a_values = config.resolution.get("a_values", list(np.linspace(2, 20, 10) * NM))
    result = resolution_map(probe.mode, z_values, a_values, probe.projection, config.nv,
                            config.resolution.get("metric"), probe.convention)
    if result.mask.any():
        logger.warning("%d cells masked where amplitude >= NV-sample distance",
                       int(result.mask.sum()))

    zz, aa = np.meshgrid(result.z_values, result.a_values, indexing="ij")
    rows = np.column_stack([zz.ravel(), aa.ravel(), result.widths.ravel(),
                            result.mask.ravel().astype(float)])
    meta = {"mode": result.mode.value, "metric": result.metric}
    written = [write_table(out / "resolution_map.txt",
                           [("z_nv", "m"), ("amplitude", "m"), ("width", "m"), ("masked", "1")],
                           rows, meta)]
    svg = _svg(config, "resolution_map")
    if svg:
        written.append(svg_renderer.render_resolution_map(result, svg,
                                                          f"{result.mode.value} resolution"))
    return written


def _synthetic_profile(values: Dict[str, object]) -> GaussianProfile:
    width = values.get("profile_width", 2.5e-6)
    peak = values.get("profile_peak", 1e8)
    return GaussianProfile(values.get("profile_background", 1e7), peak * width * SQRT_HALF_PI,
                           width, 0.0)


def _calibrate_from_files(config: RunConfig) -> List[Path]:
    values = config.calibration
    base = config.base_dir or Path.cwd()
    profile_table = read_table(base / values["profile_path"])
    trace_table = read_table(base / values["trace_path"])
    samples = profile_table.data[:, :2]
    trace = PhotonTrace(trace_table.data[:, 0], trace_table.data[:, 1], config.probe.frequency)
    result = calibrate_amplitude(samples, trace, values.get("side"))
    summary = {"amplitude_m": result.amplitude, "profile_w_m": result.profile.w,
               "profile_z0_m": result.profile.z0, "z_half_m": result.anchor.z_half,
               "h_max": result.trace_fit.h_max, "h_min": result.trace_fit.h_min}
    return [_write_summary(config.output.directory / "calibration.txt", summary)]


def cmd_calibrate_amplitude(config: RunConfig) -> List[Path]:
    """Oscillation amplitude from a profile scan and a photon trace"""
    values = config.calibration
    if "trace_path" in values:
        return _calibrate_from_files(config)

    out = config.output.directory
    profile = _synthetic_profile(values)
    amplitudes = values.get("amplitudes", [0.2 * NM, 0.8 * NM, 2 * NM, 5 * NM])
    shot_noise = values.get("shot_noise", False)
    trials = values.get("trials", 20 if shot_noise else 1)
    side = values.get("side")
    z_scan = np.linspace(profile.z0 - 3 * profile.w, profile.z0 + 3 * profile.w,
                         values.get("profile_points", 121))
    anchor = half_maximum_point(profile, side)
    f = config.probe.frequency

    rows, first_samples, first_trace = [], None, None
    for amplitude in amplitudes:
        for trial in range(trials):
            rng = derive_rng(config.seed, f"calibration/{amplitude!r}/{trial}") if shot_noise else None
            samples = synthesize_profile_samples(profile, z_scan, rng)
            trace = synthesize_photon_trace(profile, anchor.z_half, amplitude, f,
                                            values.get("trace_periods", 10),
                                            values.get("bins_per_period", 64),
                                            values.get("count_scale", 300.0), rng=rng)
            result = calibrate_amplitude(samples, trace, side)
            rows.append((amplitude, trial, result.amplitude, result.amplitude / amplitude - 1.0))
            if first_samples is None:
                first_samples, first_trace = samples, trace
    rows = np.array(rows, dtype=float)

    written = [
        write_table(out / "calibration.txt",
                    [("amplitude_true", "m"), ("trial", "1"), ("amplitude_fit", "m"),
                     ("relative_error", "1")], rows,
                    {"profile_width_m": profile.w, "shot_noise": str(shot_noise),
                     "side": side or get_config_manager().get("calibration.default_side")}),
        write_table(out / "profile_scan.txt", [("z", "m"), ("counts", "counts")], first_samples),
        write_table(out / "photon_trace.txt", [("t", "s"), ("counts", "counts")],
                    np.column_stack([first_trace.times, first_trace.counts])),
    ]

    voltages = values.get("drive_voltages")
    if voltages is not None:
        if len(voltages) != len(amplitudes):
            raise ConfigError("calibration.drive_voltages must pair with calibration.amplitudes")
        mean_fit = [rows[rows[:, 0] == a, 2].mean() for a in amplitudes]
        line = fit_amplitude_vs_voltage(list(zip(voltages, mean_fit)))
        written.append(_write_summary(out / "amplitude_vs_voltage.txt", line._asdict()))

    svg = _svg(config, "calibration_profile")
    if svg:
        fine = np.linspace(z_scan[0], z_scan[-1], 400)
        written.append(svg_renderer.render_series(
            [("scan", first_samples[:, 0], first_samples[:, 1], "o"),
             ("profile", fine, profile.evaluate(fine), "-")],
            svg, "z (um)", "counts", "Optical profile", x_factor=1e-6))
        written.append(svg_renderer.render_series(
            [("", first_trace.times, first_trace.counts, "-")],
            _svg(config, "calibration_trace"), "t (us)", "counts", "Photon trace", x_factor=1e-6))
        recovered = [rows[rows[:, 0] == a, 2].mean() for a in amplitudes]
        written.append(svg_renderer.render_series(
            [("recovered", np.asarray(amplitudes), np.asarray(recovered) / NM, "o-")],
            _svg(config, "calibration_amplitudes"), "true amplitude (nm)", "fitted amplitude (nm)",
            "Amplitude recovery", x_factor=NM))
    return written


def cmd_delay_sweep(config: RunConfig) -> List[Path]:
    """Synthetic delay sweep and its sine and cosine refits"""
    out = config.output.directory
    values = config.delay_sweep
    timing = config.timing
    f = timing.f
    e_ac = values.get("e_ac", 2.36e5)
    tau_w = np.linspace(0.0, values.get("span", 1.0 / f), values.get("points", 41))
    noise = {"sine": values.get("noise_sine", 0.0), "cosine": values.get("noise_cosine", 0.0)}
    trials = values.get("trials", 50 if any(noise.values()) else 1)

    fits, tables = [], {}
    for model in ("sine", "cosine"):
        for trial in range(trials):
            rng = derive_rng(config.seed, f"delay_sweep/{model}/{trial}")
            table = delay_sweep(e_ac, config.nv, timing, tau_w, noise_sigma=noise[model], rng=rng)
            tables.setdefault(model, table)
            try:
                fit = fit_delay_sweep(table, config.nv, timing, model,
                                      noise_sigma=noise[model] or None)
            except NumericError as e:
                logger.warning("Delay-sweep fit (%s, trial %d) failed: %s", model, trial, e)
                fits.append((model == "cosine", trial, np.nan, np.nan, np.nan, np.nan, 0.0))
                continue
            bracket = abs(fit.e_ac - e_ac) <= 2.0 * fit.e_ac_sigma
            fits.append((model == "cosine", trial, fit.e_ac, fit.e_ac_sigma, fit.tau_e,
                         fit.tau_e_sigma, float(bracket)))
    fits = np.array(fits, dtype=float)

    sine_table = tables["sine"]
    written = [
        write_table(out / "delay_sweep.txt",
                    [("tau_w", "s"), ("p_s_plus", "1"), ("p_s_minus", "1"), ("p_c_plus", "1"),
                     ("p_c_minus", "1")], sine_table.as_array(),
                    {"e_ac_V_per_m": e_ac, "tau_e_s": timing.tau_e, "f_Hz": f}),
        write_table(out / "delay_fits.txt",
                    [("cosine_model", "1"), ("trial", "1"), ("e_ac", "V/m"), ("e_ac_sigma", "V/m"),
                     ("tau_e", "s"), ("tau_e_sigma", "s"), ("brackets_truth", "1")], fits,
                    {"sine_bracket_rate": float(np.mean(fits[fits[:, 0] == 0, 6])),
                     "cosine_bracket_rate": float(np.mean(fits[fits[:, 0] == 1, 6]))}),
    ]

    svg = _svg(config, "delay_sweep")
    if svg:
        fine = np.linspace(tau_w[0], tau_w[-1], 400)
        phi = echo_phase_closed(config.nv.d_perp, e_ac, f, timing.tau, timing.tau_e + fine)
        curve = readout_populations(phi)
        cos_table = tables["cosine"]
        written.append(svg_renderer.render_series(
            [("P_s data", tau_w, sine_table.p_s_plus - sine_table.p_s_minus, "o"),
             ("P_c data", tau_w, cos_table.p_c_plus - cos_table.p_c_minus, "s"),
             ("sin(phi)", fine, curve.p_s_plus - curve.p_s_minus, "-"),
             ("cos(phi)", fine, curve.p_c_plus - curve.p_c_minus, "--")],
            svg, "tau_w (us)", "differential readout", "Delay sweep", x_factor=1e-6))
    return written


def _run_checks(seed: int) -> List[CheckResult]:
    """Run the acceptance checks as background workers and collect them in order"""
    manager = get_thread_manager()
    worker_ids = [(name, run_in_background(timed, check))
                  for name, check in acceptance_checks(seed).items()]
    results = []
    for name, worker_id in worker_ids:
        try:
            results.append(manager.wait_worker(worker_id))
        except Exception as e:
            logger.error("Check '%s' raised: %s", name, e)
            results.append(CheckResult(name, False, f"raised {type(e).__name__}: {e}", 0.0))
    return results


def cmd_repro(config: RunConfig) -> List[Path]:
    """Run the desk-scale acceptance checks and write report.txt"""
    out = config.output.directory
    results = _run_checks(config.seed)
    lines = [f"seed: {config.seed}"]
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        lines.append(f"{status} {result.name}: {result.detail} [{result.seconds:.1f} s]")
        logger.info("%s %s: %s", status, result.name, result.detail)
    report = out / "report.txt"
    try:
        report.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise OutputIOError(f"Failed to write {report}: {e}") from e

    failed = [r.name for r in results if not r.passed]
    if failed:
        raise NumericError(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
    return [report]


COMMANDS: Dict[str, Callable[[RunConfig], List[Path]]] = {
    "field": cmd_field,
    "scan": cmd_scan,
    "psf": cmd_psf,
    "resolution-map": cmd_resolution_map,
    "calibrate-amplitude": cmd_calibrate_amplitude,
    "delay-sweep": cmd_delay_sweep,
    "repro": cmd_repro,
}


def run_command(name: str, config: RunConfig) -> List[Path]:
    """Run a subcommand inside its locked output directory"""
    if name not in COMMANDS:
        raise ConfigError(f"Unknown command {name!r}")
    directory = config.output.directory
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputIOError(f"Failed to create output directory {directory}: {e}") from e

    logger.info("Running %s into %s", name, directory)
    with OutputLock(directory):
        written = COMMANDS[name](config)
        written.append(dump_run_config(config, directory / "run_config.json"))
    for path in written:
        logger.info("Wrote %s", path)
    return written
