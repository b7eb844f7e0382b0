"""Scan simulation and resolution analysis.

Images are built by oscillating the NV center about every pixel and taking
the fundamental harmonic of the field it sees; no gradient shortcut is used.
Widths are measured on line profiles with the 10-90% edge criterion, the
full width at half maximum, or the width of the sharpest transition.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, signal

from app_utils.config_manager import get_config_manager
from app_utils.errors import DegenerateDataError, ValidationError
from app_utils.threading_helper import parallel_map
from nv_engine.fields import (AnalyticLineChargeSampler, ChargeMap, FieldConvention,
                              FieldSampler, default_sampler_for, validate_height)
from nv_engine.probe import (EchoTiming, OscillationMode, Projection, ac_harmonic_amplitudes,
                             resolve_phi_b)
from nv_engine.spin import NVParams, echo_phase_closed

logger = logging.getLogger(__name__)

# upper bound on trajectory points evaluated in one sampler call
_POINTS_PER_CHUNK = 1 << 20
# monotone runs spanning less than this share of the range count as ripple
_RUN_RANGE_FRACTION = 0.1
# default line density for delta-line PSFs; widths do not depend on it
_PSF_LINE_DENSITY = 1e-10


def oscillation_axis(mode: OscillationMode) -> Tuple[float, float, float]:
    """z for intermittent contact, x for shear force"""
    if OscillationMode(mode) is OscillationMode.INTERMITTENT:
        return (0.0, 0.0, 1.0)
    return (1.0, 0.0, 0.0)


def check_mode_amplitude(mode: OscillationMode, z_nv: float, amplitude: float) -> None:
    if not (amplitude >= 0):
        raise ValidationError(f"Amplitude must be non-negative, got {amplitude}")
    if OscillationMode(mode) is OscillationMode.INTERMITTENT and not (amplitude < z_nv):
        raise ValidationError(
            f"Intermittent contact needs amplitude < NV-sample distance "
            f"({amplitude:g} >= {z_nv:g})")


@dataclass(frozen=True)
class LineProfile:
    """Signal sampled along a line, positions in meters"""
    positions: np.ndarray
    values: np.ndarray
    axis: str = "x"
    unit: str = "V/m"

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if positions.ndim != 1 or positions.shape != values.shape:
            raise ValidationError("Profile positions and values must be 1-D and equally long")
        if positions.size < 3:
            raise ValidationError("A profile needs at least 3 samples")
        if np.any(np.diff(positions) <= 0):
            raise ValidationError("Profile positions must be strictly increasing")
        if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(values))):
            raise ValidationError("Profile contains non-finite samples")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "values", values)

    @property
    def span(self) -> float:
        return float(self.positions[-1] - self.positions[0])

    @property
    def pitch(self) -> float:
        return float(np.median(np.diff(self.positions)))

    def scaled(self, length_factor: float) -> "LineProfile":
        return LineProfile(self.positions * length_factor, self.values, self.axis, self.unit)


@dataclass(frozen=True)
class ScanGrid:
    """Pixel centers origin + pitch*(i, j) for i < nx, j < ny"""
    origin: Tuple[float, float]
    pitch: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.pitch > 0):
            raise ValidationError(f"Pixel pitch must be positive, got {self.pitch}")
        if self.nx < 1 or self.ny < 1:
            raise ValidationError(f"Scan grid needs at least one pixel, got {self.nx}x{self.ny}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def square(cls, extent: float, pixels: int,
               center: Sequence[float] = (0.0, 0.0)) -> "ScanGrid":
        """pixels x pixels grid covering extent, centered on center"""
        if not (extent > 0) or pixels < 1:
            raise ValidationError("Scan extent must be positive with at least one pixel")
        pitch = extent / pixels
        start = -extent / 2.0 + pitch / 2.0
        return cls((center[0] + start, center[1] + start), pitch, pixels, pixels)

    @property
    def x_coords(self) -> np.ndarray:
        return self.origin[0] + self.pitch * np.arange(self.nx)

    @property
    def y_coords(self) -> np.ndarray:
        return self.origin[1] + self.pitch * np.arange(self.ny)

    @property
    def center(self) -> Tuple[float, float]:
        return (float(self.x_coords.mean()), float(self.y_coords.mean()))


@dataclass(frozen=True)
class ScanImage:
    """Gradiometry image; values[i, j] belongs to pixel (x_i, y_j)"""
    values: np.ndarray
    pitch: float
    origin: Tuple[float, float]
    meta: Dict[str, Any] = field(default_factory=dict)
    unit: str = "V/m"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValidationError(f"Image values must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("Image contains non-finite values")
        if not (self.pitch > 0):
            raise ValidationError(f"Pixel pitch must be positive, got {self.pitch}")
        mode = self.meta.get("mode")
        if mode is not None:
            check_mode_amplitude(mode, self.meta["z_nv"], self.meta["amplitude"])
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def x_coords(self) -> np.ndarray:
        return self.origin[0] + self.pitch * np.arange(self.nx)

    @property
    def y_coords(self) -> np.ndarray:
        return self.origin[1] + self.pitch * np.arange(self.ny)


@dataclass(frozen=True)
class ResolutionReport:
    edge_width_10_90: float
    profile: LineProfile
    fwhm: Optional[float] = None
    shear_sharpest_width: Optional[float] = None
    notes: Tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("edge_width_10_90", "fwhm", "shear_sharpest_width"):
            width = getattr(self, name)
            if width is not None and not (0 < width <= self.profile.span):
                raise ValidationError(f"{name} = {width:g} m is outside (0, profile span]")


@dataclass(frozen=True)
class ResolutionMap:
    """Widths over (z_nv, amplitude); NaN where the combination is masked"""
    mode: OscillationMode
    metric: str
    z_values: np.ndarray
    a_values: np.ndarray
    widths: np.ndarray
    mask: np.ndarray


def _check_scan_margin(charge: ChargeMap, grid: ScanGrid) -> None:
    """Pixels on zero-padded axes must stay clear of the map edges"""
    fraction = get_config_manager().get_scan_margin_fraction()
    windows = ((charge.x_coords, grid.x_coords), (charge.y_coords, grid.y_coords))
    for axis, (periodic, (map_coords, pixels)) in enumerate(zip(charge.uniform_axes, windows)):
        if periodic:
            continue
        margin = fraction * (map_coords[-1] - map_coords[0])
        lo, hi = map_coords[0] + margin, map_coords[-1] - margin
        if pixels.min() < lo - 1e-12 or pixels.max() > hi + 1e-12:
            raise ValidationError(
                f"Scan along {'xy'[axis]} spans [{pixels.min():g}, {pixels.max():g}] m; "
                f"pixels must lie within [{lo:g}, {hi:g}] m of the charge map")


def _harmonic_rows(sampler: FieldSampler, params: NVParams, centers: np.ndarray,
                   axis: Sequence[float], amplitude: float, projection: Projection,
                   n_samples: int) -> np.ndarray:
    """ac_harmonic_amplitudes over an (nx, ny, 3) center grid in row chunks"""
    nx, ny = centers.shape[:2]
    rows_per_chunk = max(1, _POINTS_PER_CHUNK // max(1, ny * n_samples))
    out = np.empty((nx, ny))
    for start in range(0, nx, rows_per_chunk):
        stop = min(nx, start + rows_per_chunk)
        out[start:stop], _ = ac_harmonic_amplitudes(sampler, params, centers[start:stop], axis,
                                                    amplitude, 0.0, projection, n_samples)
    return out


def simulate_scan(charge: ChargeMap, params: NVParams, mode: OscillationMode, z_nv: float,
                  amplitude: float, grid: ScanGrid, timing: Optional[EchoTiming] = None,
                  output: str = "e_ac",
                  projection: Projection = Projection.NV_TRANSVERSE_COS,
                  signal_kind: str = "signed",
                  convention: FieldConvention = FieldConvention.PAPER,
                  n_samples: Optional[int] = None,
                  sampler: Optional[FieldSampler] = None) -> ScanImage:
    """Gradiometry image of a charge map.

    Each pixel is the in-phase fundamental of the field projection seen by
    the NV center oscillating about (x, y, z_nv). ``output="phase"`` maps the
    amplitudes to echo phases with ``timing``; ``signal_kind="magnitude"``
    reports absolute values.
    """
    mode = OscillationMode(mode)
    projection = Projection(projection)
    z_nv = validate_height(z_nv, "z_nv")
    check_mode_amplitude(mode, z_nv, amplitude)
    if output not in ("e_ac", "phase"):
        raise ValidationError(f"output must be 'e_ac' or 'phase', got {output!r}")
    if signal_kind not in ("signed", "magnitude"):
        raise ValidationError(f"signal must be 'signed' or 'magnitude', got {signal_kind!r}")
    if output == "phase" and timing is None:
        raise ValidationError("Phase output needs echo timing")
    _check_scan_margin(charge, grid)
    if n_samples is None:
        n_samples = get_config_manager().get_trajectory_samples()

    if sampler is None:
        sampler = default_sampler_for(charge, z_nv, convention)
    if projection is Projection.NV_TRANSVERSE_COS:
        params = resolve_phi_b(params, sampler, (*grid.center, z_nv))

    xs, ys = np.meshgrid(grid.x_coords, grid.y_coords, indexing="ij")
    centers = np.stack([xs, ys, np.full_like(xs, z_nv)], axis=-1)
    logger.info("Simulating %s scan: %dx%d pixels, z_nv=%g m, A=%g m",
                mode.value, grid.nx, grid.ny, z_nv, amplitude)
    values = _harmonic_rows(sampler, params, centers, oscillation_axis(mode), amplitude,
                            projection, n_samples)

    unit = "V/m"
    if output == "phase":
        values = echo_phase_closed(params.d_perp, values, timing.f, timing.tau, timing.tau_t)
        unit = "rad"
    if signal_kind == "magnitude":
        values = np.abs(values)

    meta = {
        "mode": mode.value,
        "z_nv": z_nv,
        "amplitude": float(amplitude),
        "projection": projection.value,
        "output": output,
        "signal": signal_kind,
        "phi_b": params.phi_b,
        "convention": FieldConvention(convention).value,
    }
    return ScanImage(values, grid.pitch, grid.origin, meta, unit)


def line_scan(sampler: FieldSampler, params: NVParams, mode: OscillationMode, z_nv: float,
              amplitude: float, x_values: Sequence[float], y: float = 0.0,
              projection: Projection = Projection.NV_TRANSVERSE_COS,
              n_samples: Optional[int] = None) -> LineProfile:
    """1-D gradiometry scan along x at fixed y; phi_b resolves at the scan center"""
    mode = OscillationMode(mode)
    projection = Projection(projection)
    z_nv = validate_height(z_nv, "z_nv")
    check_mode_amplitude(mode, z_nv, amplitude)
    x = np.asarray(x_values, dtype=float)
    if projection is Projection.NV_TRANSVERSE_COS:
        params = resolve_phi_b(params, sampler, (0.5 * (x[0] + x[-1]), y, z_nv))
    centers = np.stack([x, np.full_like(x, y), np.full_like(x, z_nv)], axis=-1)
    if n_samples is None:
        n_samples = get_config_manager().get_trajectory_samples()
    values = _harmonic_rows(sampler, params, centers[None], oscillation_axis(mode), amplitude,
                            projection, n_samples)[0]
    return LineProfile(x, values, "x")


def extract_profile(image: ScanImage, axis: str, position: float) -> LineProfile:
    """Profile along axis at the given perpendicular coordinate.

    Off-row positions are linearly interpolated between neighboring rows.
    """
    if axis not in ("x", "y"):
        raise ValidationError(f"axis must be 'x' or 'y', got {axis!r}")
    values = image.values if axis == "x" else image.values.T
    along = image.x_coords if axis == "x" else image.y_coords
    across_origin = image.origin[1] if axis == "x" else image.origin[0]
    n_across = values.shape[1]

    index = (position - across_origin) / image.pitch
    if index < -1e-9 or index > n_across - 1 + 1e-9:
        raise ValidationError(f"Position {position:g} m lies outside the image")
    index = min(max(index, 0.0), n_across - 1.0)
    lower = int(math.floor(index))
    upper = min(lower + 1, n_across - 1)
    weight = index - lower
    row = values[:, lower] if weight == 0.0 else (1.0 - weight) * values[:, lower] + weight * values[:, upper]
    return LineProfile(along, row, axis, image.unit)


def _monotone_run(values: np.ndarray, index: int, direction: float) -> Tuple[int, int]:
    """Largest segment around step index..index+1 monotone in direction (plateaus allowed)"""
    steps = np.diff(values) * direction
    lo = index
    while lo > 0 and steps[lo - 1] >= 0:
        lo -= 1
    hi = index + 1
    while hi < len(values) - 1 and steps[hi] >= 0:
        hi += 1
    return lo, hi


def _level_crossing(x: np.ndarray, v: np.ndarray, level: float) -> float:
    """Position where a monotone segment crosses level (linear interpolation)"""
    if v[-1] < v[0]:
        x, v = x[::-1], v[::-1]
    return float(np.interp(level, v, x))


def _width_between(x: np.ndarray, v: np.ndarray, low: float, high: float) -> float:
    return abs(_level_crossing(x, v, high) - _level_crossing(x, v, low))


def edge_width_10_90(profile: LineProfile) -> float:
    """10-90% width of the steepest monotone transition.

    Levels sit at 10% and 90% of the global range. When the steepest run
    does not reach both levels (a dip or overshoot next to the edge), the
    levels fall back to 10% and 90% of the run's own range and a warning is
    logged.
    """
    v = profile.values
    v_min, v_max = float(v.min()), float(v.max())
    value_range = v_max - v_min
    if value_range <= 0:
        raise DegenerateDataError("Flat profile has no edge")

    steps = np.diff(v)
    steepest = int(np.argmax(np.abs(steps)))
    lo, hi = _monotone_run(v, steepest, math.copysign(1.0, steps[steepest]))
    x_run, v_run = profile.positions[lo:hi + 1], v[lo:hi + 1]

    low, high = v_min + 0.1 * value_range, v_min + 0.9 * value_range
    run_lo, run_hi = float(v_run.min()), float(v_run.max())
    if run_lo > low or run_hi < high:
        logger.warning("Steepest run covers [%g, %g] of [%g, %g]; using its own 10-90%% levels",
                       run_lo, run_hi, v_min, v_max)
        run_range = run_hi - run_lo
        low, high = run_lo + 0.1 * run_range, run_lo + 0.9 * run_range
    return _width_between(x_run, v_run, low, high)


def profile_baseline(profile: LineProfile) -> float:
    """Median of the outer 10% of samples, split between both ends"""
    n_edge = max(1, int(math.ceil(0.05 * profile.values.size)))
    outer = np.concatenate([profile.values[:n_edge], profile.values[-n_edge:]])
    return float(np.median(outer))


def fwhm(profile: LineProfile) -> float:
    """Full width at half maximum of the dominant peak above the baseline"""
    x, v = profile.positions, profile.values
    baseline = profile_baseline(profile)
    deviation = v - baseline
    peak = int(np.argmax(np.abs(deviation)))
    height = deviation * math.copysign(1.0, deviation[peak])
    half = 0.5 * height[peak]
    if half <= 0:
        raise DegenerateDataError("Profile has no peak above its baseline")

    above = height >= half
    edges = np.flatnonzero(np.diff(above.astype(int)))
    if len(edges) != 2 or not (edges[0] < peak <= edges[1]):
        raise DegenerateDataError(
            "Profile is multi-peaked or does not return to half maximum inside the window")

    left, right = edges[0], edges[1]
    x_left = _level_crossing(x[left:left + 2], height[left:left + 2], half)
    x_right = _level_crossing(x[right:right + 2], height[right:right + 2], half)
    return x_right - x_left


def _monotone_runs(values: np.ndarray):
    """Maximal runs of strictly rising or strictly falling samples as (start, stop)"""
    signs = np.sign(np.diff(values))
    start = 0
    for i in range(1, len(signs) + 1):
        if i == len(signs) or signs[i] != signs[start]:
            if signs[start] != 0:
                yield start, i
            start = i


def shear_sharpest_transition_width(profile: LineProfile) -> float:
    """Smallest own-range 10-90% width over the profile's monotone runs"""
    v = profile.values
    global_range = float(np.ptp(v))
    widths = []
    for start, stop in _monotone_runs(v):
        if stop - start < 2:
            continue
        x_run, v_run = profile.positions[start:stop + 1], v[start:stop + 1]
        run_range = float(np.ptp(v_run))
        if run_range < _RUN_RANGE_FRACTION * global_range:
            continue
        low = float(v_run.min()) + 0.1 * run_range
        widths.append(_width_between(x_run, v_run, low, low + 0.8 * run_range))
    if not widths:
        raise DegenerateDataError("Profile has no monotone transition of three or more samples")
    return min(widths)


def psf_delta_line(z_nv: float, amplitude: float,
                   mode: OscillationMode = OscillationMode.INTERMITTENT,
                   projection: Projection = Projection.NV_TRANSVERSE_COS,
                   params: Optional[NVParams] = None,
                   convention: FieldConvention = FieldConvention.PAPER,
                   sampler: Optional[FieldSampler] = None,
                   n_points: Optional[int] = None,
                   window_factor: Optional[float] = None,
                   n_samples: Optional[int] = None) -> LineProfile:
    """Gradiometry profile across a delta line charge along y at x = 0.

    Defaults to the closed-form line-charge field, a window of +-10 z_nv and
    513 samples. ``phi_b`` resolves at the point above the line.
    """
    z_nv = validate_height(z_nv, "z_nv")
    check_mode_amplitude(mode, z_nv, amplitude)
    config = get_config_manager()
    n_points = n_points or config.get_psf_points()
    window_factor = window_factor or config.get_psf_window_factor()
    if n_points < 512:
        raise ValidationError(f"PSF needs at least 512 points, got {n_points}")

    if params is None:
        params = NVParams.from_defaults()
    if sampler is None:
        sampler = AnalyticLineChargeSampler(_PSF_LINE_DENSITY, convention=convention)
    x = np.linspace(-window_factor * z_nv, window_factor * z_nv, n_points)
    return line_scan(sampler, params, mode, z_nv, amplitude, x, 0.0, projection, n_samples)


def resolution_report(profile: LineProfile, mode: OscillationMode) -> ResolutionReport:
    """All width metrics that apply to the profile"""
    notes = ["edge width: 10-90% of the global range across the steepest monotone run"]
    width = edge_width_10_90(profile)
    try:
        peak_width = fwhm(profile)
        notes.append("fwhm: baseline is the median of the outer 10% of samples")
    except DegenerateDataError as e:
        peak_width = None
        notes.append(f"fwhm: not defined ({e})")
    sharpest = None
    if OscillationMode(mode) is OscillationMode.SHEAR_X:
        sharpest = shear_sharpest_transition_width(profile)
        notes.append("sharpest transition: minimum own-range 10-90% width over monotone runs")
    return ResolutionReport(width, profile, peak_width, sharpest, tuple(notes))


def default_metric(mode: OscillationMode) -> str:
    if OscillationMode(mode) is OscillationMode.INTERMITTENT:
        return "edge_width_10_90"
    return "shear_sharpest_transition_width"


_METRICS = {
    "edge_width_10_90": edge_width_10_90,
    "fwhm": fwhm,
    "shear_sharpest_transition_width": shear_sharpest_transition_width,
}


def resolution_map(mode: OscillationMode, z_values: Sequence[float], a_values: Sequence[float],
                   projection: Projection = Projection.NV_TRANSVERSE_COS,
                   params: Optional[NVParams] = None,
                   metric: Optional[str] = None,
                   convention: FieldConvention = FieldConvention.PAPER,
                   n_points: Optional[int] = None) -> ResolutionMap:
    """Delta-line PSF width for every (z_nv, amplitude) pair.

    In intermittent mode cells with amplitude >= z_nv are masked.
    """
    mode = OscillationMode(mode)
    z = np.asarray(list(z_values), dtype=float)
    a = np.asarray(list(a_values), dtype=float)
    if z.size == 0 or a.size == 0:
        raise ValidationError("Resolution map needs non-empty distance and amplitude grids")
    if np.any(z <= 0) or np.any(a <= 0):
        raise ValidationError("Distances and amplitudes must be positive")
    metric = metric or default_metric(mode)
    if metric not in _METRICS:
        raise ValidationError(f"Unknown width metric {metric!r}")
    if params is None:
        params = NVParams.from_defaults()

    mask = np.zeros((z.size, a.size), dtype=bool)
    if mode is OscillationMode.INTERMITTENT:
        mask = a[None, :] >= z[:, None]
    cells = [(i, j) for i in range(z.size) for j in range(a.size) if not mask[i, j]]

    def cell_width(cell):
        i, j = cell
        profile = psf_delta_line(z[i], a[j], mode, projection, params, convention,
                                 n_points=n_points)
        return _METRICS[metric](profile)

    widths = np.full((z.size, a.size), np.nan)
    for (i, j), width in zip(cells, parallel_map(cell_width, cells)):
        widths[i, j] = width
    if mask.any():
        logger.info("Resolution map: %d of %d cells masked (amplitude >= z_nv)",
                    int(mask.sum()), mask.size)
    return ResolutionMap(mode, metric, z, a, widths, mask)


def find_distance_for_edge_width(target: float, amplitude: float,
                                 mode: OscillationMode = OscillationMode.INTERMITTENT,
                                 projection: Projection = Projection.NV_TRANSVERSE_COS,
                                 params: Optional[NVParams] = None,
                                 bracket: Optional[Tuple[float, float]] = None,
                                 convention: FieldConvention = FieldConvention.PAPER) -> float:
    """NV-sample distance at which the delta-line edge width equals target"""
    if not (target > 0):
        raise ValidationError(f"Target width must be positive, got {target}")
    if bracket is None:
        lower = max(0.2 * target, 1.01 * amplitude) if mode == OscillationMode.INTERMITTENT \
            else 0.2 * target
        bracket = (lower, 5.0 * target)

    def excess(z_nv: float) -> float:
        profile = psf_delta_line(z_nv, amplitude, mode, projection, params, convention)
        return edge_width_10_90(profile) - target

    lo, hi = bracket
    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo * f_hi > 0:
        raise DegenerateDataError(
            f"Edge width does not cross {target:g} m between z = {lo:g} and {hi:g} m")
    z_star = optimize.brentq(excess, lo, hi, xtol=1e-6 * target)
    logger.debug("Edge width %g m reached at z_nv = %g m", target, z_star)
    return float(z_star)


def dominant_period(profile: LineProfile) -> float:
    """Spatial period from the first autocorrelation peak after the first sign change"""
    v = profile.values - profile.values.mean()
    if not np.any(v):
        raise DegenerateDataError("Constant profile has no period")
    # unbiased: each lag averaged over its own overlap
    ac = np.correlate(v, v, mode="full")[v.size - 1:] / (v.size - np.arange(v.size))
    negative = np.flatnonzero(ac < 0)
    if negative.size == 0:
        raise DegenerateDataError("Autocorrelation never changes sign; no period in window")
    start = int(negative[0])
    peaks, _ = signal.find_peaks(ac[start:])
    if peaks.size == 0:
        raise DegenerateDataError("No autocorrelation peak inside the window")
    lag = start + int(peaks[0])

    # parabolic refinement through the peak and its neighbors
    y0, y1, y2 = ac[lag - 1], ac[lag], ac[lag + 1]
    curvature = y0 - 2.0 * y1 + y2
    shift = 0.5 * (y0 - y2) / curvature if curvature != 0 else 0.0
    return float((lag + shift) * profile.pitch)


def scan_dominant_period(charge: ChargeMap, params: NVParams, mode: OscillationMode,
                         z_nv: float, amplitude: float, grid: ScanGrid,
                         n_samples: Optional[int] = None) -> float:
    """Dominant x period of a simulated scan, read along its middle row"""
    image = simulate_scan(charge, params, mode, z_nv, amplitude, grid, n_samples=n_samples)
    profile = extract_profile(image, "x", float(grid.y_coords[grid.ny // 2]))
    return dominant_period(profile)
