"""Calibration procedures.

Amplitude calibration: fit the optical profile of the NV center along the
oscillation axis, park the focus on the half-maximum flank where the
profile is locally linear, and convert the modulation depth of the
time-resolved photoluminescence into an oscillation amplitude.

Delay calibration: sweep the programmable wait tau_w at constant E_AC and
fit the echo readout to recover E_AC and the electronic delay tau_e.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, stats

from app_utils.config_manager import get_config_manager
from app_utils.errors import (ConvergenceError, DegenerateDataError, NumericError,
                              ValidationError)
from nv_engine.fields import FieldSampler
from nv_engine.probe import (EchoTiming, OscillationSpec, Projection, ac_harmonic_amplitude,
                             check_timing)
from nv_engine.spin import NVParams, echo_phase_closed, readout_populations

logger = logging.getLogger(__name__)

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
# exp(-2 u^2) = 1/2
HALF_MAX_OFFSET = math.sqrt(math.log(2.0) / 2.0)


@dataclass(frozen=True)
class FitDiagnostics:
    residual_rms: float
    iterations: int
    covariance: Optional[np.ndarray] = None


@dataclass(frozen=True)
class GaussianProfile:
    """h(z) = s0 + s/(w sqrt(pi/2)) exp(-2((z - z0)/w)^2)"""
    s0: float
    s: float
    w: float
    z0: float
    diagnostics: Optional[FitDiagnostics] = None

    def __post_init__(self):
        if not (self.w > 0 and self.s > 0 and self.s0 >= 0):
            raise ValidationError(
                f"Profile needs w > 0, s > 0, s0 >= 0 (got w={self.w}, s={self.s}, s0={self.s0})")

    @property
    def peak(self) -> float:
        """Height of the Gaussian term above the background"""
        return self.s / (self.w * SQRT_HALF_PI)

    def evaluate(self, z) -> np.ndarray:
        u = (np.asarray(z, dtype=float) - self.z0) / self.w
        return self.s0 + self.peak * np.exp(-2.0 * u * u)

    def derivative(self, z) -> np.ndarray:
        u = (np.asarray(z, dtype=float) - self.z0) / self.w
        return self.peak * np.exp(-2.0 * u * u) * (-4.0 * u / self.w)


@dataclass(frozen=True)
class PhotonTrace:
    """Time-resolved counts of an NV center oscillating at the drive frequency f"""
    times: np.ndarray
    counts: np.ndarray
    f: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if times.ndim != 1 or times.shape != counts.shape:
            raise ValidationError("times and counts must be 1-D arrays of equal length")
        if times.size < 2 or np.any(np.diff(times) <= 0):
            raise ValidationError("times must be strictly increasing")
        if np.any(counts < 0):
            raise ValidationError("counts must be non-negative")
        if not (self.f > 0):
            raise ValidationError(f"Drive frequency must be positive, got {self.f}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "counts", counts)

    @property
    def span(self) -> float:
        """Covered time including the last bin"""
        return float(self.times[-1] - self.times[0] + np.median(np.diff(self.times)))


class HalfMaxPoint(NamedTuple):
    """Linearization anchor h(z) ~ k z + intercept on the profile flank"""
    z_half: float
    k: float
    h_half: float
    intercept: float


class TraceFit(NamedTuple):
    h_max: float
    h_min: float
    phase: float
    negative_minimum: bool


class LinearFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float
    intercept_stderr: float


@dataclass(frozen=True)
class AmplitudeCalibration:
    profile: GaussianProfile
    anchor: HalfMaxPoint
    trace_fit: TraceFit
    amplitude: float


@dataclass(frozen=True)
class DelaySweepTable:
    tau_w: np.ndarray
    p_s_plus: np.ndarray
    p_s_minus: np.ndarray
    p_c_plus: np.ndarray
    p_c_minus: np.ndarray

    def __post_init__(self):
        columns = [np.asarray(getattr(self, name), dtype=float) for name in self.column_names()]
        if len({c.shape for c in columns}) != 1 or columns[0].ndim != 1:
            raise ValidationError("Sweep columns must be 1-D arrays of equal length")
        for name, column in zip(self.column_names(), columns):
            object.__setattr__(self, name, column)

    @staticmethod
    def column_names() -> Tuple[str, ...]:
        return ("tau_w", "p_s_plus", "p_s_minus", "p_c_plus", "p_c_minus")

    def as_array(self) -> np.ndarray:
        return np.column_stack([getattr(self, name) for name in self.column_names()])


@dataclass(frozen=True)
class DelaySweepFit:
    model: str
    e_ac: float
    tau_e: float
    e_ac_sigma: float
    tau_e_sigma: float
    covariance: np.ndarray
    residual_rms: float


def _fit_limits() -> Tuple[int, float]:
    return get_config_manager().get_fit_limits()


def _levenberg_marquardt(residual: Callable[[np.ndarray], np.ndarray],
                         jacobian: Callable[[np.ndarray], np.ndarray],
                         p0: np.ndarray, what: str) -> optimize.OptimizeResult:
    """Damped Gauss-Newton with the configured iteration cap and step tolerance"""
    max_iterations, step_tol = _fit_limits()
    try:
        result = optimize.least_squares(residual, p0, jac=jacobian, method="lm",
                                        xtol=step_tol, ftol=1e-15, gtol=1e-15,
                                        max_nfev=max_iterations)
    except (ValueError, np.linalg.LinAlgError) as e:
        raise ConvergenceError(f"{what} fit failed: {e}") from e

    if result.status <= 0 or not np.all(np.isfinite(result.x)):
        raise ConvergenceError(f"{what} fit did not converge: {result.message}")
    logger.debug("%s fit: %d evaluations, cost %.3e", what, result.nfev, result.cost)
    return result


def _covariance(jac: np.ndarray, residual: np.ndarray, sigma: Optional[float]) -> np.ndarray:
    """Parameter covariance from the Jacobian; residual variance when sigma is None"""
    dof = max(residual.size - jac.shape[1], 1)
    scale = sigma ** 2 if sigma is not None else float(residual @ residual) / dof
    try:
        return np.linalg.inv(jac.T @ jac) * scale
    except np.linalg.LinAlgError:
        return np.full((jac.shape[1], jac.shape[1]), np.inf)


def _profile_arrays(samples) -> Tuple[np.ndarray, np.ndarray]:
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValidationError("Profile samples must be (z, counts) pairs")
    order = np.argsort(data[:, 0])
    return data[order, 0], data[order, 1]


def fit_gaussian_profile(samples: Union[Sequence[Tuple[float, float]], np.ndarray]) -> GaussianProfile:
    """Least-squares fit of the four Gaussian profile parameters"""
    z, counts = _profile_arrays(samples)
    minimum_samples = int(get_config_manager().get("calibration.min_profile_samples"))
    if z.size < minimum_samples:
        raise ValidationError(f"Need at least {minimum_samples} profile samples, got {z.size}")
    if np.ptp(counts) == 0:
        raise DegenerateDataError("Profile is flat; no peak to fit")

    s0_init = float(counts.min())
    peak_index = int(np.argmax(counts))
    z0_init = float(z[peak_index])
    peak_init = float(counts[peak_index] - s0_init)
    above = z[counts >= s0_init + peak_init / 2.0]
    half_width = max(float(above.max() - above.min()) / 2.0, float(np.min(np.diff(z))))
    w_init = half_width / HALF_MAX_OFFSET

    if not (z[0] < z0_init - w_init and z[-1] > z0_init + w_init):
        raise ValidationError("Profile samples must extend more than one width on each side of the peak")

    # dimensionless problem: counts in units of the peak, z in units of w_init
    zeta = (z - z0_init) / w_init
    y = counts / peak_init

    def model_terms(p):
        background, amplitude, center, width = p
        u = (zeta - center) / width
        g = np.exp(-2.0 * u * u)
        return background, amplitude, u, width, g

    def residual(p):
        background, amplitude, _, _, g = model_terms(p)
        return background + amplitude * g - y

    def jacobian(p):
        _, amplitude, u, width, g = model_terms(p)
        return np.column_stack([
            np.ones_like(g),
            g,
            amplitude * g * 4.0 * u / width,
            amplitude * g * 4.0 * u * u / width,
        ])

    p0 = np.array([s0_init / peak_init, 1.0, 0.0, 1.0])
    result = _levenberg_marquardt(residual, jacobian, p0, "Gaussian profile")
    background, amplitude, center, width = result.x
    # the model is even in width
    width = abs(width)
    if amplitude <= 0:
        raise DegenerateDataError("Fitted profile has no positive peak")

    w = float(width * w_init)
    peak = float(amplitude * peak_init)
    residuals = result.fun * peak_init
    diagnostics = FitDiagnostics(
        residual_rms=float(np.sqrt(np.mean(residuals ** 2))),
        iterations=int(result.nfev),
        covariance=_covariance(result.jac, result.fun, None),
    )
    return GaussianProfile(
        s0=max(float(background * peak_init), 0.0),
        s=peak * w * SQRT_HALF_PI,
        w=w,
        z0=float(z0_init + center * w_init),
        diagnostics=diagnostics,
    )


def half_maximum_point(profile: GaussianProfile, side: Optional[str] = None) -> HalfMaxPoint:
    """Half-maximum position on one flank and the re-anchored linear model there"""
    if side is None:
        side = get_config_manager().get("calibration.default_side")
    if side not in ("left", "right"):
        raise ValidationError(f"side must be 'left' or 'right', got {side!r}")

    offset = profile.w * HALF_MAX_OFFSET
    z_half = profile.z0 - offset if side == "left" else profile.z0 + offset
    k = float(profile.derivative(z_half))
    h_half = float(profile.evaluate(z_half))
    return HalfMaxPoint(z_half=float(z_half), k=k, h_half=h_half, intercept=h_half - k * z_half)


def solve_amplitude(h_max: float, h_min: float, k: float, z0: float, s0: float) -> float:
    """Invert h_max/h_min = (k(z0 + A) + s0)/(k(z0 - A) + s0) for A >= 0"""
    if not (h_min > 0):
        raise ValidationError(f"h_min must be positive, got {h_min}")
    if k == 0:
        raise ValidationError("Zero profile gradient: amplitude is unobservable")
    ratio = h_max / h_min
    return abs((ratio - 1.0) * (k * z0 + s0) / (k * (ratio + 1.0)))


def fit_photon_trace(trace: PhotonTrace) -> TraceFit:
    """Linear least squares of counts = c0 + c1 sin(2 pi f t + phi)"""
    min_periods = int(get_config_manager().get("calibration.min_trace_periods"))
    if trace.span * trace.f < min_periods * (1.0 - 1e-9):
        raise ValidationError(
            f"Trace spans {trace.span * trace.f:.3g} periods, need at least {min_periods}")

    omega_t = 2.0 * math.pi * trace.f * trace.times
    design = np.column_stack([np.ones_like(omega_t), np.sin(omega_t), np.cos(omega_t)])
    (c0, a, b), *_ = np.linalg.lstsq(design, trace.counts, rcond=None)
    c1 = math.hypot(a, b)
    h_min = c0 - c1
    negative = h_min <= 0
    if negative:
        logger.warning("Fitted trace minimum is not positive (h_min=%.6g)", h_min)
    return TraceFit(h_max=float(c0 + c1), h_min=float(h_min), phase=math.atan2(b, a),
                    negative_minimum=bool(negative))


def synthesize_profile_samples(profile: GaussianProfile, z: Iterable[float],
                               rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """(z, counts) pairs from the profile, Poisson-sampled when rng is given"""
    z = np.asarray(list(z), dtype=float)
    counts = profile.evaluate(z)
    if rng is not None:
        counts = rng.poisson(counts).astype(float)
    return np.column_stack([z, counts])


def synthesize_photon_trace(profile: GaussianProfile, z_anchor: float, amplitude: float, f: float,
                            n_periods: int = 10, bins_per_period: int = 64,
                            count_scale: float = 1.0, phase: float = 0.0,
                            rng: Optional[np.random.Generator] = None) -> PhotonTrace:
    """Counts of an NV oscillating about z_anchor, sampled at bin centers.

    The rate follows the full Gaussian profile, so the trace carries the
    nonlinearity the linearized calibration neglects.
    """
    if n_periods < 1 or bins_per_period < 4:
        raise ValidationError("Need at least one period and four bins per period")
    if not (count_scale > 0):
        raise ValidationError("count_scale must be positive")
    dt = 1.0 / (f * bins_per_period)
    times = (np.arange(n_periods * bins_per_period) + 0.5) * dt
    position = z_anchor + amplitude * np.sin(2.0 * math.pi * f * times + phase)
    rate = count_scale * profile.evaluate(position)
    counts = rng.poisson(rate).astype(float) if rng is not None else rate
    return PhotonTrace(times, counts, f)


def calibrate_amplitude(profile_samples, trace: PhotonTrace,
                        side: Optional[str] = None) -> AmplitudeCalibration:
    """Profile fit -> half-max anchor -> trace fit -> amplitude"""
    profile = fit_gaussian_profile(profile_samples)
    anchor = half_maximum_point(profile, side)
    trace_fit = fit_photon_trace(trace)
    if trace_fit.negative_minimum:
        raise NumericError("Trace fit produced a non-positive minimum; amplitude undefined")
    # the trace counts may be scaled relative to the profile scan; only the ratio matters
    amplitude = solve_amplitude(trace_fit.h_max, trace_fit.h_min, anchor.k, anchor.z_half,
                                anchor.intercept)
    return AmplitudeCalibration(profile, anchor, trace_fit, amplitude)


def linearization_error(profile: GaussianProfile, amplitude: float,
                        side: Optional[str] = None) -> float:
    """Relative amplitude error of the linearized calibration on noiseless data"""
    anchor = half_maximum_point(profile, side)
    trace = synthesize_photon_trace(profile, anchor.z_half, amplitude, f=1.0, n_periods=4)
    fit = fit_photon_trace(trace)
    recovered = solve_amplitude(fit.h_max, fit.h_min, anchor.k, anchor.z_half, anchor.intercept)
    return abs(recovered - amplitude) / amplitude


def fit_amplitude_vs_voltage(points: Sequence[Tuple[float, float]]) -> LinearFit:
    """Ordinary least-squares line through (drive voltage, amplitude) points"""
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 3:
        raise ValidationError("Need at least 3 (voltage, amplitude) points")
    if np.ptp(data[:, 0]) == 0:
        raise DegenerateDataError("All drive voltages are equal")
    result = stats.linregress(data[:, 0], data[:, 1])
    r_squared = float(result.rvalue ** 2) if np.isfinite(result.rvalue) else 1.0
    return LinearFit(float(result.slope), float(result.intercept), r_squared,
                     float(result.stderr), float(result.intercept_stderr))


def phase_per_field(d_perp: float, timing: EchoTiming) -> float:
    """Peak echo phase per unit E_AC, 4 d_perp sin^2(pi f tau/2)/f"""
    return 4.0 * d_perp * math.sin(math.pi * timing.f * timing.tau / 2.0) ** 2 / timing.f


def delay_sweep(source: Union[float, FieldSampler], params: NVParams, timing_base: EchoTiming,
                tau_w_values: Sequence[float], spec: Optional[OscillationSpec] = None,
                projection: Projection = Projection.NV_TRANSVERSE_COS,
                noise_sigma: float = 0.0,
                rng: Optional[np.random.Generator] = None) -> DelaySweepTable:
    """Readout populations versus programmable wait at constant E_AC.

    ``source`` is either E_AC in V/m or a field sampler, in which case E_AC is
    derived once from ``spec``.
    """
    tau_w = np.asarray(list(tau_w_values), dtype=float)
    if tau_w.size == 0:
        raise ValidationError("Delay sweep needs at least one tau_w value")
    if np.any(tau_w < 0):
        raise ValidationError("tau_w values must be non-negative")

    if isinstance(source, FieldSampler):
        if spec is None:
            raise ValidationError("A field sampler source needs an oscillation spec")
        check_timing(spec, timing_base)
        e_ac = ac_harmonic_amplitude(source, params, spec, projection).e_ac
    else:
        e_ac = float(source)

    phi = echo_phase_closed(params.d_perp, e_ac, timing_base.f, timing_base.tau,
                            timing_base.tau_e + tau_w)
    populations = readout_populations(phi)
    columns = [populations.p_s_plus, populations.p_s_minus,
               populations.p_c_plus, populations.p_c_minus]

    if noise_sigma > 0:
        if rng is None:
            raise ValidationError("Noisy sweeps need a seeded random generator")
        columns = [c + rng.normal(0.0, noise_sigma, size=c.shape) for c in columns]

    return DelaySweepTable(tau_w, *columns)


def _initial_delay_guess(tau_w: np.ndarray, y: np.ndarray, omega: float,
                         model: str) -> Tuple[float, float]:
    """(peak phase, omega*tau_e) from linearized fits of the inverted readout"""
    if model == "sine":
        phase = np.arcsin(np.clip(y, -1.0, 1.0))
        design = np.column_stack([np.cos(omega * tau_w), np.sin(omega * tau_w)])
        (a, b), *_ = np.linalg.lstsq(design, phase, rcond=None)
        return math.hypot(a, b), math.atan2(-b, a)

    phase_sq = np.arccos(np.clip(y, -1.0, 1.0)) ** 2
    design = np.column_stack([np.ones_like(tau_w), np.cos(2 * omega * tau_w),
                              np.sin(2 * omega * tau_w)])
    (c0, c1, c2), *_ = np.linalg.lstsq(design, phase_sq, rcond=None)
    peak_sq = max(c0 + math.hypot(c1, c2), 0.0)
    return math.sqrt(peak_sq), math.atan2(-c2, c1) / 2.0


def fit_delay_sweep(table: DelaySweepTable, params: NVParams, timing_base: EchoTiming,
                    which: str = "sine", noise_sigma: Optional[float] = None) -> DelaySweepFit:
    """Fit P_s = sin(phi) or P_c = cos(phi) over the sweep for (E_AC, tau_e).

    The cosine model is even in phi, so it only determines |E_AC| and tau_e
    modulo half a period; the sine model determines tau_e modulo a period.
    ``noise_sigma`` switches the covariance to a known per-point noise level.
    """
    if which not in ("sine", "cosine"):
        raise ValidationError(f"which must be 'sine' or 'cosine', got {which!r}")
    min_points = int(get_config_manager().get("calibration.min_sweep_points"))
    tau_w = table.tau_w
    if tau_w.size < min_points:
        raise ValidationError(f"Need at least {min_points} sweep points, got {tau_w.size}")
    f = timing_base.f
    if np.ptp(tau_w) < 0.5 / f * (1.0 - 1e-9):
        raise ValidationError("Sweep must cover at least half an oscillation period")

    if which == "sine":
        y = table.p_s_plus - table.p_s_minus
    else:
        y = table.p_c_plus - table.p_c_minus
    if np.ptp(y) < 1e-12:
        raise DegenerateDataError("Sweep readout is flat; E_AC and tau_e are unidentifiable")

    omega = 2.0 * math.pi * f
    k_phase = phase_per_field(params.d_perp, timing_base)
    if k_phase == 0:
        raise DegenerateDataError("Echo filter is blind at this tau (sin^2(pi f tau/2) = 0)")

    peak0, theta0 = _initial_delay_guess(tau_w, y, omega, which)
    if peak0 <= 0:
        raise DegenerateDataError("No phase modulation found in the sweep")
    e_scale = peak0 / k_phase

    def phase_terms(p):
        e_rel, theta = p
        arg = omega * tau_w + theta
        phi = peak0 * e_rel * np.cos(arg)
        return e_rel, arg, phi

    def residual(p):
        _, _, phi = phase_terms(p)
        model = np.sin(phi) if which == "sine" else np.cos(phi)
        return model - y

    def jacobian(p):
        e_rel, arg, phi = phase_terms(p)
        outer = np.cos(phi) if which == "sine" else -np.sin(phi)
        return np.column_stack([outer * peak0 * np.cos(arg),
                                outer * (-peak0 * e_rel * np.sin(arg))])

    result = _levenberg_marquardt(residual, jacobian, np.array([1.0, theta0]), "Delay sweep")
    e_rel, theta = result.x
    cov_scaled = _covariance(result.jac, result.fun, noise_sigma)

    if e_rel < 0:
        e_rel, theta = -e_rel, theta + math.pi
    period = 1.0 / f if which == "sine" else 0.5 / f
    tau_e = (theta / omega) % period

    jac_transform = np.diag([e_scale, 1.0 / omega])
    covariance = jac_transform @ cov_scaled @ jac_transform
    return DelaySweepFit(
        model=which,
        e_ac=float(e_rel * e_scale),
        tau_e=float(tau_e),
        e_ac_sigma=float(math.sqrt(covariance[0, 0])),
        tau_e_sigma=float(math.sqrt(covariance[1, 1])),
        covariance=covariance,
        residual_rms=float(np.sqrt(np.mean(result.fun ** 2))),
    )


def calibration_round_trip(amplitude: float, rng: Optional[np.random.Generator] = None,
                           width: float = 2.5e-6, peak: float = 1e8, background: float = 1e7,
                           count_scale: float = 300.0, f: float = 32e3) -> float:
    """Amplitude recovered from one synthetic profile scan and photon trace.

    The profile is sampled at 121 points over +-3 widths; ``rng`` switches
    both stages to Poisson counts.
    """
    profile = GaussianProfile(background, peak * width * SQRT_HALF_PI, width, 0.0)
    samples = synthesize_profile_samples(profile, np.linspace(-3 * width, 3 * width, 121), rng)
    anchor = half_maximum_point(profile)
    trace = synthesize_photon_trace(profile, anchor.z_half, amplitude, f,
                                    count_scale=count_scale, rng=rng)
    return calibrate_amplitude(samples, trace).amplitude


def delay_sweep_coverage(e_ac: float, params: NVParams, timing_base: EchoTiming,
                         tau_w_values: Sequence[float], which: str, noise_sigma: float,
                         rngs: Iterable[np.random.Generator]) -> List[bool]:
    """Whether each noisy refit brackets the true E_AC within two standard errors.

    One sweep is drawn per generator; a fit that fails to converge counts as
    a miss.
    """
    outcomes = []
    for trial, rng in enumerate(rngs):
        table = delay_sweep(e_ac, params, timing_base, tau_w_values, noise_sigma=noise_sigma,
                            rng=rng)
        try:
            fit = fit_delay_sweep(table, params, timing_base, which, noise_sigma=noise_sigma)
        except NumericError as e:
            logger.warning("Delay-sweep trial %d (%s) failed: %s", trial, which, e)
            outcomes.append(False)
            continue
        outcomes.append(abs(fit.e_ac - e_ac) <= 2.0 * fit.e_ac_sigma)
    return outcomes
