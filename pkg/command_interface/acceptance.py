"""Desk-scale acceptance checks run by the ``repro`` command.

Each check returns a ``CheckResult``; none of them raises on a failed
criterion, so a report can always be written.
"""

import math
import time
from typing import Callable, Dict, NamedTuple

import numpy as np

from app_utils.seeding import derive_rng
from nv_engine.calibration import (calibration_round_trip, delay_sweep, delay_sweep_coverage,
                                   fit_delay_sweep)
from nv_engine.fields import (AnalyticLineChargeSampler, ChargeMap, CoulombOracleSampler,
                              FieldConvention, fourier_stray_field, make_line_defect,
                              make_striped_domains)
from nv_engine.imaging import (ScanGrid, edge_width_10_90, find_distance_for_edge_width, fwhm,
                               psf_delta_line, resolution_map, scan_dominant_period)
from nv_engine.probe import EchoTiming, OscillationMode
from nv_engine.spin import (NVParams, TransverseField, echo_phase_closed, echo_phase_numeric,
                            transition_frequencies)

NM = 1e-9
UM = 1e-6


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str
    seconds: float


def check_echo_quadrature(seed: int, n_cases: int = 1000) -> CheckResult:
    """Closed-form echo phase against composite Simpson quadrature"""
    rng = derive_rng(seed, "repro/echo")
    d_perp = NVParams.from_defaults().d_perp
    worst = 0.0
    for _ in range(n_cases):
        e_ac = rng.uniform(1e2, 1e6)
        f = rng.uniform(1e4, 1e6)
        tau = (1.0 - rng.uniform()) * 4.0 / f
        tau_t = rng.uniform(0.0, 2.0 / f)
        closed = echo_phase_closed(d_perp, e_ac, f, tau, tau_t)
        numeric = echo_phase_numeric(d_perp, e_ac, f, tau, tau_t, n_steps=10_000)
        worst = max(worst, abs(numeric - closed) / max(abs(closed), 1e-12))
    return CheckResult("echo quadrature", worst < 1e-8,
                       f"max relative error {worst:.3e} over {n_cases} cases", 0.0)


def check_field_solvers() -> CheckResult:
    """Fourier and Coulomb solvers against the closed-form line-charge field"""
    lam, z = 1e-10, 30 * NM
    charge = make_line_defect(lam, 1 * NM, 12 * UM)
    x = np.arange(-300, 301) * NM
    points = np.stack([x, np.zeros_like(x), np.full_like(x, z)], axis=-1)
    fourier = fourier_stray_field(charge, z, FieldConvention.PAPER).field(points)
    analytic = AnalyticLineChargeSampler(lam, convention=FieldConvention.PAPER).field(points)
    fourier_error = float(np.max(np.abs(fourier - analytic)) / np.max(np.abs(analytic)))

    pitch = 1 * NM
    sigma = np.zeros((64, 64))
    sigma[32, :] = lam / pitch
    small = ChargeMap(sigma, pitch, pitch, (-32 * pitch, 0.0))
    x_small = np.arange(-2, 3) * pitch
    near = np.stack([x_small, np.full_like(x_small, 31.5 * pitch),
                     np.full_like(x_small, 4 * pitch)], axis=-1)
    coulomb = CoulombOracleSampler(small).field(near)
    reference = AnalyticLineChargeSampler(lam, convention=FieldConvention.TEXTBOOK).field(near)
    coulomb_error = float(np.max(np.abs(coulomb - reference)) / np.max(np.abs(reference)))

    passed = fourier_error < 0.01 and coulomb_error < 0.02
    return CheckResult("field solvers", passed,
                       f"fourier {fourier_error:.3e} (< 1e-2), coulomb {coulomb_error:.3e} (< 2e-2)",
                       0.0)


def check_psf_headline() -> CheckResult:
    """10 nm edge width distance and the FWHM there, A = 0.8 nm"""
    amplitude = 0.8 * NM
    z_star = find_distance_for_edge_width(10 * NM, amplitude)
    profile = psf_delta_line(z_star, amplitude)
    width = edge_width_10_90(profile)
    peak_width = fwhm(profile)
    passed = (12 * NM <= z_star <= 22 * NM and abs(width - 10 * NM) <= 0.5 * NM
              and 12 * NM <= peak_width <= 18 * NM)
    return CheckResult("psf headline", passed,
                       f"z* = {z_star / NM:.3f} nm, edge width {width / NM:.3f} nm, "
                       f"fwhm {peak_width / NM:.3f} nm", 0.0)


def check_resolution_map() -> CheckResult:
    """Masking and monotonicity of an intermittent-mode resolution map"""
    z_values = np.linspace(10, 100, 10) * NM
    a_values = np.linspace(2, 20, 10) * NM
    result = resolution_map(OscillationMode.INTERMITTENT, z_values, a_values)
    expected_mask = a_values[None, :] >= z_values[:, None]
    mask_ok = bool(np.array_equal(result.mask, expected_mask))
    monotone = True
    for j in range(a_values.size):
        column = result.widths[~result.mask[:, j], j]
        if np.any(np.diff(column) < -1e-12 * np.max(column)):
            monotone = False
    return CheckResult("resolution map", mask_ok and monotone,
                       f"mask matches: {mask_ok}, columns monotone in z: {monotone}", 0.0)


def check_striped_period() -> CheckResult:
    """Dominant period of an 18 um shear scan over 10 um stripes"""
    charge = make_striped_domains(10 * UM, 1e-3, 36 * UM, 100 * NM, smoothing=200 * NM)
    grid = ScanGrid.square(18 * UM, 128)
    period = scan_dominant_period(charge, NVParams.from_defaults(), OscillationMode.SHEAR_X,
                                  500 * NM, 50 * NM, grid, n_samples=64)
    passed = abs(period - 10 * UM) <= grid.pitch
    return CheckResult("striped period", passed,
                       f"period {period / UM:.4f} um, tolerance {grid.pitch / UM:.4f} um", 0.0)


def check_amplitude_calibration(seed: int, trials: int = 20) -> CheckResult:
    """Noiseless and shot-noise amplitude recovery"""
    worst_clean, worst_noisy = 0.0, 0.0
    for amplitude in (0.2 * NM, 0.8 * NM, 2 * NM, 5 * NM):
        worst_clean = max(worst_clean, abs(calibration_round_trip(amplitude) / amplitude - 1))
        for trial in range(trials):
            rng = derive_rng(seed, f"repro/calibration/{amplitude:.3e}/{trial}")
            recovered = calibration_round_trip(amplitude, rng)
            worst_noisy = max(worst_noisy, abs(recovered / amplitude - 1))
    passed = worst_clean < 0.02 and worst_noisy < 0.05
    return CheckResult("amplitude calibration", passed,
                       f"worst error noiseless {worst_clean:.3e}, shot noise {worst_noisy:.3e}",
                       0.0)


def check_delay_sweep(seed: int, trials: int = 50) -> CheckResult:
    """Sine and cosine refits of synthetic delay sweeps"""
    e_ac, f, tau_e = 2.36e5, 180e3, 0.7e-6
    params = NVParams.from_defaults()
    timing = EchoTiming(f=f, tau_e=tau_e)
    tau_w = np.linspace(0.0, 1.0 / f, 41)
    clean = delay_sweep(e_ac, params, timing, tau_w)
    clean_errors = [abs(fit_delay_sweep(clean, params, timing, model).e_ac / e_ac - 1)
                    for model in ("sine", "cosine")]
    rates = {}
    for model, noise in (("sine", 0.06), ("cosine", 0.15)):
        rngs = (derive_rng(seed, f"repro/delay_sweep/{model}/{trial}") for trial in range(trials))
        outcomes = delay_sweep_coverage(e_ac, params, timing, tau_w, model, noise, rngs)
        rates[model] = float(np.mean(outcomes))
    sine_rate, cosine_rate = rates["sine"], rates["cosine"]
    passed = max(clean_errors) < 0.01 and sine_rate >= 0.6 and cosine_rate >= 0.6
    return CheckResult("delay sweep", passed,
                       f"noiseless errors {clean_errors[0]:.2e}/{clean_errors[1]:.2e}, "
                       f"bracketing sine {sine_rate:.2f}, cosine {cosine_rate:.2f}", 0.0)


def check_hamiltonian() -> CheckResult:
    """Zero-bias splitting and the bias-field Stark slope"""
    base = NVParams.from_defaults(phi_b=0.3)
    field = TransverseField(1e5, 0.4)
    f_minus, f_plus = transition_frequencies(base, field)
    expected = 2.0 * base.d_perp * field.e_perp
    zero_bias_error = abs((f_plus - f_minus) - expected) / expected

    biased = NVParams.from_defaults(phi_b=0.3, b_perp=1e-3)
    step = 1e-5 * biased.gamma_e * biased.b_perp / biased.d_perp

    def splitting(e_perp: float) -> float:
        low, high = transition_frequencies(biased, TransverseField(e_perp, field.phi_e))
        return high - low

    # central difference across E = 0: a negative magnitude is the same field rotated by pi
    phi_opposite = (field.phi_e + math.pi) % (2.0 * math.pi)
    low, high = transition_frequencies(biased, TransverseField(step, phi_opposite))
    slope = (splitting(step) - (high - low)) / (2.0 * step)
    predicted = 2.0 * biased.d_perp * math.cos(2.0 * biased.phi_b + field.phi_e)
    slope_error = abs(slope - predicted) / abs(predicted)

    passed = zero_bias_error < 1e-9 and slope_error < 1e-3
    return CheckResult("hamiltonian", passed,
                       f"zero-bias splitting error {zero_bias_error:.2e}, "
                       f"slope error {slope_error:.2e}", 0.0)


def acceptance_checks(seed: int) -> Dict[str, Callable[[], CheckResult]]:
    return {
        "echo quadrature": lambda: check_echo_quadrature(seed),
        "field solvers": check_field_solvers,
        "psf headline": check_psf_headline,
        "resolution map": check_resolution_map,
        "striped period": check_striped_period,
        "amplitude calibration": lambda: check_amplitude_calibration(seed),
        "delay sweep": lambda: check_delay_sweep(seed),
        "hamiltonian": check_hamiltonian,
    }


def timed(check: Callable[[], CheckResult]) -> CheckResult:
    start = time.perf_counter()
    result = check()
    return result._replace(seconds=time.perf_counter() - start)
