import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app_utils.errors import DegenerateDataError, NumericError, ValidationError
from app_utils.seeding import derive_rng
from nv_engine.calibration import (SQRT_HALF_PI, GaussianProfile, PhotonTrace,
                                   calibrate_amplitude, calibration_round_trip, delay_sweep,
                                   delay_sweep_coverage, fit_amplitude_vs_voltage,
                                   fit_delay_sweep, fit_gaussian_profile, fit_photon_trace,
                                   half_maximum_point, linearization_error, solve_amplitude,
                                   synthesize_profile_samples)
from nv_engine.fields import UniformSampler
from nv_engine.probe import EchoTiming
from nv_engine.spin import NVParams

NM = 1e-9
UM = 1e-6
WIDTH = 2.5 * UM


@pytest.fixture
def profile():
    return GaussianProfile(1e7, 1e8 * WIDTH * SQRT_HALF_PI, WIDTH, 0.3 * UM)


@pytest.fixture
def timing():
    return EchoTiming(f=180e3, tau_e=0.7e-6)


def test_profile_peak_and_shape(profile):
    assert profile.peak == pytest.approx(1e8)
    assert profile.evaluate(profile.z0) == pytest.approx(1.1e8)
    assert profile.derivative(profile.z0) == 0.0
    with pytest.raises(ValidationError):
        GaussianProfile(0.0, 1.0, 0.0, 0.0)


def test_gaussian_fit_recovers_noiseless_profile(profile):
    samples = synthesize_profile_samples(profile, profile.z0 + np.linspace(-3, 3, 121) * WIDTH)
    fitted = fit_gaussian_profile(samples)
    assert fitted.w == pytest.approx(profile.w, rel=1e-6)
    assert fitted.z0 == pytest.approx(profile.z0, abs=1e-6 * WIDTH)
    assert fitted.peak == pytest.approx(profile.peak, rel=1e-6)
    assert fitted.s0 == pytest.approx(profile.s0, rel=1e-5)
    assert fitted.diagnostics.residual_rms < 1e-3 * profile.peak


def test_gaussian_fit_rejects_poor_data(profile):
    z = np.linspace(-3, 3, 5) * WIDTH
    with pytest.raises(ValidationError):
        fit_gaussian_profile(synthesize_profile_samples(profile, z))
    flat = np.column_stack([np.linspace(-3, 3, 20) * WIDTH, np.full(20, 5.0)])
    with pytest.raises(DegenerateDataError):
        fit_gaussian_profile(flat)


@pytest.mark.parametrize("side, sign", [("left", 1.0), ("right", -1.0)])
def test_half_maximum_point(profile, side, sign):
    anchor = half_maximum_point(profile, side)
    assert anchor.h_half == pytest.approx(profile.s0 + profile.peak / 2.0, rel=1e-12)
    assert math.copysign(1.0, anchor.k) == sign
    assert anchor.k * anchor.z_half + anchor.intercept == pytest.approx(anchor.h_half, rel=1e-12)
    with pytest.raises(ValidationError):
        half_maximum_point(profile, "middle")


@settings(max_examples=50, deadline=None)
@given(st.floats(1e10, 1e14), st.floats(1e-6, 1e-5), st.floats(1e6, 1e8), st.floats(1e-10, 1e-8))
def test_solve_amplitude_inverts_the_linear_model(k, z0, s0, amplitude):
    h_max = k * (z0 + amplitude) + s0
    h_min = k * (z0 - amplitude) + s0
    assert solve_amplitude(h_max, h_min, k, z0, s0) == pytest.approx(amplitude, rel=1e-6)


def test_solve_amplitude_rejects_degenerate_input():
    with pytest.raises(ValidationError):
        solve_amplitude(2.0, 0.0, 1.0, 1.0, 0.0)
    with pytest.raises(ValidationError):
        solve_amplitude(2.0, 1.0, 0.0, 1.0, 0.0)


def test_photon_trace_fit():
    times = (np.arange(256) + 0.5) / 64
    trace = PhotonTrace(times, 10.0 + 3.0 * np.sin(2 * math.pi * times + 0.4), f=1.0)
    fit = fit_photon_trace(trace)
    assert fit.h_max == pytest.approx(13.0)
    assert fit.h_min == pytest.approx(7.0)
    assert fit.phase == pytest.approx(0.4)
    assert not fit.negative_minimum


def test_photon_trace_needs_enough_periods():
    times = (np.arange(64) + 0.5) / 64
    with pytest.raises(ValidationError):
        fit_photon_trace(PhotonTrace(times, np.ones(64), f=1.0))


def test_negative_minimum_is_flagged_and_rejected(profile):
    times = (np.arange(256) + 0.5) / 64
    rectified = 2.0 * np.maximum(np.sin(2 * math.pi * times), 0.0)
    trace = PhotonTrace(times, rectified, f=1.0)
    assert fit_photon_trace(trace).negative_minimum
    samples = synthesize_profile_samples(profile, profile.z0 + np.linspace(-3, 3, 61) * WIDTH)
    with pytest.raises(NumericError):
        calibrate_amplitude(samples, trace)


@pytest.mark.parametrize("amplitude", [0.2 * NM, 0.8 * NM, 2 * NM, 5 * NM])
def test_noiseless_calibration_round_trip(amplitude):
    assert calibration_round_trip(amplitude) == pytest.approx(amplitude, rel=0.02)


def test_shot_noise_calibration_round_trip(rng):
    assert calibration_round_trip(0.8 * NM, rng) == pytest.approx(0.8 * NM, rel=0.05)


def test_linearization_error_grows_with_amplitude(profile):
    small = linearization_error(profile, 0.01 * WIDTH)
    large = linearization_error(profile, 0.2 * WIDTH)
    assert small < 1e-2
    assert small < large


def test_amplitude_vs_voltage_line():
    line = fit_amplitude_vs_voltage([(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)])
    assert line.slope == pytest.approx(2.0)
    assert line.intercept == pytest.approx(0.0, abs=1e-12)
    assert line.r_squared == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        fit_amplitude_vs_voltage([(1.0, 2.0), (2.0, 4.0)])
    with pytest.raises(DegenerateDataError):
        fit_amplitude_vs_voltage([(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)])


@pytest.mark.parametrize("model", ["sine", "cosine"])
def test_noiseless_delay_sweep_recovers_field_and_delay(timing, model):
    params = NVParams.from_defaults()
    tau_w = np.linspace(0.0, 1.0 / timing.f, 41)
    table = delay_sweep(2.36e5, params, timing, tau_w)
    assert table.as_array().shape == (41, 5)
    fit = fit_delay_sweep(table, params, timing, model)
    assert fit.model == model
    assert fit.e_ac == pytest.approx(2.36e5, rel=1e-6)
    assert fit.tau_e == pytest.approx(0.7e-6, rel=1e-6)


def test_flat_sweep_is_degenerate(timing):
    params = NVParams.from_defaults()
    table = delay_sweep(0.0, params, timing, np.linspace(0.0, 1.0 / timing.f, 41))
    for model in ("sine", "cosine"):
        with pytest.raises(DegenerateDataError):
            fit_delay_sweep(table, params, timing, model)


def test_delay_sweep_input_checks(timing):
    params = NVParams.from_defaults()
    tau_w = np.linspace(0.0, 1.0 / timing.f, 41)
    with pytest.raises(ValidationError):
        fit_delay_sweep(delay_sweep(2.36e5, params, timing, tau_w[:5]), params, timing)
    with pytest.raises(ValidationError):
        short = np.linspace(0.0, 0.2 / timing.f, 41)
        fit_delay_sweep(delay_sweep(2.36e5, params, timing, short), params, timing)
    with pytest.raises(ValidationError):
        fit_delay_sweep(delay_sweep(2.36e5, params, timing, tau_w), params, timing, "tangent")
    with pytest.raises(ValidationError):
        delay_sweep(2.36e5, params, timing, tau_w, noise_sigma=0.1)
    with pytest.raises(ValidationError):
        delay_sweep(UniformSampler([0.0, 0.0, 1.0]), params, timing, tau_w)


@pytest.mark.slow
@pytest.mark.parametrize("model, noise", [("sine", 0.06), ("cosine", 0.15)])
def test_noisy_delay_sweeps_bracket_the_field(timing, model, noise):
    params = NVParams.from_defaults()
    tau_w = np.linspace(0.0, 1.0 / timing.f, 41)
    rngs = (derive_rng(1234, f"noisy sweep/{model}/{trial}") for trial in range(50))
    outcomes = delay_sweep_coverage(2.36e5, params, timing, tau_w, model, noise, rngs)
    assert np.mean(outcomes) >= 0.6


def test_operating_point_lies_on_the_voltage_line(rng):
    slope = 8e-12 / 1e-3
    volts = np.linspace(20e-3, 200e-3, 10)
    amplitudes = slope * volts + rng.normal(0.0, 5e-12, size=volts.size)
    line = fit_amplitude_vs_voltage(np.column_stack([volts, amplitudes]))
    assert line.slope == pytest.approx(slope, rel=0.05)
    assert line.slope * 100e-3 + line.intercept == pytest.approx(0.8 * NM, rel=0.02)


@pytest.mark.parametrize("model", ["sine", "cosine"])
@pytest.mark.parametrize("periods", [1, 3])
def test_delay_fit_ignores_whole_period_shifts_of_the_wait(timing, model, periods):
    params = NVParams.from_defaults()
    tau_w = np.linspace(0.0, 1.0 / timing.f, 41)
    shifted = tau_w + periods / timing.f
    fits = []
    for values in (tau_w, shifted):
        table = delay_sweep(2.36e5, params, timing, values, noise_sigma=0.02,
                            rng=derive_rng(7, "shifted sweep"))
        fits.append(fit_delay_sweep(table, params, timing, model))
    base, moved = fits
    period = (1.0 if model == "sine" else 0.5) / timing.f
    assert moved.e_ac == pytest.approx(base.e_ac, rel=1e-6)
    gap = (moved.tau_e - base.tau_e) % period
    assert min(gap, period - gap) < 1e-6 * period


def test_delay_sweep_coverage_brackets_the_true_field(timing):
    params = NVParams.from_defaults()
    tau_w = np.linspace(0.0, 1.0 / timing.f, 41)
    rngs = [derive_rng(11, f"coverage/{trial}") for trial in range(20)]
    outcomes = delay_sweep_coverage(2.36e5, params, timing, tau_w, "sine", 1e-3, rngs)
    assert len(outcomes) == 20
    assert np.mean(outcomes) >= 0.6
