import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app_utils.errors import ValidationError
from app_utils.seeding import derive_rng
from nv_engine.spin import (NVParams, ReadoutAxis, TransverseField, align_phi_b,
                            differential_signals, echo_phase_closed, echo_phase_numeric,
                            ground_state_hamiltonian, nv_rotation_from_angles,
                            project_to_nv_frame, readout_population, readout_populations,
                            stark_sensitive_projection, stark_shift, transition_frequencies)

angles = st.floats(0.0, 2.0 * math.pi, exclude_max=True)


def test_default_orientation_is_a_rotation():
    rotation = nv_rotation_from_angles(math.radians(54.7356), 0.3)
    np.testing.assert_allclose(rotation @ rotation.T, np.eye(3), atol=1e-14)
    assert np.linalg.det(rotation) == pytest.approx(1.0)


def test_params_reject_bad_rotation():
    with pytest.raises(ValidationError):
        NVParams.from_defaults(nv_rotation=np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValidationError):
        NVParams.from_defaults(d_perp=0.0)


def test_hamiltonian_is_hermitian(params):
    h = ground_state_hamiltonian(params.with_phi_b(0.4), TransverseField(3e5, 1.1))
    np.testing.assert_allclose(h, h.conj().T)


def test_zero_field_transitions_equal_zero_field_splitting(params):
    f_minus, f_plus = transition_frequencies(params, TransverseField(0.0, 0.0))
    assert f_minus == pytest.approx(params.d_gs, rel=1e-14)
    assert f_plus == pytest.approx(params.d_gs, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e3, 1e7), angles, angles)
def test_unbiased_splitting_is_linear_in_the_field(e_perp, phi_e, phi_b):
    params = NVParams.from_defaults(phi_b=phi_b)
    f_minus, f_plus = transition_frequencies(params, TransverseField(e_perp, phi_e))
    shift = params.d_perp * e_perp
    assert f_plus == pytest.approx(params.d_gs + shift, rel=1e-12)
    assert f_minus == pytest.approx(params.d_gs - shift, rel=1e-12)


def test_biased_stark_slope():
    biased = NVParams.from_defaults(phi_b=0.3, b_perp=1e-3)
    phi_e = 0.4
    step = 1e-5 * biased.gamma_e * biased.b_perp / biased.d_perp

    def splitting(field):
        low, high = transition_frequencies(biased, field)
        return high - low

    slope = (splitting(TransverseField(step, phi_e))
             - splitting(TransverseField(step, phi_e + math.pi))) / (2.0 * step)
    expected = 2.0 * biased.d_perp * math.cos(2.0 * biased.phi_b + phi_e)
    assert slope == pytest.approx(expected, rel=1e-3)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1e7), angles, angles)
def test_stark_shifts_mirror(e_perp, phi_e, phi_b):
    params = NVParams.from_defaults(phi_b=phi_b)
    plus, minus = stark_shift(params, TransverseField(e_perp, phi_e))
    assert plus == -minus
    assert abs(plus) <= 2.0 * math.pi * params.d_perp * e_perp * (1 + 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), angles)
def test_sensitive_projection_matches_polar_form(ex, ey, ez, phi_b):
    params = NVParams.from_defaults(phi_b=phi_b)
    transverse = project_to_nv_frame(params, [ex, ey, ez])
    polar = transverse.e_perp * math.cos(2.0 * phi_b + transverse.phi_e)
    linear = stark_sensitive_projection(params, np.array([ex, ey, ez]))
    assert linear == pytest.approx(polar, rel=1e-9, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 1e6), angles)
def test_aligned_bias_maximizes_the_shift(e_perp, phi_e):
    transverse = TransverseField(e_perp, phi_e)
    phi_b = align_phi_b(transverse)
    assert 0.0 <= phi_b < math.pi
    assert math.cos(2.0 * phi_b + phi_e) == pytest.approx(1.0, abs=1e-12)


def test_transverse_field_validation():
    with pytest.raises(ValidationError):
        TransverseField(-1.0, 0.0)
    with pytest.raises(ValidationError):
        TransverseField(1.0, 2.0 * math.pi)


def test_echo_phase_closed_form_values(params):
    f = 180e3
    phase = echo_phase_closed(params.d_perp, 2.36e5, f, 1.0 / f, 0.0)
    assert phase == pytest.approx(4.0 * params.d_perp * 2.36e5 / f)
    assert echo_phase_closed(params.d_perp, 2.36e5, f, 1.0 / f, 0.25 / f) == pytest.approx(
        0.0, abs=1e-12)
    assert echo_phase_closed(params.d_perp, 2.36e5, f, 2.0 / f, 0.0) == pytest.approx(
        0.0, abs=1e-12)


def test_echo_phase_closed_rejects_zero_frequency(params):
    with pytest.raises(ValidationError):
        echo_phase_closed(params.d_perp, 1.0, 0.0, 1.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e2, 1e6), st.floats(1e4, 1e6), st.floats(0.05, 4.0), st.floats(0.0, 2.0))
def test_echo_quadrature_matches_closed_form(e_ac, f, tau_periods, delay_periods):
    d_perp = NVParams.from_defaults().d_perp
    tau, tau_t = tau_periods / f, delay_periods / f
    closed = echo_phase_closed(d_perp, e_ac, f, tau, tau_t)
    numeric = echo_phase_numeric(d_perp, e_ac, f, tau, tau_t, n_steps=10_000)
    scale = 4.0 * d_perp * e_ac / f
    assert numeric == pytest.approx(closed, rel=1e-8, abs=1e-12 * scale)


def test_echo_quadrature_needs_enough_steps(params):
    with pytest.raises(ValidationError):
        echo_phase_numeric(params.d_perp, 1.0, 1e5, 1e-5, 0.0, n_steps=100)


def test_echo_quadrature_over_random_timings():
    rng = derive_rng(2024, "echo quadrature")
    d_perp = NVParams.from_defaults().d_perp
    for _ in range(1000):
        e_ac = rng.uniform(1e2, 1e6)
        f = rng.uniform(1e4, 1e6)
        tau = (1.0 - rng.uniform()) * 4.0 / f
        tau_t = rng.uniform(0.0, 2.0 / f)
        closed = echo_phase_closed(d_perp, e_ac, f, tau, tau_t)
        numeric = echo_phase_numeric(d_perp, e_ac, f, tau, tau_t, n_steps=10_000)
        assert abs(numeric - closed) / max(abs(closed), 1e-12) < 1e-8


def test_echo_quadrature_converges_at_fourth_order(params):
    f = 180e3
    tau, tau_t = 3.0 / f, 0.1 / f
    closed = echo_phase_closed(params.d_perp, 2.36e5, f, tau, tau_t)
    errors = [abs(echo_phase_numeric(params.d_perp, 2.36e5, f, tau, tau_t, n_steps=n) - closed)
              for n in (1000, 2000, 4000)]
    for coarse, fine in zip(errors, errors[1:]):
        assert 14.0 < coarse / fine < 18.0


@settings(max_examples=30, deadline=None)
@given(st.floats(1e2, 1e6), st.floats(0.1, 10.0), st.floats(0.1, 3.9), st.floats(0.0, 2.0))
def test_echo_phase_is_linear_in_the_field(e_ac, factor, tau_periods, delay_periods):
    d_perp, f = NVParams.from_defaults().d_perp, 180e3
    tau, tau_t = tau_periods / f, delay_periods / f
    closed = echo_phase_closed(d_perp, e_ac, f, tau, tau_t)
    scaled = echo_phase_closed(d_perp, factor * e_ac, f, tau, tau_t)
    assert scaled == pytest.approx(factor * closed, rel=1e-12)
    numeric = echo_phase_numeric(d_perp, e_ac, f, tau, tau_t, n_steps=2000)
    numeric_scaled = echo_phase_numeric(d_perp, factor * e_ac, f, tau, tau_t, n_steps=2000)
    assert numeric_scaled == pytest.approx(factor * numeric, rel=1e-12,
                                           abs=1e-13 * abs(4.0 * d_perp * factor * e_ac / f))


@settings(max_examples=50, deadline=None)
@given(st.floats(-20.0, 20.0))
def test_readout_projections(phi):
    populations = readout_populations(phi)
    assert populations.p_s_plus + populations.p_s_minus == pytest.approx(1.0)
    assert populations.p_c_plus + populations.p_c_minus == pytest.approx(1.0)
    p_s, p_c = differential_signals(populations)
    assert p_s == pytest.approx(math.sin(phi), abs=1e-12)
    assert p_c == pytest.approx(math.cos(phi), abs=1e-12)
    assert readout_population(phi, ReadoutAxis.X_3PI_HALF) == populations.p_c_minus
