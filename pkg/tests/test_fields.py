import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import constants

from app_utils.errors import DomainError, ValidationError
from nv_engine.fields import (AnalyticLineChargeSampler, BlobSpec, ChargeMap,
                              CoulombOracleSampler, FieldConvention, UniformSampler,
                              analytic_line_charge_field, convention_factor, field_on_grid,
                              fourier_stray_field, make_gaussian_blobs, make_line_defect,
                              make_striped_domains, superpose, zero_charge)

NM = 1e-9
UM = 1e-6


def random_map(seed, n=16, pitch=10 * NM):
    values = np.random.default_rng(seed).normal(size=(n, n)) * 1e-3
    return ChargeMap(values, pitch, pitch, (-(n - 1) * pitch / 2, -(n - 1) * pitch / 2))


def test_convention_factor():
    assert convention_factor(FieldConvention.TEXTBOOK) == 1.0
    assert convention_factor("paper") == pytest.approx(-1.0 / (2.0 * math.pi))


def test_charge_map_rejects_bad_input():
    with pytest.raises(ValidationError):
        ChargeMap(np.zeros(4), 1.0, 1.0)
    with pytest.raises(ValidationError):
        ChargeMap(np.zeros((4, 4)), 0.0, 1.0)
    with pytest.raises(ValidationError):
        ChargeMap(np.full((4, 4), np.nan), 1.0, 1.0)


def test_zero_charge_gives_zero_field():
    sampler = fourier_stray_field(zero_charge(16, 10 * NM), 20 * NM)
    np.testing.assert_array_equal(sampler.grid_field(), 0.0)


def test_uniform_sheet_field_is_normal():
    sigma = 2e-3
    sampler = fourier_stray_field(ChargeMap(np.full((4, 4), sigma), NM, NM), 5 * NM,
                                  FieldConvention.TEXTBOOK)
    fields = sampler.grid_field()
    np.testing.assert_allclose(fields[0], 0.0, atol=1e-12 * sigma / constants.epsilon_0)
    np.testing.assert_allclose(fields[1], 0.0, atol=1e-12 * sigma / constants.epsilon_0)
    np.testing.assert_allclose(fields[2], sigma / (2 * constants.epsilon_0), rtol=1e-12)


@pytest.mark.parametrize("convention", list(FieldConvention))
def test_fourier_matches_analytic_line_charge(convention):
    lam, z = 1e-10, 30 * NM
    charge = make_line_defect(lam, 1 * NM, 12 * UM)
    x = np.arange(-300, 301) * NM
    points = np.stack([x, np.zeros_like(x), np.full_like(x, z)], axis=-1)
    fourier = fourier_stray_field(charge, z, convention).field(points)
    analytic = AnalyticLineChargeSampler(lam, convention=convention).field(points)
    error = np.max(np.abs(fourier - analytic)) / np.max(np.abs(analytic))
    assert error < 0.01


def test_coulomb_sum_matches_line_charge_near_a_long_line():
    lam, pitch = 1e-10, 1 * NM
    sigma = np.zeros((64, 64))
    sigma[32, :] = lam / pitch
    charge = ChargeMap(sigma, pitch, pitch, (-32 * pitch, 0.0))
    x = np.arange(-2, 3) * pitch
    points = np.stack([x, np.full_like(x, 31.5 * pitch), np.full_like(x, 4 * pitch)], axis=-1)
    coulomb = CoulombOracleSampler(charge).field(points)
    reference = AnalyticLineChargeSampler(lam, convention=FieldConvention.TEXTBOOK).field(points)
    assert np.max(np.abs(coulomb - reference)) / np.max(np.abs(reference)) < 0.02


def test_analytic_line_charge_paper_sign():
    field = analytic_line_charge_field(0.0, 10 * NM, 1e-10)
    assert field[0] == 0.0
    assert field[2] < 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 16), st.integers(0, 2 ** 16),
       st.floats(-5.0, 5.0, allow_subnormal=False), st.floats(-5.0, 5.0, allow_subnormal=False))
def test_fourier_solver_is_linear(seed_a, seed_b, a, b):
    first, second = random_map(seed_a), random_map(seed_b)
    combined = ChargeMap(a * first.sigma + b * second.sigma, first.dx, first.dy, first.origin)
    z = 15 * NM
    expected = (a * fourier_stray_field(first, z).grid_field()
                + b * fourier_stray_field(second, z).grid_field())
    actual = fourier_stray_field(combined, z).grid_field()
    scale = max(np.max(np.abs(expected)), 1e-300)
    np.testing.assert_allclose(actual, expected, rtol=0, atol=1e-9 * scale)


@settings(max_examples=20, deadline=None)
@given(st.floats(-1 * UM, 1 * UM), st.floats(-1 * UM, 1 * UM))
def test_fourier_solver_is_translation_invariant(a, b):
    charge = make_gaussian_blobs([BlobSpec(20 * NM, -10 * NM, 30 * NM, 1e-3)], 32, 10 * NM)
    x = np.linspace(-60, 60, 7) * NM
    points = np.stack([x, np.full_like(x, 25 * NM), np.full_like(x, 20 * NM)], axis=-1)
    original = fourier_stray_field(charge, 20 * NM).field(points)
    moved = fourier_stray_field(charge.shifted(a, b), 20 * NM).field(points + [a, b, 0.0])
    np.testing.assert_allclose(moved, original, rtol=0, atol=1e-7 * np.max(np.abs(original)))


def test_other_heights_match_a_sampler_built_there():
    charge = random_map(7)
    x = np.linspace(-40, 40, 5) * NM
    points = np.stack([x, np.zeros_like(x), np.full_like(x, 35 * NM)], axis=-1)
    from_other = fourier_stray_field(charge, 10 * NM).field(points)
    direct = fourier_stray_field(charge, 35 * NM).field(points)
    np.testing.assert_allclose(from_other, direct, rtol=1e-12, atol=0)


def test_points_outside_the_padded_window_are_rejected():
    sampler = fourier_stray_field(make_line_defect(1e-10, NM, 200 * NM), 10 * NM)
    with pytest.raises(DomainError):
        sampler.field([150 * NM, 0.0, 10 * NM])
    with pytest.raises(DomainError):
        sampler.field([0.0, 0.0, 0.0])
    # y is periodic for a line defect, so any y is allowed
    assert np.all(np.isfinite(sampler.field([0.0, 5 * UM, 10 * NM])))


def test_analytic_sampler_rejects_the_surface():
    with pytest.raises(DomainError):
        AnalyticLineChargeSampler(1e-10).field([0.0, 0.0, -1 * NM])


def test_uniform_sampler_broadcasts():
    fields = UniformSampler([1.0, 2.0, 3.0]).field(np.zeros((4, 5, 3)))
    assert fields.shape == (4, 5, 3)
    np.testing.assert_array_equal(fields[2, 3], [1.0, 2.0, 3.0])


def test_field_on_grid_shape():
    sampler = fourier_stray_field(random_map(3), 10 * NM)
    fields = field_on_grid(sampler, np.linspace(-50, 50, 6) * NM, np.linspace(-20, 20, 3) * NM,
                           10 * NM)
    assert fields.shape == (3, 6, 3)


def test_superpose_adds_and_checks_grids():
    first, second = random_map(1), random_map(2)
    np.testing.assert_allclose(superpose(first, second).sigma, first.sigma + second.sigma)
    with pytest.raises(ValidationError):
        superpose(first, second.shifted(1 * NM, 0.0))


def test_striped_domains_layout():
    period, resolution = 1 * UM, 10 * NM
    charge = make_striped_domains(period, 1e-3, 4 * UM, resolution)
    assert charge.uniform_axes == (False, True)
    center = int(np.argmin(np.abs(charge.x_coords)))
    assert charge.sigma[center, 0] == 1e-3
    half = int(round(period / 2 / resolution))
    column = charge.sigma[:, 0]
    np.testing.assert_array_equal(column[:-half], -column[half:])


def test_striped_domains_preconditions():
    with pytest.raises(ValidationError):
        make_striped_domains(1 * UM, 1e-3, 0.5 * UM, 10 * NM)
    with pytest.raises(ValidationError):
        make_striped_domains(1 * UM, 1e-3, 4 * UM, 300 * NM)


def test_line_defect_holds_the_line_density():
    charge = make_line_defect(2e-10, NM, 100 * NM, ny=4)
    assert charge.nx % 2 == 1
    assert charge.total_charge_density_integral() == pytest.approx(2e-10 * 4 * NM)
    assert charge.x_coords[charge.nx // 2] == pytest.approx(0.0, abs=1e-20)


def centered_blob(n=33, pitch=10 * NM):
    return make_gaussian_blobs([BlobSpec(0.0, 0.0, 30 * NM, 1e-3)], n, pitch)


def test_even_charge_gives_odd_ex_and_even_ez():
    fields = fourier_stray_field(centered_blob(), 20 * NM).grid_field()
    scale = np.max(np.abs(fields))
    np.testing.assert_allclose(fields[0][::-1, :], -fields[0], rtol=0, atol=1e-9 * scale)
    np.testing.assert_allclose(fields[2][::-1, :], fields[2], rtol=0, atol=1e-9 * scale)


def test_line_charge_field_falls_as_one_over_height():
    z = np.geomspace(1 * NM, 10 * UM, 25)
    fields = analytic_line_charge_field(0.0, z, 1e-10)
    product = np.linalg.norm(fields, axis=-1) * z
    np.testing.assert_allclose(product, product[0], rtol=1e-9, atol=0)


def test_fourier_matches_coulomb_sum_above_a_blob():
    charge = centered_blob()
    z = 30 * NM
    x = np.arange(-8, 9) * 10 * NM
    xs, ys = np.meshgrid(x, x[::4], indexing="ij")
    points = np.stack([xs, ys, np.full_like(xs, z)], axis=-1)
    fourier = fourier_stray_field(charge, z, FieldConvention.TEXTBOOK).field(points)
    coulomb = CoulombOracleSampler(charge).field(points)
    assert np.max(np.abs(fourier - coulomb)) / np.max(np.abs(coulomb)) < 0.02


def test_planes_at_other_heights_are_cached():
    sampler = fourier_stray_field(random_map(11), 10 * NM)
    x = np.linspace(-40, 40, 5) * NM
    points = np.concatenate([
        np.stack([x, np.zeros_like(x), np.full_like(x, z)], axis=-1) for z in (20 * NM, 30 * NM)])
    first = sampler.field(points)
    hits = sampler.plane_cache_info().hits
    second = sampler.field(points)
    np.testing.assert_array_equal(second, first)
    assert sampler.plane_cache_info().hits >= hits + 2
    assert sampler.plane_cache_info().currsize == 3
    assert not sampler.grid_field().flags.writeable
