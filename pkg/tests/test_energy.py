"""Oracle tests for the discrete energy kernel.

All numeric targets below are derived independently of the implementation:

* With the Hermitian-matrix convention T = i * sum M_jk dz_j dz̄_k (so the
  Euclidean Kähler form beta is M = I/2) and d^c = i(conj-d - d), the
  4-volume density of  d(phi) ^ d^c(psi) ^ T  is  8 Re<adj(M) grad(phi),
  grad(psi)>  with grad = (d/dz1, d/dz2).
* phi = Re z1:  grad = (1/2, 0), so against beta the density is
  8 * (1/2) * (1/4) = 1 and the energy equals the box volume exactly.
* phi = Re(z1^2): grad = (z1, 0), density 4|z1|^2; over the box of
  half-width 1/2 centred at 0 the integral is 4 * (1/12 + 1/12) = 2/3.
* The comparison inequality for smooth u <= v with dd^c u, dd^c v >= -c*beta:
  both  E_T(u,v) - E_T(v,v) + c*int (v-u) beta^T  and
  E_T(u,u) - E_T(u,v) + c*int (v-u) beta^T  are nonnegative.
* beta ^ T has volume density 2 tr(M); for T = beta the total mass of a box
  is twice its volume.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from biratdyn.energy import (
    ChartFunction,
    ChartMeetsExceptionalSet,
    DiscreteForm11,
    EnergyError,
    GridChart,
    NonPositiveT,
    PremiseViolated,
    bump_function,
    cauchy_diagnostic,
    complex_hessian,
    constant_function,
    coordinate_part,
    energy,
    energy_monotonicity_check,
    log_distance,
    pushforward_energy_check,
    random_trig,
    regularize,
    smoothed_log_distance,
    smoothed_log_form,
)
from biratdyn.geometry import HomogeneousPolynomial, ProjectivePoint
from biratdyn.maps import RationalSurfaceMap
from biratdyn.standard_maps import cremona_involution, henon_map, linear_map

ORIGIN = ProjectivePoint.exact_point(0, 0, 1)


def unit_box(resolution: int = 24) -> GridChart:
    return GridChart(center=ORIGIN, chart=2, halfwidth=0.5, resolution=resolution)


def wide_box(resolution: int = 16, halfwidth: float = 0.8) -> GridChart:
    return GridChart(center=ORIGIN, chart=2, halfwidth=halfwidth, resolution=resolution)


BETA = DiscreteForm11.euclidean()


# ---------------------------------------------------------------------------
# grid chart plumbing
# ---------------------------------------------------------------------------


class TestGridChart:
    def test_rejects_small_resolution(self):
        with pytest.raises(EnergyError):
            GridChart(center=ORIGIN, chart=2, halfwidth=1.0, resolution=7)

    def test_rejects_center_on_chart_line_at_infinity(self):
        with pytest.raises(EnergyError):
            GridChart(
                center=ProjectivePoint.exact_point(0, 1, 0),
                chart=2,
                halfwidth=1.0,
                resolution=16,
            )

    def test_axis_midpoints_are_symmetric_about_center(self):
        chart = GridChart(
            center=ProjectivePoint.numeric_point(0.3 - 0.1j, -0.2 + 0.4j, 1.0),
            chart=2,
            halfwidth=0.7,
            resolution=12,
        )
        c1, c2 = chart.affine_center
        assert np.isclose(chart.axis(0).mean(), c1.real, atol=1e-14)
        assert np.isclose(chart.axis(1).mean(), c1.imag, atol=1e-14)
        assert np.isclose(chart.axis(2).mean(), c2.real, atol=1e-14)
        assert np.isclose(chart.axis(3).mean(), c2.imag, atol=1e-14)
        steps = np.diff(chart.axis(0))
        assert np.allclose(steps, chart.step)

    def test_cell_volume(self):
        chart = unit_box(16)
        h = 2 * 0.5 / 16
        assert chart.cell_volume == pytest.approx(h**4, rel=1e-15)


# ---------------------------------------------------------------------------
# (1,1)-form containers
# ---------------------------------------------------------------------------


class TestDiscreteForm11:
    def test_euclidean_min_eigenvalue(self):
        assert BETA.min_eigenvalue() == pytest.approx(0.5, abs=1e-15)

    def test_indefinite_matrix_rejected_by_energy(self):
        bad = DiscreteForm11.constant(0.5, 0.9, 0.5)  # eigenvalues 1.4, -0.4
        assert bad.min_eigenvalue() < -1e-12
        with pytest.raises(NonPositiveT):
            energy(coordinate_part(1, "re"), bad, unit_box(8))

    def test_smoothed_log_form_is_positive(self):
        chart = wide_box(12)
        z1, z2 = chart.nodes()
        a, b, c = smoothed_log_form((0.1, -0.05), 0.02)(z1, z2)
        form = DiscreteForm11(a, b, c)
        assert form.min_eigenvalue() >= -1e-12

    def test_beta_wedge_beta_mass_is_twice_volume(self):
        chart = wide_box(10, halfwidth=0.6)
        density = BETA.mass_density()
        total = float(np.sum(np.broadcast_to(density, chart.shape))) * chart.cell_volume
        assert total == pytest.approx(2 * (2 * 0.6) ** 4, rel=1e-12)


# ---------------------------------------------------------------------------
# quadrature oracles
# ---------------------------------------------------------------------------


class TestEnergyQuadrature:
    def test_constant_function_has_zero_energy(self):
        assert energy(constant_function(3.7), BETA, unit_box(8)) == 0.0

    def test_linear_coordinate_energy_equals_box_volume(self):
        val = energy(coordinate_part(1, "re"), BETA, unit_box(24))
        assert abs(val - 1.0) < 1e-12

    def test_imaginary_coordinate_matches_real_coordinate(self):
        chart = unit_box(16)
        a = energy(coordinate_part(1, "re"), BETA, chart)
        b = energy(coordinate_part(2, "im"), BETA, chart)
        assert a == b

    def test_quadratic_energy_two_thirds_with_h_squared_refinement(self):
        phi = ChartFunction(
            value=lambda z1, z2: np.real(z1**2),
            d1=lambda z1, z2: z1,
            d2=lambda z1, z2: np.zeros_like(z1),
        )
        coarse = energy(phi, BETA, unit_box(24))
        fine = energy(phi, BETA, unit_box(48))
        assert abs(coarse - 2.0 / 3.0) < 2e-3
        assert abs(fine - 2.0 / 3.0) < 0.3 * abs(coarse - 2.0 / 3.0)

    def test_bilinear_polarization_identity(self):
        chart = wide_box(12)
        phi = random_trig(11)
        psi = random_trig(12)
        t = DiscreteForm11.constant(0.8, 0.1 + 0.2j, 0.7)
        assert t.min_eigenvalue() > 0
        e_sum = energy(phi + psi, t, chart)
        e_phi = energy(phi, t, chart)
        e_psi = energy(psi, t, chart)
        e_mixed = energy(phi, t, chart, psi=psi)
        assert abs(e_sum - (e_phi + 2 * e_mixed + e_psi)) < 1e-10

    def test_symmetry_is_exact(self):
        chart = wide_box(10)
        phi = random_trig(21)
        psi = random_trig(22)
        t = DiscreteForm11.constant(0.9, 0.15 - 0.1j, 0.6)
        assert energy(phi, t, chart, psi=psi) == energy(psi, t, chart, psi=phi)

    def test_energy_nonnegative_for_positive_form(self):
        chart = wide_box(10)
        for seed in range(5):
            phi = random_trig(seed)
            assert energy(phi, BETA, chart) >= -1e-12


# ---------------------------------------------------------------------------
# chart functions and derivatives
# ---------------------------------------------------------------------------


def _fd_wirtinger(fn, z1, z2, var: int, eps: float = 1e-6) -> np.ndarray:
    """Finite-difference d/dz_var of a real-valued closure."""
    if var == 1:
        dx = (fn(z1 + eps, z2) - fn(z1 - eps, z2)) / (2 * eps)
        dy = (fn(z1 + 1j * eps, z2) - fn(z1 - 1j * eps, z2)) / (2 * eps)
    else:
        dx = (fn(z1, z2 + eps) - fn(z1, z2 - eps)) / (2 * eps)
        dy = (fn(z1, z2 + 1j * eps) - fn(z1, z2 - 1j * eps)) / (2 * eps)
    return 0.5 * (dx - 1j * dy)


class TestChartFunctions:
    SAMPLES = [
        (0.31 + 0.12j, -0.44 + 0.27j),
        (-0.52 - 0.33j, 0.18 - 0.09j),
        (0.05 + 0.41j, 0.37 + 0.22j),
    ]

    @pytest.mark.parametrize(
        "fn",
        [
            random_trig(5),
            log_distance((0.9, -0.8)),
            smoothed_log_distance((0.9, -0.8), 0.1),
            bump_function((0.0, 0.0), (0.9, 0.9, 0.9, 0.9)),
        ],
        ids=["trig", "log", "smoothed-log", "bump"],
    )
    def test_analytic_first_derivatives_match_finite_differences(self, fn):
        for p1, p2 in self.SAMPLES:
            z1 = np.array([p1])
            z2 = np.array([p2])
            for var, closure in ((1, fn.d1), (2, fn.d2)):
                got = closure(z1, z2)
                ref = _fd_wirtinger(fn.value, z1, z2, var)
                assert np.allclose(got, ref, atol=5e-7), (var, p1, p2)

    def test_trig_analytic_hessian_matches_finite_differences(self):
        fn = random_trig(7)
        z1 = np.array([0.21 - 0.33j])
        z2 = np.array([-0.11 + 0.42j])
        h11, h12, h22 = complex_hessian(fn, z1, z2)
        bare = ChartFunction(value=fn.value, d1=fn.d1, d2=fn.d2)
        f11, f12, f22 = complex_hessian(bare, z1, z2)
        assert np.allclose(h11, f11, atol=1e-6)
        assert np.allclose(h12, f12, atol=1e-6)
        assert np.allclose(h22, f22, atol=1e-6)

    def test_smoothed_log_form_is_dd_c_of_smoothed_log(self):
        """The closed positive form returned by smoothed_log_form must be the
        complex Hessian (times 2, the dd^c normalization) of the smoothed
        logarithm - two independently coded expressions."""
        a = (0.13, -0.21)
        s = 0.3
        z1 = np.array([0.4 + 0.2j, -0.3 + 0.1j])
        z2 = np.array([0.1 - 0.5j, 0.2 + 0.3j])
        pot = smoothed_log_distance(a, s)
        h11, h12, h22 = complex_hessian(pot, z1, z2)
        fa, fb, fc = smoothed_log_form(a, s)(z1, z2)
        assert np.allclose(fa, 2 * np.real(h11), atol=1e-6)
        assert np.allclose(fb, 2 * h12, atol=1e-6)
        assert np.allclose(fc, 2 * np.real(h22), atol=1e-6)


# ---------------------------------------------------------------------------
# regularization of log singularities
# ---------------------------------------------------------------------------


class TestRegularize:
    U = log_distance((0.0, 0.0))

    def test_untouched_on_unit_sphere(self):
        u2 = regularize(self.U, 2, 0.25)
        z1 = np.array([1.0 + 0j])
        z2 = np.array([0.0 + 0j])
        assert u2.value(z1, z2)[0] == 0.0
        assert u2.d1(z1, z2)[0] == self.U.d1(z1, z2)[0]

    def test_clamped_near_singularity(self):
        u2 = regularize(self.U, 2, 0.25)
        z1 = np.array([1e-9 + 0j])
        z2 = np.array([0.0 + 0j])
        assert u2.value(z1, z2)[0] == -2.0
        assert u2.d1(z1, z2)[0] == 0.0

    def test_majorizes_and_decreases_in_level(self):
        rng = np.random.default_rng(20260825)
        z1 = rng.uniform(-1, 1, 1000) + 1j * rng.uniform(-1, 1, 1000)
        z2 = rng.uniform(-1, 1, 1000) + 1j * rng.uniform(-1, 1, 1000)
        u = self.U.value(z1, z2)
        u2 = regularize(self.U, 2, 0.25).value(z1, z2)
        u3 = regularize(self.U, 3, 0.25).value(z1, z2)
        assert np.all(u2 >= u - 1e-12)
        assert np.all(u3 >= u - 1e-12)
        assert np.all(u3 <= u2 + 1e-12)
        untouched = u >= -2 + 0.25
        assert np.array_equal(u2[untouched], u[untouched])
        clamped = u <= -2 - 0.25
        assert np.all(u2[clamped] == -2.0)

    def test_smooth_band_gradient_matches_finite_differences(self):
        u1 = regularize(self.U, 1, 0.5)
        # |z| = e^{-1} puts u + j = 0 in the middle of the smoothing band
        z1 = np.array([math.exp(-1) + 0j])
        z2 = np.array([0.0 + 0j])
        got = u1.d1(z1, z2)
        ref = _fd_wirtinger(u1.value, z1, z2, 1)
        assert np.allclose(got, ref, atol=1e-6)


# ---------------------------------------------------------------------------
# the two-sided comparison inequality
# ---------------------------------------------------------------------------


class TestMonotonicityCheck:
    def test_equal_arguments_give_zero_residuals(self):
        chart = wide_box(12)
        v = random_trig(31)
        report = energy_monotonicity_check(v, v, BETA, chart)
        assert report.residuals == (0.0, 0.0)

    def test_constant_shift_gives_exact_mass_residuals(self):
        chart = wide_box(12)
        v = random_trig(32)
        u = v + constant_function(-1.0)
        report = energy_monotonicity_check(u, v, BETA, chart)
        assert report.c > 0
        volume = (2 * 0.8) ** 4
        assert report.comparison_mass == pytest.approx(2 * volume, rel=1e-12)
        expected = report.c * report.comparison_mass
        assert report.residuals[0] == expected
        assert report.residuals[1] == expected

    def test_order_premise_enforced(self):
        chart = wide_box(12)
        v = random_trig(33)
        u = v + constant_function(0.5)  # u > v violates u <= v
        with pytest.raises(PremiseViolated):
            energy_monotonicity_check(u, v, BETA, chart)

    def test_supplied_c_too_small_is_rejected(self):
        chart = wide_box(12)
        v = ChartFunction(
            value=lambda z1, z2: -np.abs(z1) ** 2,
            d1=lambda z1, z2: -np.conj(z1),
            d2=lambda z1, z2: np.zeros_like(z1),
            h11=lambda z1, z2: -np.ones_like(z1, dtype=float),
            h12=lambda z1, z2: np.zeros_like(z1),
            h22=lambda z1, z2: np.zeros_like(z1, dtype=float),
        )
        u = v + constant_function(-1.0)
        with pytest.raises(PremiseViolated):
            energy_monotonicity_check(u, v, BETA, chart, c=1.0)
        report = energy_monotonicity_check(u, v, BETA, chart, c=8.0)
        assert min(report.residuals) >= -1e-8

    def test_two_hundred_random_pairs_satisfy_both_inequalities(self):
        chart = wide_box(10)
        worst = math.inf
        for seed in range(200):
            v = random_trig(2 * seed, terms=3, amplitude=0.4)
            drop = random_trig(2 * seed + 1, terms=2, amplitude=0.2)
            # u = v - (positive function): subtract a shifted oscillation
            u = v + (-1.0) * drop + constant_function(-1.3)
            report = energy_monotonicity_check(u, v, BETA, chart)
            worst = min(worst, *report.residuals)
        assert worst >= -1e-8

    def test_mixed_form_also_passes(self):
        chart = wide_box(10)
        t = DiscreteForm11.constant(0.7, 0.2 + 0.1j, 0.8)
        assert t.min_eigenvalue() > 0
        for seed in (400, 401, 402):
            v = random_trig(seed, terms=3, amplitude=0.4)
            u = v + constant_function(-0.7)
            report = energy_monotonicity_check(u, v, t, chart)
            assert min(report.residuals) >= -1e-8


# ---------------------------------------------------------------------------
# Cauchy behaviour of regularizing sequences
# ---------------------------------------------------------------------------

SING = (0.0137, -0.0071, 0.0113, 0.0049)  # generic offset, never a grid node
SING_C = (SING[0] + 1j * SING[1], SING[2] + 1j * SING[3])


class TestCauchyDiagnostic:
    def test_smooth_function_stabilizes_immediately(self):
        chart = wide_box(12)
        u = 0.3 * random_trig(41)
        diag = cauchy_diagnostic(u, BETA, chart, levels=range(1, 9))
        assert diag.matrix.max() < 1e-9
        assert diag.decays

    def test_log_singularity_against_smooth_form_is_cauchy(self):
        chart = GridChart(center=ORIGIN, chart=2, halfwidth=0.8, resolution=24)
        u = log_distance(SING_C)
        diag = cauchy_diagnostic(u, BETA, chart, levels=range(1, 9))
        cons = np.asarray(diag.consecutive)
        # entries fade along the tail and end below the resolution floor
        assert np.all(cons[1:] <= cons[:-1] + 1e-12)
        assert cons[-1] < 1e-6
        assert diag.decays
        # seminorms stay bounded: the tail no longer grows
        semis = np.asarray(diag.seminorms)
        assert semis[-1] <= semis[len(semis) // 2] * 1.05

    def test_form_with_infinite_potential_at_singularity_fails_to_decay(self):
        chart = GridChart(center=ORIGIN, chart=2, halfwidth=0.8, resolution=32)
        u = log_distance(SING_C)
        levels = [0.5 + 0.25 * k for k in range(9)]
        smooth = cauchy_diagnostic(u, BETA, chart, levels=levels)
        assert smooth.decays
        # concentrate T at the singular point of u: its local potential is
        # -inf there in the unsmoothed limit
        t = DiscreteForm11.from_function(chart, smoothed_log_form(SING_C, chart.step / 4))
        bad = cauchy_diagnostic(u, t, chart, levels=levels)
        assert not bad.decays
        cons = np.asarray(bad.consecutive)
        assert cons[-1] > 0.3 * cons[0]
        # seminorms keep growing instead of saturating
        semis = np.asarray(bad.seminorms)
        assert semis[-1] > semis[len(semis) // 2] * 1.1


# ---------------------------------------------------------------------------
# change of variables
# ---------------------------------------------------------------------------


def _rotation_map() -> RationalSurfaceMap:
    from fractions import Fraction

    m = [
        [Fraction(3, 5), Fraction(-4, 5), 0],
        [Fraction(4, 5), Fraction(3, 5), 0],
        [0, 0, 1],
    ]
    minv = [
        [Fraction(3, 5), Fraction(4, 5), 0],
        [Fraction(-4, 5), Fraction(3, 5), 0],
        [0, 0, 1],
    ]
    return linear_map(m, name="rotation35"), linear_map(minv, name="rotation35-inv")


class TestPushforward:
    def test_unitary_rotation_is_an_isometry(self):
        f, finv = _rotation_map()
        f.inverse = finv
        finv.inverse = f
        u = random_trig(51, terms=3, amplitude=0.6)
        chart = GridChart(center=ORIGIN, chart=2, halfwidth=1.0, resolution=24)
        check = pushforward_energy_check(u, f, BETA, chart)
        assert check.relative_discrepancy < 1e-3

    def test_henon_window_away_from_exceptional_sets(self):
        h = henon_map()
        chart = GridChart(center=ORIGIN, chart=2, halfwidth=0.6, resolution=24)
        u = random_trig(52, terms=3, amplitude=0.5)
        check = pushforward_energy_check(u, h, BETA, chart)
        assert check.relative_discrepancy < 0.02

    def test_log_singularity_with_finite_potential_form(self):
        h = henon_map()
        chart = GridChart(center=ORIGIN, chart=2, halfwidth=0.6, resolution=24)
        probe = pushforward_energy_check(
            random_trig(53), h, BETA, chart
        )
        tc1, tc2 = probe.target_chart.affine_center
        sing = (tc1 + (0.0231 + 0.0117j), tc2 + (-0.0153 + 0.0191j))
        u = log_distance(sing)
        check = pushforward_energy_check(
            u, h, BETA, chart, target_resolution=48
        )
        assert math.isfinite(check.source_value)
        assert math.isfinite(check.target_value)
        assert check.relative_discrepancy < 0.05

    def test_window_meeting_indeterminacy_is_rejected(self):
        sigma = cremona_involution()
        chart = GridChart(center=ORIGIN, chart=2, halfwidth=0.5, resolution=12)
        with pytest.raises(ChartMeetsExceptionalSet):
            pushforward_energy_check(random_trig(54), sigma, BETA, chart)

    def test_missing_inverse_is_rejected(self):
        x = HomogeneousPolynomial.monomial(1, 0, 0)
        y = HomogeneousPolynomial.monomial(0, 1, 0)
        t = HomogeneousPolynomial.monomial(0, 0, 1)
        f = RationalSurfaceMap([x + y, y, t])
        chart = GridChart(center=ORIGIN, chart=2, halfwidth=0.5, resolution=12)
        with pytest.raises(EnergyError):
            pushforward_energy_check(random_trig(55), f, BETA, chart)
