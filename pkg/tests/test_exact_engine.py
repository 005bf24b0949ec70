import numpy as np
import pytest

from bivarseq import (
    asn_bounds,
    asn_exact,
    corner_mass_exact,
    estimator_expectation_exact,
    lattice_forward_dp,
    make_params,
    non_rejection_prob,
    power_exact,
    second_moment_exact,
    stopping_pmf_exact,
    variance_cv,
)
from conftest import TINY_DESIGNS, make_design
from oracles import enumerate_paths, independent_margins_pmf, tail_sum_asn

# parameter points that are feasible for every tiny design below
TINY_PARAMS = [(0.3, 0.4, 0.2), (0.25, 0.2, -0.05), (0.5, 0.3, 0.1)]


class TestAgainstEnumeration:
    @pytest.mark.parametrize("geom", TINY_DESIGNS)
    @pytest.mark.parametrize("point", TINY_PARAMS)
    def test_pmf_by_boundary(self, geom, point):
        design = make_design(*geom)
        params = make_params(*point)
        law = enumerate_paths(design, params.cell_probs)
        pmf = stopping_pmf_exact(design, params)
        np.testing.assert_allclose(pmf.mass_x, law.mass_x, atol=1e-12)
        np.testing.assert_allclose(pmf.mass_y, law.mass_y, atol=1e-12)
        np.testing.assert_allclose(pmf.mass_corner, law.mass_corner, atol=1e-12)
        assert pmf.continue_mass == pytest.approx(law.continue_mass, abs=1e-12)

    @pytest.mark.parametrize("geom", TINY_DESIGNS[:1])
    def test_moments_and_estimators(self, geom):
        design = make_design(*geom)
        for point in TINY_PARAMS:
            params = make_params(*point)
            law = enumerate_paths(design, params.cell_probs)
            assert power_exact(design, params) == pytest.approx(law.power, abs=1e-12)
            assert asn_exact(design, params) == pytest.approx(law.asn, abs=1e-12)
            assert second_moment_exact(design, params) == pytest.approx(
                law.second_moment, abs=1e-12)
            var, _ = variance_cv(design, params)
            assert var == pytest.approx(law.variance, abs=1e-10)
            assert estimator_expectation_exact(design, params, "x") == \
                pytest.approx(law.est_x, abs=1e-12)
            assert estimator_expectation_exact(design, params, "y") == \
                pytest.approx(law.est_y, abs=1e-12)


class TestReferencePoints:
    def test_power_values(self, fig_design):
        null = make_params(0.05, 0.1, 0.1)
        alt = make_params(0.1, 0.2, 0.1)
        assert power_exact(fig_design, null) == pytest.approx(0.0321, abs=5e-4)
        assert power_exact(fig_design, alt) == pytest.approx(0.9065, abs=5e-4)
        assert non_rejection_prob(fig_design, null) == pytest.approx(
            1.0 - 0.0321, abs=5e-4)

    def test_power_vanishes_at_tiny_margins(self, fig_design):
        assert power_exact(fig_design, make_params(1e-4, 1e-4, 0.0)) < 1e-12

    def test_unreachable_boundary(self):
        design = make_design(6, 5, 5)
        assert non_rejection_prob(design, make_params(0.01, 0.01, 0.0)) == \
            pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("point, expected", [
        ((0.05, 0.10, 0.1), 120.6653),
        ((0.25, 0.25, 0.1), 69.7126),
        ((0.10, 0.10, -0.1), 120.5035),
    ])
    def test_asn_values(self, fig_design, point, expected):
        assert asn_exact(fig_design, make_params(*point)) == \
            pytest.approx(expected, abs=5e-4)

    def test_asn_bounds_values(self, fig_design):
        lower, upper = asn_bounds(fig_design, make_params(0.25, 0.25, 0.1))
        assert lower == pytest.approx(69.2791, abs=5e-4)
        assert upper == pytest.approx(75.9630, abs=5e-4)
        _, upper_neg = asn_bounds(fig_design, make_params(0.25, 0.25, -0.1))
        assert upper_neg == pytest.approx(69.2791, abs=5e-4)

    def test_variance_cv_values(self, fig_design):
        var, cv = variance_cv(fig_design, make_params(0.05, 0.1, 0.1))
        assert var == pytest.approx(6.1438, abs=5e-4)
        assert cv == pytest.approx(0.0205, abs=5e-4)
        var, cv = variance_cv(fig_design, make_params(0.25, 0.25, 0.1))
        assert var == pytest.approx(139.2098, abs=5e-3)
        assert cv == pytest.approx(0.1692, abs=5e-4)


class TestDpOracle:
    @pytest.mark.parametrize("geom, point", [
        ((121, 19, 18), (0.1, 0.2, 0.1)),
        ((121, 19, 18), (0.05, 0.1, 0.1)),
        ((200, 30, 25), (0.12, 0.11, -0.05)),
        ((150, 20, 40), (0.15, 0.3, 0.35)),
    ])
    def test_matches_closed_form(self, geom, point):
        design = make_design(*geom)
        params = make_params(*point)
        closed = stopping_pmf_exact(design, params)
        dp = lattice_forward_dp(design, params)
        np.testing.assert_allclose(dp.mass_x, closed.mass_x, atol=1e-10)
        np.testing.assert_allclose(dp.mass_y, closed.mass_y, atol=1e-10)
        np.testing.assert_allclose(dp.mass_corner, closed.mass_corner, atol=1e-10)
        assert dp.continue_mass == pytest.approx(closed.continue_mass, abs=1e-10)

    def test_rejection_mass_reference(self, fig_design):
        dp = lattice_forward_dp(fig_design, make_params(0.1, 0.2, 0.1))
        assert dp.rejection_mass == pytest.approx(0.9065, abs=5e-4)

    def test_boundary_overlap_params_stay_normalized(self):
        design = make_design(40, 8, 6)
        # p11 at its maximum for these margins
        from bivarseq import condition_a_bounds
        hi = condition_a_bounds(0.2, 0.3)[1]
        params = make_params(0.2, 0.3, hi)
        dp = lattice_forward_dp(design, params)
        assert dp.total_mass() == pytest.approx(1.0, abs=1e-10)


class TestIndependenceOracle:
    @pytest.mark.parametrize("geom, thetas", [
        ((60, 10, 8), (0.2, 0.15)),
        ((121, 19, 18), (0.1, 0.2)),
    ])
    def test_rho_zero_factorizes(self, geom, thetas):
        design = make_design(*geom)
        params = make_params(thetas[0], thetas[1], 0.0)
        pmf = stopping_pmf_exact(design, params)
        support, ox, oy, oc, cont = independent_margins_pmf(design, *thetas)
        np.testing.assert_array_equal(support, pmf.support)
        np.testing.assert_allclose(pmf.mass_x, ox, atol=1e-10)
        np.testing.assert_allclose(pmf.mass_y, oy, atol=1e-10)
        np.testing.assert_allclose(pmf.mass_corner, oc, atol=1e-10)
        assert pmf.continue_mass == pytest.approx(cont, abs=1e-10)


class TestStructure:
    def test_normalization_over_feasible_grid(self):
        design = make_design(50, 9, 7)
        from bivarseq import condition_a_bounds
        for tx in (0.05, 0.2, 0.45):
            for ty in (0.1, 0.3):
                lo, hi = condition_a_bounds(tx, ty)
                for frac in (0.05, 0.5, 0.95):
                    rho = max(min(lo + frac * (hi - lo), 0.99), -0.99)
                    pmf = stopping_pmf_exact(design, make_params(tx, ty, rho))
                    assert pmf.total_mass() == pytest.approx(1.0, abs=1e-10)

    def test_support_starts_after_k_lower(self, fig_design):
        pmf = stopping_pmf_exact(fig_design, make_params(0.1, 0.2, 0.1))
        assert pmf.support[0] == fig_design.k_lower + 1
        assert pmf.support[-1] == fig_design.n_star

    def test_corner_support_condition(self):
        design = make_design(30, 5, 4)
        pmf = stopping_pmf_exact(design, make_params(0.3, 0.35, 0.3))
        earliest = design.k_x + design.k_y + 2 - (design.k_lower + 1)
        nz = pmf.support[pmf.mass_corner > 0]
        assert nz.min() >= earliest
        assert corner_mass_exact(design, make_params(0.3, 0.35, 0.3)) == \
            pytest.approx(pmf.mass_corner.sum(), abs=1e-14)

    def test_power_monotone_in_each_margin(self):
        design = make_design(60, 12, 10)
        for ty in (0.15, 0.25):
            values = [power_exact(design, make_params(tx, ty, 0.1))
                      for tx in np.linspace(0.05, 0.45, 9)]
            assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
        for tx in (0.1, 0.3):
            values = [power_exact(design, make_params(tx, ty, 0.1))
                      for ty in np.linspace(0.05, 0.45, 9)]
            assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_truncated_moment_identities(self):
        """Tail-sum forms of the first two truncated moments agree with the
        direct pmf forms on a DP-computed law."""
        design = make_design(80, 14, 11)
        params = make_params(0.18, 0.22, 0.25)
        pmf = lattice_forward_dp(design, params)
        n, support, p = design.n_star, pmf.support, pmf.pmf
        cont = pmf.continue_mass
        surv = cont + p[::-1].cumsum()[::-1]   # P(M >= m) on the support
        full_surv = np.concatenate([np.ones(support[0] - 1), surv])
        # E[M 1(M <= n)] two ways
        direct1 = float((support * p).sum())
        tails1 = float(full_surv.sum() - n * cont)
        assert direct1 == pytest.approx(tails1, abs=1e-10)
        # E[M^2 1(M <= n)] two ways
        direct2 = float((support.astype(float) ** 2 * p).sum())
        m_all = np.arange(1, n + 1)
        tails2 = float((2 * (m_all - 0.5) * full_surv).sum() - n * n * cont)
        assert direct2 == pytest.approx(tails2, abs=1e-10)

    def test_asn_equals_tail_series(self, fig_design):
        params = make_params(0.1, 0.2, 0.1)
        pmf = stopping_pmf_exact(fig_design, params)
        series = tail_sum_asn(pmf.support, pmf.pmf, pmf.continue_mass)
        assert asn_exact(fig_design, params) == pytest.approx(series, abs=1e-9)


class TestBounds:
    def test_ordering_by_rho_sign(self):
        design = make_design(60, 12, 10)
        for tx, ty in [(0.15, 0.2), (0.3, 0.25)]:
            from bivarseq import condition_a_bounds
            lo, hi = condition_a_bounds(tx, ty)
            for rho in (0.6 * lo, 0.0, 0.6 * hi):
                params = make_params(tx, ty, rho)
                lower, upper = asn_bounds(design, params)
                asn = asn_exact(design, params)
                assert lower <= asn + 1e-6
                assert asn <= upper + 1e-6
                assert design.k_lower + 1 <= asn <= design.n_star

    def test_independence_collapses_bounds(self):
        design = make_design(60, 12, 10)
        params = make_params(0.2, 0.25, 0.0)
        lower, upper = asn_bounds(design, params)
        assert lower == upper
        assert asn_exact(design, params) == pytest.approx(lower, abs=1e-6)


class TestEstimator:
    def test_vanishes_with_margins(self, fig_design):
        params = make_params(1e-4, 1e-4, 0.0)
        assert estimator_expectation_exact(fig_design, params, "x") < 1e-3
        assert estimator_expectation_exact(fig_design, params, "y") < 1e-3

    def test_margin_argument_validated(self, fig_design):
        with pytest.raises(ValueError):
            estimator_expectation_exact(fig_design, make_params(0.1, 0.2, 0.1), "z")
