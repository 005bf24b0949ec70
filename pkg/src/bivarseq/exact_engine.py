"""Exact finite-sample operating characteristics of the curtailed bivariate
sequential test.

The stopping time M is the first n at which either cumulative side-effect
count exceeds its critical value; the test curtails at n_star.  P(M = m)
decomposes by which boundary the final observation crosses:

* X boundary, final subject shows both effects / X only,
* Y boundary, final subject shows both effects / Y only,
* the corner, where one both-effects observation crosses X and Y at once,

and each piece is a (negative-multinomial style) sum over the admissible
terminal contingency tables.  All sums are evaluated in log space via a
log-gamma table so that designs with n_star in the hundreds do not overflow,
and accumulated with numpy's pairwise summation.

A forward dynamic program over the "alive" lattice rectangle provides an
independent route to the same distribution and is used as a cross-check
oracle throughout the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from .design import BivariateDesign
from .params import JointBernoulliParams
from .special_functions import reg_inc_beta

__all__ = [
    "LatticeCounts",
    "StoppingPmf",
    "non_rejection_prob",
    "power_exact",
    "stopping_pmf_exact",
    "lattice_forward_dp",
    "asn_exact",
    "asn_bounds",
    "second_moment_exact",
    "variance_cv",
    "estimator_expectation_exact",
]


@dataclass(frozen=True)
class LatticeCounts:
    """Terminal 2x2 contingency counts of one test run."""

    n00: int
    n10: int
    n01: int
    n11: int

    def __post_init__(self):
        if min(self.n00, self.n10, self.n01, self.n11) < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.n00 + self.n10 + self.n01 + self.n11

    @property
    def s_x(self) -> int:
        return self.n10 + self.n11

    @property
    def s_y(self) -> int:
        return self.n01 + self.n11


@dataclass(frozen=True)
class StoppingPmf:
    """Distribution of the stopping time over [k_lower+1, n_star], split by
    boundary, plus the mass of never stopping before curtailment."""

    support: np.ndarray
    mass_x: np.ndarray
    mass_y: np.ndarray
    mass_corner: np.ndarray
    continue_mass: float

    def __post_init__(self):
        n = len(self.support)
        if not (len(self.mass_x) == len(self.mass_y) == len(self.mass_corner) == n):
            raise ValueError("per-boundary mass arrays must match the support")
        for arr in (self.mass_x, self.mass_y, self.mass_corner):
            if np.any(np.asarray(arr) < -1e-12):
                raise ValueError("stopping masses must be nonnegative")

    @property
    def pmf(self) -> np.ndarray:
        """Total P(M = m) over the support."""
        return self.mass_x + self.mass_y + self.mass_corner

    @property
    def rejection_mass(self) -> float:
        return float(self.pmf.sum())

    def total_mass(self) -> float:
        return self.rejection_mass + self.continue_mass


class _LogTables:
    """Shared log-gamma lookup and cell-probability logs for one evaluation."""

    def __init__(self, n_star: int, params: JointBernoulliParams):
        self.lg = gammaln(np.arange(n_star + 3, dtype=float))
        p00, p10, p01, p11 = params.cell_probs
        self.p = (p00, p10, p01, p11)

    def xl(self, exponent, prob):
        # 0 * log(0) = 0 so zero-probability cells contribute iff unused
        return xlogy(exponent, prob)


class _BoundaryFamily:
    """Precomputed static pieces of the two double sums for one boundary.

    For the boundary with critical value k_hit, the other margin having
    critical value k_other, the two sums share terminal exponents
    (n_both = i, n_hit-only = k_hit+1-i, n_other-only = j, rest); they differ
    only in which cell the final observation occupies (both vs hit-only),
    hence in the multinomial coefficient over the first m-1 steps.
    """

    def __init__(self, tables: _LogTables, n_star: int, k_hit: int, k_other: int,
                 p_hit_only: float, p_other_only: float):
        lg = tables.lg
        p00, p11 = tables.p[0], tables.p[3]
        k_low = min(k_hit, k_other)
        j_hi = min(k_other, max(n_star - k_hit - 1, 0))
        self.j = np.arange(0, j_hi + 1)
        self.k_hit = k_hit
        self.n_star = n_star

        # final step in the both-effects cell: i >= 1
        i_a = np.arange(1, min(k_hit + 1, k_other) + 1)
        ia, ja = np.meshgrid(i_a, self.j, indexing="ij")
        self.static_a = (
            -lg[ia] - lg[k_hit + 2 - ia] - lg[ja + 1]
            + tables.xl(ia, p11) + tables.xl(k_hit + 1 - ia, p_hit_only)
            + tables.xl(ja, p_other_only)
        )
        self.ok_a = ja <= k_other - ia
        self.sy_a = ia + ja  # other-margin terminal count

        # final step in the hit-only cell: i can be 0
        i_b = np.arange(0, k_low + 1)
        ib, jb = np.meshgrid(i_b, self.j, indexing="ij")
        self.static_b = (
            -lg[ib + 1] - lg[k_hit + 1 - ib] - lg[jb + 1]
            + tables.xl(ib, p11) + tables.xl(k_hit + 1 - ib, p_hit_only)
            + tables.xl(jb, p_other_only)
        )
        self.ok_b = jb <= k_other - ib
        self.sy_b = ib + jb

        self.ja = ja
        self.jb = jb
        self.lg = lg
        self.p00 = p00

    def at(self, m: int):
        """(mass, other-margin weighted mass) of P(M=m, this boundary hit)."""
        j_free = m - self.k_hit - 1
        if j_free < 0:
            return 0.0, 0.0
        mvec = self.lg[m] - self.lg[np.maximum(m - self.k_hit - self.j, 1)] \
            + xlogy(np.maximum(m - self.k_hit - 1 - self.j, 0), self.p00)
        mvec = np.where(self.j <= j_free, mvec, -np.inf)
        with np.errstate(invalid="ignore"):
            term_a = np.where(self.ok_a, np.exp(self.static_a + mvec[None, :]), 0.0)
            term_b = np.where(self.ok_b, np.exp(self.static_b + mvec[None, :]), 0.0)
        mass = term_a.sum() + term_b.sum()
        weighted = (self.sy_a * term_a).sum() + (self.sy_b * term_b).sum()
        return mass, weighted


class _CornerFamily:
    """Static pieces of the single corner sum (both boundaries at once)."""

    def __init__(self, tables: _LogTables, k_x: int, k_y: int):
        lg = tables.lg
        p00, p10, p01, p11 = tables.p
        self.i = np.arange(1, min(k_x, k_y) + 2)
        self.static = (
            -lg[self.i] - lg[k_x + 2 - self.i] - lg[k_y + 2 - self.i]
            + tables.xl(self.i, p11) + tables.xl(k_x + 1 - self.i, p10)
            + tables.xl(k_y + 1 - self.i, p01)
        )
        self.m_min = k_x + k_y + 2 - self.i
        self.lg = lg
        self.p00 = p00

    def at(self, m: int) -> float:
        rest = m - self.m_min
        ok = rest >= 0
        rest = np.maximum(rest, 0)
        with np.errstate(invalid="ignore"):
            term = np.where(
                ok, np.exp(self.static + self.lg[m] - self.lg[rest + 1]
                           + xlogy(rest, self.p00)), 0.0)
        return float(term.sum())


def _sweep(design: BivariateDesign, params: JointBernoulliParams):
    """Per-m masses by boundary plus the S_M-weighted masses both margins
    need for the stopped part of the estimator expectation."""
    n_star, k_x, k_y = design.n_star, design.k_x, design.k_y
    tables = _LogTables(n_star, params)
    p00, p10, p01, p11 = params.cell_probs
    fam_x = _BoundaryFamily(tables, n_star, k_x, k_y, p10, p01)
    fam_y = _BoundaryFamily(tables, n_star, k_y, k_x, p01, p10)
    corner = _CornerFamily(tables, k_x, k_y)

    support = np.arange(design.k_lower + 1, n_star + 1)
    mass_x = np.zeros(len(support))
    mass_y = np.zeros(len(support))
    mass_c = np.zeros(len(support))
    wx = np.zeros(len(support))  # E[S^x_M ; M=m] summed over boundaries
    wy = np.zeros(len(support))
    for idx, m in enumerate(support):
        mx, other_y = fam_x.at(m)
        my, other_x = fam_y.at(m)
        mc = corner.at(m)
        mass_x[idx], mass_y[idx], mass_c[idx] = mx, my, mc
        wx[idx] = (k_x + 1) * (mx + mc) + other_x
        wy[idx] = (k_y + 1) * (my + mc) + other_y
    return support, mass_x, mass_y, mass_c, wx, wy


def _curtailed_sums(design: BivariateDesign, params: JointBernoulliParams):
    """(P(M > n_star), E[S^x ; M > n_star], E[S^y ; M > n_star]) at n_star.

    Triple sum over terminal tables with z = both-effects count <= k_lower,
    i = X-only <= k_x - z, j = Y-only <= k_y - z.
    """
    n_star, k_x, k_y = design.n_star, design.k_x, design.k_y
    p00, p10, p01, p11 = params.cell_probs
    lg_n = gammaln(n_star + 1.0)
    prob = 0.0
    sum_x = 0.0
    sum_y = 0.0
    for z in range(design.k_lower + 1):
        i = np.arange(0, k_x - z + 1)
        j = np.arange(0, k_y - z + 1)
        ii, jj = np.meshgrid(i, j, indexing="ij")
        rest = n_star - z - ii - jj
        la = (lg_n - gammaln(z + 1.0) - gammaln(ii + 1.0) - gammaln(jj + 1.0)
              - gammaln(rest + 1.0)
              + xlogy(z, p11) + xlogy(ii, p10) + xlogy(jj, p01) + xlogy(rest, p00))
        term = np.exp(la)
        prob += term.sum()
        sum_x += ((z + ii) * term).sum()
        sum_y += ((z + jj) * term).sum()
    return prob, sum_x, sum_y


def non_rejection_prob(design: BivariateDesign, params: JointBernoulliParams) -> float:
    """P(both terminal counts stay at or below their critical values)."""
    prob, _, _ = _curtailed_sums(design, params)
    return min(prob, 1.0)


def power_exact(design: BivariateDesign, params: JointBernoulliParams) -> float:
    """Rejection probability 1 - P(M > n_star)."""
    return min(max(1.0 - non_rejection_prob(design, params), 0.0), 1.0)


def stopping_pmf_exact(design: BivariateDesign, params: JointBernoulliParams) -> StoppingPmf:
    """Full stopping-time distribution from the closed-form boundary sums."""
    support, mass_x, mass_y, mass_c, _, _ = _sweep(design, params)
    return StoppingPmf(
        support=support, mass_x=mass_x, mass_y=mass_y, mass_corner=mass_c,
        continue_mass=non_rejection_prob(design, params),
    )


def lattice_forward_dp(design: BivariateDesign, params: JointBernoulliParams) -> StoppingPmf:
    """Stopping-time distribution by forward recursion over alive states.

    One dense (k_x+1) x (k_y+1) layer of state probabilities is advanced a
    step at a time; mass stepping past either critical value is absorbed and
    recorded per boundary.  Independent of the closed-form route.
    """
    n_star, k_x, k_y = design.n_star, design.k_x, design.k_y
    p00, p10, p01, p11 = params.cell_probs
    alive = np.zeros((k_x + 1, k_y + 1))
    alive[0, 0] = 1.0
    support = np.arange(design.k_lower + 1, n_star + 1)
    mass_x = np.zeros(len(support))
    mass_y = np.zeros(len(support))
    mass_c = np.zeros(len(support))
    for n in range(1, n_star + 1):
        idx = n - (design.k_lower + 1)
        if idx >= 0:
            mass_x[idx] = p10 * alive[k_x, :].sum() + p11 * alive[k_x, :k_y].sum()
            mass_y[idx] = p01 * alive[:, k_y].sum() + p11 * alive[:k_x, k_y].sum()
            mass_c[idx] = p11 * alive[k_x, k_y]
        new = p00 * alive
        new[1:, :] += p10 * alive[:-1, :]
        new[:, 1:] += p01 * alive[:, :-1]
        new[1:, 1:] += p11 * alive[:-1, :-1]
        alive = new
    return StoppingPmf(
        support=support, mass_x=mass_x, mass_y=mass_y, mass_corner=mass_c,
        continue_mass=float(alive.sum()),
    )


def corner_mass_exact(design: BivariateDesign, params: JointBernoulliParams) -> float:
    """Total probability of stopping exactly at the corner, summed over m.

    Evaluates only the corner family, so it stays cheap for designs far too
    large for the full per-m sweep.
    """
    n_star, k_x, k_y = design.n_star, design.k_x, design.k_y
    p00, p10, p01, p11 = params.cell_probs
    lg = gammaln(np.arange(n_star + 3, dtype=float))
    i = np.arange(1, design.k_lower + 2)
    static = (-lg[i] - lg[k_x + 2 - i] - lg[k_y + 2 - i]
              + xlogy(i, p11) + xlogy(k_x + 1 - i, p10) + xlogy(k_y + 1 - i, p01))
    m = np.arange(design.k_lower + 1, n_star + 1)
    rest = m[:, None] - (k_x + k_y + 2 - i)[None, :]
    ok = rest >= 0
    rest = np.maximum(rest, 0)
    with np.errstate(invalid="ignore"):
        terms = np.where(
            ok,
            np.exp(static[None, :] + lg[m][:, None] - lg[rest + 1] + xlogy(rest, p00)),
            0.0,
        )
    return float(terms.sum())


def _asn_from_pmf(pmf: StoppingPmf, n_star: int) -> float:
    return float(n_star - ((n_star - pmf.support) * pmf.pmf).sum())


def asn_exact(design: BivariateDesign, params: JointBernoulliParams) -> float:
    """Expected terminal sample size E[min(M, n_star)]."""
    return _asn_from_pmf(stopping_pmf_exact(design, params), design.n_star)


def _marginal_curtailed_asn(n_star: int, k: int, theta: float) -> float:
    """E[min(M_single, n_star)] for one margin's single-boundary walk."""
    return (n_star * reg_inc_beta(1.0 - theta, n_star - k, k + 1)
            + (k + 1) / theta * reg_inc_beta(theta, k + 2, n_star - k))


def _independence_asn(design: BivariateDesign, params: JointBernoulliParams) -> float:
    """Sum over m of P(M_x >= m) P(M_y >= m), via the tail-product formulas."""
    n_star, k_x, k_y = design.n_star, design.k_x, design.k_y
    tx, ty = params.theta_x, params.theta_y
    if k_x >= k_y:
        lead, k_in, k_out, t_in, t_out = (
            _marginal_curtailed_asn(n_star, k_x, tx), k_y, k_x, ty, tx)
    else:
        lead, k_in, k_out, t_in, t_out = (
            _marginal_curtailed_asn(n_star, k_y, ty), k_x, k_y, tx, ty)
    mid = sum(reg_inc_beta(t_in, k_in + 1, i - k_in)
              for i in range(k_in + 1, k_out + 1))
    tail = sum(reg_inc_beta(t_in, k_in + 1, i - k_in)
               * reg_inc_beta(1.0 - t_out, i - k_out, k_out + 1)
               for i in range(k_out + 1, n_star))
    return lead - mid - tail


def asn_bounds(design: BivariateDesign, params: JointBernoulliParams) -> tuple[float, float]:
    """(lower, upper) bounds on the ASN from the association sign of rho.

    Positively correlated margins give L1 <= ASN <= min(U1, U2) where U are
    the per-margin curtailed expectations and L1 the independence product
    sum; negative correlation flips L1 into an upper bound with the trivial
    k_lower + 1 floor below; independence collapses both to L1.
    """
    u1 = _marginal_curtailed_asn(design.n_star, design.k_x, params.theta_x)
    u2 = _marginal_curtailed_asn(design.n_star, design.k_y, params.theta_y)
    l1 = _independence_asn(design, params)
    if params.rho > 0:
        return l1, min(u1, u2)
    if params.rho < 0:
        return float(design.k_lower + 1), l1
    return l1, l1


def second_moment_exact(design: BivariateDesign, params: JointBernoulliParams) -> float:
    """E[min(M, n_star)^2]."""
    pmf = stopping_pmf_exact(design, params)
    n2 = float(design.n_star) ** 2
    return float(n2 - ((n2 - pmf.support.astype(float) ** 2) * pmf.pmf).sum())


def variance_cv(design: BivariateDesign, params: JointBernoulliParams) -> tuple[float, float]:
    """(variance, coefficient of variation) of the terminal sample size."""
    pmf = stopping_pmf_exact(design, params)
    n_star = design.n_star
    mean = _asn_from_pmf(pmf, n_star)
    n2 = float(n_star) ** 2
    second = n2 - ((n2 - pmf.support.astype(float) ** 2) * pmf.pmf).sum()
    var = second - mean * mean
    if var < -1e-9:
        raise ArithmeticError(f"negative variance {var}: inconsistent moments")
    var = max(var, 0.0)
    return float(var), float(np.sqrt(var) / mean)


def estimator_expectation_exact(design: BivariateDesign, params: JointBernoulliParams,
                                margin: str) -> float:
    """Exact E[theta_hat] for one margin: curtailed term plus the five-part
    stopped sum, each terminal table weighted by its sample proportion."""
    if margin not in ("x", "y"):
        raise ValueError("margin must be 'x' or 'y'")
    support, _, _, _, wx, wy = _sweep(design, params)
    weighted = wx if margin == "x" else wy
    stopped = float((weighted / support).sum())
    prob, sum_x, sum_y = _curtailed_sums(design, params)
    curtailed = (sum_x if margin == "x" else sum_y) / design.n_star
    return stopped + curtailed
