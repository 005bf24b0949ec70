"""Independent oracles the tests check the engines against.

Everything here deliberately avoids the code paths under test: exhaustive
path enumeration, direct binomial summation via scipy.stats, and adaptive
quadrature of the normal density.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import binom

from bivarseq import BivariateDesign


@dataclass
class EnumeratedLaw:
    """Everything the 4^n path enumeration knows about one (design, params)."""

    support: np.ndarray
    mass_x: np.ndarray
    mass_y: np.ndarray
    mass_corner: np.ndarray
    continue_mass: float
    power: float
    asn: float
    second_moment: float
    variance: float
    est_x: float
    est_y: float


def enumerate_paths(design: BivariateDesign, cell_probs) -> EnumeratedLaw:
    """Walk every 4^n_star cell sequence, weighting by its probability.

    Statistics of the stopped test are path-measurable, so summing full-path
    probabilities by outcome gives the exact law.
    """
    n, k_x, k_y = design.n_star, design.k_x, design.k_y
    p = np.asarray(cell_probs, dtype=float)  # order: p00, p10, p01, p11
    n_paths = 4 ** n
    codes = (np.arange(n_paths)[:, None] // 4 ** np.arange(n)[None, :]) % 4
    x = (codes == 1) | (codes == 3)
    y = (codes == 2) | (codes == 3)
    weight = p[codes].prod(axis=1)
    s_x = np.cumsum(x, axis=1)
    s_y = np.cumsum(y, axis=1)
    crossed = (s_x > k_x) | (s_y > k_y)
    any_crossed = crossed.any(axis=1)
    first = np.where(any_crossed, crossed.argmax(axis=1), n - 1)
    m_star = np.where(any_crossed, first + 1, n)

    rows = np.arange(n_paths)
    hit_x = any_crossed & (s_x[rows, first] > k_x)
    hit_y = any_crossed & (s_y[rows, first] > k_y)
    corner = hit_x & hit_y

    support = np.arange(design.k_lower + 1, n + 1)
    mass_x = np.zeros(len(support))
    mass_y = np.zeros(len(support))
    mass_c = np.zeros(len(support))
    for idx, m in enumerate(support):
        at_m = any_crossed & (m_star == m)
        mass_x[idx] = weight[at_m & hit_x & ~corner].sum()
        mass_y[idx] = weight[at_m & hit_y & ~corner].sum()
        mass_c[idx] = weight[at_m & corner].sum()
    cont = weight[~any_crossed].sum()
    power = weight[any_crossed].sum()
    asn = (weight * m_star).sum()
    second = (weight * m_star.astype(float) ** 2).sum()
    th_x = s_x[rows, m_star - 1] / m_star
    th_y = s_y[rows, m_star - 1] / m_star
    return EnumeratedLaw(
        support=support, mass_x=mass_x, mass_y=mass_y, mass_corner=mass_c,
        continue_mass=float(cont), power=float(power), asn=float(asn),
        second_moment=float(second), variance=float(second - asn ** 2),
        est_x=float((weight * th_x).sum()), est_y=float((weight * th_y).sum()),
    )


def independent_margins_pmf(design: BivariateDesign, theta_x: float, theta_y: float):
    """Stopping law for rho = 0 from two independent single-margin walks.

    P(M_side >= m) = P(Binomial(m-1, theta) <= k) via scipy.stats.binom, so
    this route never touches the package's special functions.
    """
    n, k_x, k_y = design.n_star, design.k_x, design.k_y
    m = np.arange(1, n + 2)
    surv_x = binom.cdf(k_x, m - 1, theta_x)   # surv_x[m-1] = P(M_x >= m)
    surv_y = binom.cdf(k_y, m - 1, theta_y)
    pmf_x = surv_x[:-1] - surv_x[1:]          # pmf_x[m-1] = P(M_x = m)
    pmf_y = surv_y[:-1] - surv_y[1:]
    support = np.arange(design.k_lower + 1, n + 1)
    out_x = np.zeros(len(support))
    out_y = np.zeros(len(support))
    out_c = np.zeros(len(support))
    for idx, mm in enumerate(support):
        px, py = pmf_x[mm - 1], pmf_y[mm - 1]
        out_x[idx] = px * surv_y[mm]          # X crosses at mm, Y after
        out_y[idx] = py * surv_x[mm]
        out_c[idx] = px * py
    cont = float(surv_x[n] * surv_y[n])
    return support, out_x, out_y, out_c, cont


def binom_upper_tail(n: int, k: int, theta: float) -> float:
    """P(Binomial(n, theta) >= k+1) by direct pmf summation."""
    total = 0.0
    for j in range(k + 1, n + 1):
        total += binom.pmf(j, n, theta)
    return total


def bvn_quadrature(h: float, k: float, rho: float) -> float:
    """P(U <= h, W <= k) by adaptive 2-d quadrature of the density."""
    det = 1.0 - rho * rho

    def density(w, u):
        return np.exp(-(u * u - 2 * rho * u * w + w * w) / (2 * det)) \
            / (2 * np.pi * np.sqrt(det))

    value, _ = integrate.dblquad(density, -9.0, h, -9.0, k,
                                 epsabs=1e-12, epsrel=1e-12)
    return value


def tail_sum_asn(pmf_support, pmf_values, continue_mass) -> float:
    """ASN as the tail-probability series sum_{m=1}^{n*} P(M >= m).

    P(M >= m) is 1 for m <= support[0] (nothing can stop earlier) and
    continue_mass + sum of the pmf from m on afterwards.
    """
    surv = continue_mass + pmf_values[::-1].cumsum()[::-1]
    return float(pmf_support[0] - 1 + surv.sum())
