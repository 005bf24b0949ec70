"""Post-detection estimation and confidence statements.

Upon termination at M* observations, the sample proportions
theta_hat = (S^x/M*, S^y/M*) are asymptotically jointly normal around the
true margins with covariance

    Sigma = [[tx(1-tx), p11 - tx ty], [p11 - tx ty, ty(1-ty)]] / M*,

so a chi-square(2) Wald ellipse with plug-in Sigma_hat gives a joint
confidence region, projections of that ellipse give simultaneous intervals,
and the delta method gives the relative risk gamma = tx/ty its own normal
interval with variance gamma((gamma+1)/ty - 2 p11/ty^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exact_engine import LatticeCounts
from .params import rho_from_p11
from .special_functions import norm_quantile

__all__ = [
    "PostTestEstimate",
    "ConfidenceRegion",
    "RelativeRiskEstimate",
    "chi2_quantile_2df",
    "post_test_estimate",
    "confidence_region",
    "ellipse_points",
    "relative_risk",
    "inverse_relative_risk",
]

_SINGULAR_DET = 1e-14


def chi2_quantile_2df(level: float) -> float:
    """chi-square quantile with 2 degrees of freedom: -2 log(1 - level)."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    return -2.0 * math.log1p(-level)


@dataclass(frozen=True)
class PostTestEstimate:
    """Point estimates and plug-in covariance after a terminated run."""

    theta_hat_x: float
    theta_hat_y: float
    p11_hat: float
    rho_hat: float
    m_star: int
    sigma_hat: np.ndarray
    singular: bool

    def to_dict(self) -> dict:
        return {
            "theta_hat_x": self.theta_hat_x,
            "theta_hat_y": self.theta_hat_y,
            "p11_hat": self.p11_hat,
            "rho_hat": self.rho_hat,
            "m_star": self.m_star,
            "sigma_hat": [list(row) for row in self.sigma_hat.tolist()],
            "singular": self.singular,
        }


@dataclass(frozen=True)
class ConfidenceRegion:
    """Wald ellipse plus simultaneous and Bonferroni intervals."""

    level: float
    center: np.ndarray
    half_lengths: tuple[float, float]   # (major, minor)
    orientation: np.ndarray             # unit eigenvector of the major axis
    simultaneous: tuple[tuple[float, float], tuple[float, float]]
    bonferroni: tuple[tuple[float, float], tuple[float, float]]

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "center": list(self.center),
            "half_lengths": list(self.half_lengths),
            "orientation": list(self.orientation),
            "simultaneous": {"theta_x": list(self.simultaneous[0]),
                             "theta_y": list(self.simultaneous[1])},
            "bonferroni": {"theta_x": list(self.bonferroni[0]),
                           "theta_y": list(self.bonferroni[1])},
        }


@dataclass(frozen=True)
class RelativeRiskEstimate:
    gamma_hat: float
    variance: float
    ci: tuple[float, float]
    level: float

    def to_dict(self) -> dict:
        return {"gamma_hat": self.gamma_hat, "variance": self.variance,
                "ci": list(self.ci), "level": self.level}


def post_test_estimate(counts: LatticeCounts, m_star: int) -> PostTestEstimate:
    """Sample-proportion estimates from the terminal contingency table."""
    if m_star < 1:
        raise ValueError("m_star must be >= 1")
    if counts.total != m_star:
        raise ValueError(f"counts sum to {counts.total}, expected m_star={m_star}")
    thx = counts.s_x / m_star
    thy = counts.s_y / m_star
    p11 = counts.n11 / m_star
    degenerate = thx in (0.0, 1.0) or thy in (0.0, 1.0)
    rho = float("nan") if degenerate else rho_from_p11(thx, thy, p11)
    sigma = np.array([
        [thx * (1.0 - thx), p11 - thx * thy],
        [p11 - thx * thy, thy * (1.0 - thy)],
    ])
    singular = degenerate or float(np.linalg.det(sigma)) <= _SINGULAR_DET
    return PostTestEstimate(
        theta_hat_x=thx, theta_hat_y=thy, p11_hat=p11, rho_hat=rho,
        m_star=m_star, sigma_hat=sigma, singular=singular,
    )


def confidence_region(est: PostTestEstimate, level: float = 0.95) -> ConfidenceRegion:
    """Joint Wald region {theta : M*(theta_hat-theta)' Sigma^-1 (theta_hat-theta) <= c}.

    c is the chi-square(2) quantile; ellipse half-lengths are
    sqrt(c * lambda_i / M*) along the eigenvectors of Sigma_hat.  Simultaneous
    intervals are the coordinate projections of the ellipse,
    theta_hat_i +- sqrt(c * Sigma_ii / M*); Bonferroni intervals use the
    z_{1-(1-level)/4} normal quantile instead.  A singular Sigma_hat yields a
    degenerate (point-interval) region rather than an error.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    center = np.array([est.theta_hat_x, est.theta_hat_y])
    if est.singular:
        point = ((est.theta_hat_x, est.theta_hat_x),
                 (est.theta_hat_y, est.theta_hat_y))
        return ConfidenceRegion(level=level, center=center,
                                half_lengths=(0.0, 0.0),
                                orientation=np.array([1.0, 0.0]),
                                simultaneous=point, bonferroni=point)
    c = chi2_quantile_2df(level)
    eigvals, eigvecs = np.linalg.eigh(est.sigma_hat)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    half = tuple(math.sqrt(c * lam / est.m_star) for lam in eigvals)
    sim = tuple(
        (center[i] - math.sqrt(c * est.sigma_hat[i, i] / est.m_star),
         center[i] + math.sqrt(c * est.sigma_hat[i, i] / est.m_star))
        for i in (0, 1)
    )
    z = norm_quantile(1.0 - (1.0 - level) / 4.0)
    bon = tuple(
        (center[i] - z * math.sqrt(est.sigma_hat[i, i] / est.m_star),
         center[i] + z * math.sqrt(est.sigma_hat[i, i] / est.m_star))
        for i in (0, 1)
    )
    return ConfidenceRegion(level=level, center=center, half_lengths=half,
                            orientation=eigvecs[:, 0], simultaneous=sim,
                            bonferroni=bon)


def ellipse_points(est: PostTestEstimate, level: float = 0.95,
                   n_points: int = 200) -> np.ndarray:
    """(n_points, 2) array tracing the confidence-ellipse boundary."""
    region = confidence_region(est, level)
    t = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    major, minor = region.half_lengths
    u = region.orientation
    v = np.array([-u[1], u[0]])
    return (region.center[None, :]
            + np.outer(major * np.cos(t), u) + np.outer(minor * np.sin(t), v))


def relative_risk(est: PostTestEstimate, level: float = 0.95) -> RelativeRiskEstimate:
    """Estimated relative risk theta_x/theta_y with its delta-method interval."""
    if est.theta_hat_y <= 0.0:
        raise ZeroDivisionError("relative risk undefined: theta_hat_y = 0")
    gamma = est.theta_hat_x / est.theta_hat_y
    thy = est.theta_hat_y
    var = gamma * ((gamma + 1.0) / thy - 2.0 * est.p11_hat / (thy * thy))
    z = norm_quantile((1.0 + level) / 2.0)
    hw = z * math.sqrt(max(var, 0.0) / est.m_star)
    return RelativeRiskEstimate(gamma_hat=gamma, variance=var,
                                ci=(gamma - hw, gamma + hw), level=level)


def inverse_relative_risk(est: PostTestEstimate, level: float = 0.95) -> RelativeRiskEstimate:
    """Estimated inverse relative risk theta_y/theta_x, same construction
    with the margins exchanged."""
    if est.theta_hat_x <= 0.0:
        raise ZeroDivisionError("inverse relative risk undefined: theta_hat_x = 0")
    nu = est.theta_hat_y / est.theta_hat_x
    thx = est.theta_hat_x
    var = nu * ((nu + 1.0) / thx - 2.0 * est.p11_hat / (thx * thx))
    z = norm_quantile((1.0 + level) / 2.0)
    hw = z * math.sqrt(max(var, 0.0) / est.m_star)
    return RelativeRiskEstimate(gamma_hat=nu, variance=var,
                                ci=(nu - hw, nu + hw), level=level)
