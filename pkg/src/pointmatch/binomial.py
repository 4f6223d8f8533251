"""Counting statistics of points in sub-boxes: moments and concentration bounds.

The count N_Q of uniform points falling in a box Q of volume fraction theta is
Binomial(N, theta). This module exposes the count itself, the analytic
mean/variance/kurtosis-bound triple, and empirical concentration checks for the
relative fluctuation rho = N_Q / (N theta) and the inverse count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box, PointCloud


@dataclass(frozen=True)
class BoxCount:
    n_q: int
    n_total: int
    theta: float


@dataclass(frozen=True)
class ConcentrationReport:
    n_total: int
    theta: float
    samples: int
    p2_stat: float        # (E|rho - 1|^2)^(1/2), empirical
    p4_stat: float        # (E|rho - 1|^4)^(1/4), empirical
    inv_stat: float       # (E[(I(N_Q != 0)/N_Q)^2])^(1/2), empirical
    c_bound: float
    p_bound: float        # c_bound / sqrt(N theta)
    inv_bound: float      # c_bound / (N theta)
    p2_ok: bool
    p4_ok: bool
    inv_ok: bool


def count_in_box(cloud: PointCloud, box: Box) -> BoxCount:
    """Count points with lower <= x < lower + sides per coordinate.

    A face lying on the outer boundary x_i = side is closed, so that counts over
    any partition of [0, L]^d sum to N with no double counting.
    """
    lo = box.lower
    hi = box.lower + box.sides
    pts = cloud.points
    mask = np.ones(cloud.n, dtype=bool)
    for i in range(cloud.dim):
        upper_closed = hi[i] >= cloud.side
        above = pts[:, i] >= lo[i]
        below = pts[:, i] <= hi[i] if upper_closed else pts[:, i] < hi[i]
        mask &= above & below
    theta = box.volume / cloud.side**cloud.dim
    return BoxCount(n_q=int(mask.sum()), n_total=cloud.n, theta=float(theta))


def moment_bounds(n_total: int, theta: float) -> tuple[float, float, float]:
    """Mean N*theta, variance N*theta*(1-theta), and the kurtosis bound
    3*(N*theta*(1-theta))^2 + N*theta*(1-theta)."""
    if n_total < 1:
        raise ValueError("n_total must be >= 1")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    mean = n_total * theta
    var = n_total * theta * (1.0 - theta)
    kurt_bound = 3.0 * var**2 + var
    return mean, var, kurt_bound


def binomial_fourth_central_moment(n_total: int, theta: float) -> float:
    """Exact fourth central moment of Binomial(N, theta):
    N*theta*(1-theta) * (1 + 3*(N-2)*theta*(1-theta))."""
    v = theta * (1.0 - theta)
    return n_total * v * (1.0 + 3.0 * (n_total - 2) * v)


def concentration_check(samples: list[BoxCount], c_bound: float = 10.0) -> ConcentrationReport:
    """Empirical concentration statistics against C/sqrt(N theta) and C/(N theta).

    All samples must share (n_total, theta) and satisfy N*theta >= 1. The constant
    C is configurable because the theory fixes the scaling shape, not the constant.
    """
    if not samples:
        raise ValueError("need at least one sample")
    n_total = samples[0].n_total
    theta = samples[0].theta
    for s in samples:
        if s.n_total != n_total or s.theta != theta:
            raise ValueError("all samples must share (n_total, theta)")
    nt = n_total * theta
    if nt < 1.0:
        raise ValueError(f"concentration requires N*theta >= 1, got {nt}")

    counts = np.array([s.n_q for s in samples], dtype=np.float64)
    rho = counts / nt
    p2 = float(np.mean(np.abs(rho - 1.0) ** 2) ** 0.5)
    p4 = float(np.mean(np.abs(rho - 1.0) ** 4) ** 0.25)
    nonzero = counts > 0
    inv_sq = np.zeros_like(counts)
    inv_sq[nonzero] = 1.0 / counts[nonzero] ** 2
    inv = float(np.mean(inv_sq) ** 0.5)

    p_bound = float(c_bound / np.sqrt(nt))
    inv_bound = float(c_bound / nt)
    return ConcentrationReport(
        n_total=n_total,
        theta=theta,
        samples=len(samples),
        p2_stat=p2,
        p4_stat=p4,
        inv_stat=inv,
        c_bound=c_bound,
        p_bound=p_bound,
        inv_bound=inv_bound,
        p2_ok=bool(p2 <= p_bound),
        p4_ok=bool(p4 <= p_bound),
        inv_ok=bool(inv <= inv_bound),
    )
