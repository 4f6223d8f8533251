"""Seeded Monte Carlo ensembles, streaming moments, and scaling-law fits."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import substream_seed


class TrialError(RuntimeError):
    """A trial observable failed; carries the trial index and seed."""

    def __init__(self, trial: int, seed: int, cause: str):
        super().__init__(f"trial {trial} (seed {seed}) failed: {cause}")
        self.trial = trial
        self.seed = seed


@dataclass
class RunningMoments:
    """Welford accumulator; mergeable so reductions can run as a pairwise tree."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if self.count == 0:
            return RunningMoments(other.count, other.mean, other.m2)
        if other.count == 0:
            return RunningMoments(self.count, self.mean, self.m2)
        total = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / total
        m2 = self.m2 + other.m2 + delta**2 * self.count * other.count / total
        return RunningMoments(total, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else 0.0


@dataclass(frozen=True)
class EnsembleConfig:
    trials: int
    master_seed: int
    workers: int = 1


@dataclass
class TrialEnsemble:
    master_seed: int
    observations: np.ndarray
    moments: RunningMoments = field(repr=False, default=None)

    def __post_init__(self):
        if self.moments is None:
            acc = RunningMoments()
            for x in self.observations:
                acc.update(float(x))
            self.moments = acc

    @property
    def trials(self) -> int:
        return self.observations.size

    @property
    def mean(self) -> float:
        return self.moments.mean

    @property
    def stderr(self) -> float:
        return self.moments.stderr


def _run_trial(args):
    observable, trial, seed = args
    try:
        return float(observable(seed))
    except TrialError:
        raise
    except Exception as exc:  # noqa: BLE001 - surfaced with the failing seed
        raise TrialError(trial, seed, repr(exc)) from exc


def run_ensemble(config: EnsembleConfig, observable) -> TrialEnsemble:
    """Evaluate observable(seed) over independent per-trial substreams.

    Trial t always receives substream_seed(master_seed, t), so results are
    bit-identical across runs and worker counts; moments are reduced in trial
    order after gathering.
    """
    if config.trials < 2:
        raise ValueError("an ensemble needs at least 2 trials")
    jobs = [(observable, t, substream_seed(config.master_seed, t)) for t in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            values = list(pool.map(_run_trial, jobs, chunksize=max(1, config.trials // (4 * config.workers))))
    else:
        values = [_run_trial(job) for job in jobs]
    return TrialEnsemble(master_seed=config.master_seed, observations=np.array(values))


def scaling_shape(n: int, dim: int) -> float:
    """Theoretical growth factor g(N) with E[cost] ~ c * r^2 * g(N)."""
    if dim == 1:
        return float(n)
    if dim == 2:
        return math.log(n)
    return 1.0


def scaling_model_name(dim: int) -> str:
    return {1: "linear-in-N", 2: "linear-in-lnN"}.get(dim, "constant")


@dataclass(frozen=True)
class ScalingFit:
    model: str
    constant: float
    n_values: tuple
    per_point_constants: tuple
    ratio: float  # max/min of per-point constants
    slope_vs_log: float  # OLS slope of c(N) against ln N
    slope_over_mean: float


def fit_scaling(points, dim: int, side: float = 1.0) -> ScalingFit:
    """Fit E[cost] = c * r^2 * g(N) and report per-point constants.

    `points` is a sequence of (N, mean cost). The per-point constants
    c(N) = mean / (r^2 g(N)) expose the quality of the shape: their max/min
    ratio and their drift against ln N are the diagnostics the scaling
    experiments assert on.
    """
    pts = sorted((int(n), float(m)) for n, m in points)
    if len({n for n, _ in pts}) < 3:
        raise ValueError("need at least 3 distinct N values")
    if any(m <= 0 for _, m in pts):
        raise ValueError("mean costs must be positive")
    if dim == 2 and any(n < 2 for n, _ in pts):
        raise ValueError("d = 2 shape ln N requires N >= 2")
    ns = np.array([n for n, _ in pts], dtype=np.float64)
    means = np.array([m for _, m in pts])
    r_sq = (side * ns ** (-1.0 / dim)) ** 2
    g = np.array([scaling_shape(int(n), dim) for n in ns])
    constants = means / (r_sq * g)
    slope, _ = np.polyfit(np.log(ns), constants, 1)
    c_bar = float(constants.mean())
    return ScalingFit(
        model=scaling_model_name(dim),
        constant=c_bar,
        n_values=tuple(int(n) for n in ns),
        per_point_constants=tuple(float(c) for c in constants),
        ratio=float(constants.max() / constants.min()),
        slope_vs_log=float(slope),
        slope_over_mean=float(slope / c_bar),
    )
