"""Subsampling (m-out-of-n without replacement) inference.

Every procedure here follows the same recipe: draw ``M`` subsamples of size
``m``, recompute the statistic on each (refitting the propensity model by
default), and use the empirical distribution of the roots
``sqrt(m) * (stat_m - stat_n)`` in place of the unknown limit law.

Replicate ``l`` draws from ``SeedSequence(seed, spawn_key=(l,))``, so the
multiset of roots does not depend on how replicates are split across workers.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from joblib import Parallel, delayed

from .data import Arm, DataError, Sample, require_both_arms
from .ecdf import WeightedEcdf, estimate_cdf, sup_distance
from .propensity import PropensityModel, fit_propensity
from .wilcoxon import theta01

Statistic = Callable[[Sample], "float | np.ndarray"]

# Total redraws allowed per run, as a multiple of M.
REDRAW_CAP = 10
# Guards ceil(p * M) against products like 0.975 * 400 = 390.00000000000006.
_QTOL = 1e-9


class SubsamplingError(RuntimeError):
    """Raised when subsamples keep losing a treatment arm."""


def default_m(n: int) -> int:
    return min(n - 1, math.ceil(n**0.7))


@dataclass(frozen=True, eq=False)
class SubsamplingDistribution:
    """Empirical distribution of the M roots (sorted ascending)."""

    roots: np.ndarray
    m: int
    n: int
    redraws: int = 0

    @property
    def M(self) -> int:  # noqa: N802
        return len(self.roots)

    def cdf(self, u: float) -> float:
        return float(np.searchsorted(self.roots, u, side="right")) / self.M

    def quantile(self, p: float) -> float:
        """``inf{u : R(u) >= p}``."""
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p={p} outside [0, 1]")
        k = max(math.ceil(p * self.M - _QTOL), 1)
        return float(self.roots[min(k, self.M) - 1])


def _replicate_rng(seed: int, l: int) -> np.random.Generator:  # noqa: E741
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(l,)))


def draw_subsample(sample: Sample, m: int, rng: np.random.Generator) -> Sample:
    """Simple random sample of ``m`` rows without replacement."""
    if not 1 <= m <= sample.n:
        raise ValueError(f"m={m} outside [1, n={sample.n}]")
    return sample.take(np.sort(rng.choice(sample.n, size=m, replace=False)))


def _two_arm_indices(t: np.ndarray, m: int, rng: np.random.Generator, max_tries: int) -> tuple[np.ndarray, int]:
    n = len(t)
    for tries in range(max_tries):
        idx = np.sort(rng.choice(n, size=m, replace=False))
        k = int(t[idx].sum())
        if 0 < k < m:
            return idx, tries
    raise SubsamplingError(f"no two-arm subsample of size {m} in {max_tries} draws")


def _run_block(sample: Sample, statistic: Statistic, m: int, seed: int, ls: range, max_tries: int):
    rows, redraws = [], 0
    for l in ls:  # noqa: E741
        idx, tries = _two_arm_indices(sample.t, m, _replicate_rng(seed, l), max_tries)
        redraws += tries
        rows.append(np.atleast_1d(np.asarray(statistic(sample.take(idx)), dtype=float)))
    return rows, redraws


def subsample_values(
    sample: Sample, statistic: Statistic, m: int, M: int, seed: int, jobs: int = 1
) -> tuple[np.ndarray, int]:
    """Statistic values on M two-arm subsamples, shape (M, k), plus redraw count.

    Subsamples missing a treatment arm are redrawn; more than ``REDRAW_CAP * M``
    redraws in total raises :class:`SubsamplingError`.
    """
    if not 1 <= m < sample.n:
        raise ValueError(f"m={m} must satisfy 1 <= m < n={sample.n}")
    if m < 2:
        raise ValueError("m must be at least 2 so both arms can appear")
    if M < 1:
        raise ValueError("M must be >= 1")
    require_both_arms(sample)
    cap = REDRAW_CAP * M
    if jobs == 1 or M < 2:
        rows, redraws = _run_block(sample, statistic, m, seed, range(M), cap + 1)
    else:
        bounds = np.linspace(0, M, min(jobs, M) + 1).astype(int)
        parts = Parallel(n_jobs=jobs)(
            delayed(_run_block)(sample, statistic, m, seed, range(a, b), cap + 1)
            for a, b in zip(bounds[:-1], bounds[1:])
        )
        rows = [r for part, _ in parts for r in part]
        redraws = sum(k for _, k in parts)
    if redraws > cap:
        raise SubsamplingError(f"{redraws} redraws exceed the cap of {cap}")
    return np.vstack(rows), redraws


def root_distribution(
    sample: Sample, statistic: Statistic, m: int, M: int, seed: int, jobs: int = 1
) -> SubsamplingDistribution:
    full = float(statistic(sample))
    values, redraws = subsample_values(sample, statistic, m, M, seed, jobs)
    roots = np.sort(math.sqrt(m) * (values[:, 0] - full))
    roots.flags.writeable = False
    return SubsamplingDistribution(roots=roots, m=m, n=sample.n, redraws=redraws)


def ci_functional(dist: SubsamplingDistribution, theta_n: float, alpha: float) -> tuple[float, float]:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    s = math.sqrt(dist.n)
    return (
        float(theta_n - dist.quantile(1.0 - alpha / 2.0) / s),
        float(theta_n - dist.quantile(alpha / 2.0) / s),
    )


# -- statistics -----------------------------------------------------------


def propensity_for(sub: Sample, model: PropensityModel, refit: bool = True) -> PropensityModel:
    """Refit ``model``'s basis on ``sub``, or (fast mode) reuse its coefficients.

    The fast mode treats the propensity as known, which ignores its
    estimation error and so misstates the spread of the roots.
    """
    if refit:
        return fit_propensity(sub, model.basis, model.delta, model.ridge)
    return model.evaluated_on(sub)


def _arm_ecdfs(sub: Sample, model: PropensityModel, refit: bool) -> tuple[WeightedEcdf, WeightedEcdf]:
    fitted = propensity_for(sub, model, refit)
    return estimate_cdf(sub, fitted, Arm.TREATED), estimate_cdf(sub, fitted, Arm.CONTROL)


def sup_gap(e1: WeightedEcdf, e0: WeightedEcdf, ref1: WeightedEcdf | None = None, ref0: WeightedEcdf | None = None):
    """``sup_y [(F1 - F0) - (R1 - R0)](y)`` and a point attaining it.

    All inputs are right-continuous steps, so the difference is constant
    between consecutive pooled jump points and equals 0 left of all of them.
    """
    parts = [e1.support, e0.support]
    if ref1 is not None:
        parts += [ref1.support, ref0.support]
    pts = np.unique(np.concatenate(parts))
    diff = e1.cdf(pts) - e0.cdf(pts)
    if ref1 is not None:
        diff -= ref1.cdf(pts) - ref0.cdf(pts)
    k = int(np.argmax(diff))
    if diff[k] <= 0.0:
        return 0.0, float(pts[k]) if diff[k] == 0.0 else None
    return float(diff[k]), float(pts[k])


def theta01_statistic(model: PropensityModel, refit: bool = True) -> Statistic:
    def stat(sub: Sample) -> float:
        e1, e0 = _arm_ecdfs(sub, model, refit)
        return theta01(e0, e1)

    return stat


def band_statistic(model: PropensityModel, arm: Arm, reference: WeightedEcdf, refit: bool = True) -> Statistic:
    def stat(sub: Sample) -> float:
        fitted = propensity_for(sub, model, refit)
        return sup_distance(estimate_cdf(sub, fitted, arm), reference)

    return stat


def dominance_statistic(
    model: PropensityModel, ref1: WeightedEcdf, ref0: WeightedEcdf, refit: bool = True
) -> Statistic:
    def stat(sub: Sample) -> float:
        e1, e0 = _arm_ecdfs(sub, model, refit)
        return sup_gap(e1, e0, ref1, ref0)[0]

    return stat


def joint_statistic(
    model: PropensityModel, ref1: WeightedEcdf, ref0: WeightedEcdf, refit: bool = True
) -> Statistic:
    """``[theta01, band root (treated), band root (control), dominance root]``
    from a single propensity refit per subsample."""

    def stat(sub: Sample) -> np.ndarray:
        e1, e0 = _arm_ecdfs(sub, model, refit)
        return np.array(
            [theta01(e0, e1), sup_distance(e1, ref1), sup_distance(e0, ref0), sup_gap(e1, e0, ref1, ref0)[0]]
        )

    return stat


# -- confidence bands -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    """``[max(0, F - d/sqrt(n)), min(1, F + d/sqrt(n))]`` around a Hajek ECDF."""

    arm: Arm
    level: float
    d_hat: float
    n: int
    ecdf: WeightedEcdf
    m: int | None = None
    M: int | None = None
    seed: int | None = None
    redraws: int = 0

    @property
    def half_width(self) -> float:
        return self.d_hat / math.sqrt(self.n)

    @property
    def width(self) -> float:
        """Unclamped vertical extent ``2 d / sqrt(n)``."""
        return 2.0 * self.half_width

    def lower(self, y) -> np.ndarray:
        return np.maximum(0.0, self.ecdf.cdf(y) - self.half_width)

    def upper(self, y) -> np.ndarray:
        return np.minimum(1.0, self.ecdf.cdf(y) + self.half_width)

    def covers(self, cdf) -> bool:
        """True if the whole curve ``cdf`` lies inside the band."""
        return sup_distance(self.ecdf, cdf) <= self.half_width

    def to_dict(self) -> dict:
        return {
            "arm": self.arm.name.lower(),
            "level": self.level,
            "d_hat": self.d_hat,
            "half_width": self.half_width,
            "width": self.width,
            "n": self.n,
            "m": self.m,
            "M": self.M,
            "seed": self.seed,
            "redraws": self.redraws,
        }

    def to_csv(self, path: str | Path) -> None:
        ys = self.ecdf.support
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["y", "lower", "upper"])
            for y, lo, hi in zip(ys, self.lower(ys), self.upper(ys)):
                writer.writerow([repr(float(y)), repr(float(lo)), repr(float(hi))])


def _check(sample: Sample, alpha: float, m: int | None) -> int:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    m = default_m(sample.n) if m is None else int(m)
    if not 2 <= m < sample.n:
        raise ValueError(f"m={m} must satisfy 2 <= m < n={sample.n}")
    return m


def confidence_band(
    sample: Sample,
    model: PropensityModel,
    arm: Arm,
    alpha: float = 0.05,
    m: int | None = None,
    M: int = 1000,
    seed: int = 0,
    refit: bool = True,
    jobs: int = 1,
) -> ConfidenceBand:
    """Uniform band for one arm's CDF, critical value from Kolmogorov roots."""
    m = _check(sample, alpha, m)
    arm = Arm.parse(arm)
    if sample.arm_count(arm) == 0:
        raise DataError(f"arm {arm.name.lower()} is empty")
    full = estimate_cdf(sample, model, arm)
    dist = root_distribution(sample, band_statistic(model, arm, full, refit), m, M, seed, jobs)
    return ConfidenceBand(arm, 1.0 - alpha, dist.quantile(1.0 - alpha), sample.n, full, m, M, seed, dist.redraws)


# -- stochastic dominance -------------------------------------------------


@dataclass(frozen=True)
class DominanceReport:
    """One-sided test of ``H0: F1(y) <= F0(y) for all y``."""

    sup_stat: float
    d_hat: float
    reject: bool
    witness_y: float | None
    n: int
    alpha: float
    m: int | None = None
    M: int | None = None
    seed: int | None = None
    redraws: int = 0

    def to_dict(self) -> dict:
        return {
            "sup_stat": self.sup_stat,
            "d_hat": self.d_hat,
            "threshold": self.d_hat / math.sqrt(self.n),
            "reject": self.reject,
            "witness_y": self.witness_y,
            "n": self.n,
            "alpha": self.alpha,
            "m": self.m,
            "M": self.M,
            "seed": self.seed,
            "redraws": self.redraws,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def dominance_decision(sup_stat: float, d_hat: float, n: int) -> bool:
    return sup_stat - d_hat / math.sqrt(n) > 0.0


def dominance_test(
    sample: Sample,
    model: PropensityModel,
    alpha: float = 0.05,
    m: int | None = None,
    M: int = 1000,
    seed: int = 0,
    refit: bool = True,
    jobs: int = 1,
) -> DominanceReport:
    m = _check(sample, alpha, m)
    require_both_arms(sample)
    e1 = estimate_cdf(sample, model, Arm.TREATED)
    e0 = estimate_cdf(sample, model, Arm.CONTROL)
    sup_stat, witness = sup_gap(e1, e0)
    dist = root_distribution(sample, dominance_statistic(model, e1, e0, refit), m, M, seed, jobs)
    d_hat = dist.quantile(1.0 - alpha)
    return DominanceReport(
        sup_stat=sup_stat,
        d_hat=d_hat,
        reject=dominance_decision(sup_stat, d_hat, sample.n),
        witness_y=witness,
        n=sample.n,
        alpha=alpha,
        m=m,
        M=M,
        seed=seed,
        redraws=dist.redraws,
    )
