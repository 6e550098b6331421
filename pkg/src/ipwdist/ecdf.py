"""Inverse-propensity-weighted empirical distribution functions per arm."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Protocol, Union

import numpy as np

from .data import Arm, DataError, Sample
from .propensity import PropensityModel

Kind = Literal["hajek", "ht"]


class StepOrLinearCdf(Protocol):
    """Anything :func:`sup_distance` can compare.

    ``breakpoints`` must contain every point where the function jumps or
    changes slope; between consecutive breakpoints it must be constant or
    linear.
    """

    breakpoints: np.ndarray

    def cdf(self, y: np.ndarray) -> np.ndarray: ...

    def left_limit(self, y: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class WeightedEcdf:
    """A right-continuous step function with jumps ``weights`` at ``support``.

    ``support`` is strictly increasing (tied outcomes are merged and their
    weights summed). Hajek estimates are normalized to total mass 1;
    Horvitz-Thompson ones are not.
    """

    arm: Arm
    support: np.ndarray
    weights: np.ndarray
    normalized: bool
    total_mass: float
    cumulative: np.ndarray

    @property
    def breakpoints(self) -> np.ndarray:
        return self.support

    def cdf(self, y) -> np.ndarray:
        idx = np.searchsorted(self.support, y, side="right")
        return np.concatenate(([0.0], self.cumulative))[idx]

    def left_limit(self, y) -> np.ndarray:
        idx = np.searchsorted(self.support, y, side="left")
        return np.concatenate(([0.0], self.cumulative))[idx]

    def mean(self) -> float:
        return float(self.support @ self.weights) / (1.0 if self.normalized else self.total_mass)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["y", "weight", "cumulative"])
            for y, w, c in zip(self.support, self.weights, self.cumulative):
                writer.writerow([repr(float(y)), repr(float(w)), repr(float(c))])


def from_weighted_points(
    arm: Arm, y: np.ndarray, raw: np.ndarray, normalized: bool, scale: float = 1.0
) -> WeightedEcdf:
    """Build an ECDF from per-point masses ``raw``, merging ties.

    Hajek: masses are divided by their sum. HT: masses are multiplied by
    ``scale`` (1/n).
    """
    y = np.asarray(y, dtype=float)
    raw = np.asarray(raw, dtype=float)
    if len(y) == 0:
        raise DataError(f"arm {Arm(arm).name.lower()} is empty")
    if np.any(raw < 0):
        raise ValueError("weights must be nonnegative")
    support, inverse = np.unique(y, return_inverse=True)
    merged = np.bincount(inverse.reshape(-1), weights=raw, minlength=len(support))
    running = np.cumsum(merged)
    if normalized:
        total = running[-1]
        weights = merged / total
        cumulative = running / total
        mass = 1.0
    else:
        weights = merged * scale
        cumulative = running * scale
        mass = float(cumulative[-1])
    for arr in (support, weights, cumulative):
        arr.flags.writeable = False
    return WeightedEcdf(Arm(arm), support, weights, normalized, mass, cumulative)


def _inverse_probability(sample: Sample, model: PropensityModel, arm: Arm) -> tuple[np.ndarray, np.ndarray]:
    if model.fitted is None or len(model.fitted) != sample.n:
        raise ValueError("propensity model was not fitted on this sample")
    mask = sample.arm_mask(arm)
    if not mask.any():
        raise DataError(f"arm {Arm(arm).name.lower()} is empty")
    return mask, 1.0 / model.arm_probability(arm)[mask]


def hajek_weights(sample: Sample, model: PropensityModel, arm: Arm) -> np.ndarray:
    """Length-n normalized inverse-propensity weights; zero off-arm."""
    mask, inv = _inverse_probability(sample, model, arm)
    w = np.zeros(sample.n)
    w[mask] = inv / inv.sum()
    return w


def estimate_cdf(sample: Sample, model: PropensityModel, arm: Arm, kind: Kind = "hajek") -> WeightedEcdf:
    arm = Arm.parse(arm)
    mask, inv = _inverse_probability(sample, model, arm)
    if kind == "hajek":
        return from_weighted_points(arm, sample.y[mask], inv, normalized=True)
    if kind == "ht":
        return from_weighted_points(arm, sample.y[mask], inv, normalized=False, scale=1.0 / sample.n)
    raise ValueError(f"unknown estimator kind {kind!r}")


def cdf_eval(ecdf: WeightedEcdf, y: float) -> float:
    return float(ecdf.cdf(y))


def quantile(ecdf: WeightedEcdf, p: float) -> float:
    """Lower quantile ``inf{y : F(y) >= p}``."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p={p} outside (0, 1]")
    if not ecdf.normalized:
        raise ValueError("quantiles need a normalized (Hajek) ECDF")
    idx = int(np.searchsorted(ecdf.cumulative, p, side="left"))
    return float(ecdf.support[min(idx, len(ecdf.support) - 1)])


def ate(ecdf1: WeightedEcdf, ecdf0: WeightedEcdf) -> float:
    if not (ecdf1.normalized and ecdf0.normalized):
        raise ValueError("ATE needs normalized (Hajek) ECDFs")
    return float(ecdf1.support @ ecdf1.weights - ecdf0.support @ ecdf0.weights)


def qte(ecdf1: WeightedEcdf, ecdf0: WeightedEcdf, p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p={p} outside (0, 1)")
    return quantile(ecdf1, p) - quantile(ecdf0, p)


def naive_mean_diff(sample: Sample) -> float:
    treated = sample.arm_mask(Arm.TREATED)
    if treated.all() or not treated.any():
        raise DataError("both treatment arms must be nonempty")
    return float(sample.y[treated].mean() - sample.y[~treated].mean())


CdfLike = Union[WeightedEcdf, StepOrLinearCdf]


def sup_distance(a: CdfLike, b: CdfLike) -> float:
    """Exact ``sup_y |A(y) - B(y)|`` for step or piecewise-linear CDFs.

    On each gap between consecutive breakpoints both functions are monotone
    and at most linear, so the sup is reached at a breakpoint, either at the
    value or at the left limit there.
    """
    pts = np.union1d(a.breakpoints, b.breakpoints)
    right = np.abs(a.cdf(pts) - b.cdf(pts))
    left = np.abs(a.left_limit(pts) - b.left_limit(pts))
    return float(max(right.max(initial=0.0), left.max(initial=0.0)))


@dataclass(frozen=True, eq=False)
class PiecewiseLinearCdf:
    """Continuous CDF, linear between ``knots`` with ``values`` at the knots."""

    knots: np.ndarray
    values: np.ndarray

    @property
    def breakpoints(self) -> np.ndarray:
        return self.knots

    def cdf(self, y) -> np.ndarray:
        return np.interp(y, self.knots, self.values, left=0.0, right=1.0)

    left_limit = cdf

    def __call__(self, y):
        return self.cdf(y)

    def density(self, y) -> np.ndarray:
        slopes = np.diff(self.values) / np.diff(self.knots)
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(self.knots, y, side="right") - 1
        inside = (idx >= 0) & (idx < len(slopes))
        return np.where(inside, slopes[np.clip(idx, 0, len(slopes) - 1)], 0.0)

    def quantile(self, p: float) -> float:
        """``inf{y : F(y) >= p}`` by inverting the linear piece."""
        if not 0.0 < p <= 1.0:
            raise ValueError(f"p={p} outside (0, 1]")
        k = int(np.searchsorted(self.values, p, side="left"))
        if k == 0:
            return float(self.knots[0])
        v0, v1 = self.values[k - 1], self.values[k]
        y0, y1 = self.knots[k - 1], self.knots[k]
        return float(y0 + (p - v0) * (y1 - y0) / (v1 - v0))
