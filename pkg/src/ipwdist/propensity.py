"""Polynomial-sieve logistic propensity score.

The score is modelled as ``L(H(x)' pi)`` with ``L`` the logistic function and
``H`` the vector of all monomials of total degree at most ``degree``. The
coefficients maximize the (optionally ridge-penalized) Bernoulli
log-likelihood by Newton-Raphson with step halving. The degree is chosen by
cross-validation in :func:`select_basis_cv`.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from .data import Arm, DataError, Sample

DEFAULT_DELTA = 0.01
DEFAULT_RIDGE = 1e-8
MAX_ITER = 100
GRAD_TOL = 1e-8
MAX_HALVINGS = 40
# Relative tolerance for "no decrease" in the line search (float rounding of the sum).
ROUNDING_SLACK = 1e-12


class PropensityFitError(RuntimeError):
    """Raised when the pseudo-likelihood cannot be maximized."""


@dataclass(frozen=True)
class SieveBasis:
    """All monomials of total degree <= ``degree`` in ``l`` variables.

    Monomials are in graded lexicographic order: by degree, then by
    ``itertools.combinations_with_replacement`` order of variable indices, so
    for two variables and degree 2 the basis is 1, x1, x2, x1^2, x1*x2, x2^2.
    """

    l: int  # noqa: E741
    degree: int

    def __post_init__(self) -> None:
        if self.l < 1:
            raise ValueError("covariate dimension must be >= 1")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")

    @property
    def K(self) -> int:  # noqa: N802
        return math.comb(self.l + self.degree, self.degree)

    @property
    def terms(self) -> list[tuple[int, ...]]:
        return [
            combo
            for d in range(self.degree + 1)
            for combo in itertools.combinations_with_replacement(range(self.l), d)
        ]


def build_basis(x: Sequence[float], basis: SieveBasis) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if len(x) != basis.l:
        raise DataError(f"covariate vector has length {len(x)}, basis expects {basis.l}")
    return design_matrix(x[None, :], basis)[0]


def design_matrix(x: np.ndarray, basis: SieveBasis) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != basis.l:
        raise DataError(f"covariates have dimension {x.shape[1]}, basis expects {basis.l}")
    cols = [np.prod(x[:, list(term)], axis=1) if term else np.ones(len(x)) for term in basis.terms]
    return np.column_stack(cols)


def log_pseudo_likelihood(coef: np.ndarray, Z: np.ndarray, t: np.ndarray, ridge: float = 0.0) -> float:
    z = Z @ coef
    # log L(z) = -log(1 + e^-z), log(1 - L(z)) = -log(1 + e^z), both overflow-safe.
    ll = -np.sum(t * np.logaddexp(0.0, -z) + (1 - t) * np.logaddexp(0.0, z))
    return float(ll - 0.5 * ridge * coef @ coef)


def score(coef: np.ndarray, Z: np.ndarray, t: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Gradient of :func:`log_pseudo_likelihood`."""
    return Z.T @ (t - expit(Z @ coef)) - ridge * coef


@dataclass(frozen=True, eq=False)
class PropensityModel:
    basis: SieveBasis
    coef: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    delta: float = DEFAULT_DELTA
    ridge: float = DEFAULT_RIDGE
    fitted: np.ndarray | None = None
    iterations: int = 0
    converged: bool = True
    trace: tuple[float, ...] = field(default=(), repr=False)

    def standardized(self, x: np.ndarray) -> np.ndarray:
        H = design_matrix(x, self.basis)
        return (H - self.center) / self.scale

    def probability(self, x: np.ndarray) -> np.ndarray:
        """Clipped treatment probability for each row of ``x``."""
        p = expit(self.standardized(x) @ self.coef)
        return np.clip(p, self.delta, 1.0 - self.delta)

    def evaluated_on(self, sample: Sample) -> PropensityModel:
        """Same coefficients, fitted values recomputed on another sample."""
        return replace(self, fitted=self.probability(sample.x))

    def arm_probability(self, arm: Arm) -> np.ndarray:
        if self.fitted is None:
            raise ValueError("model carries no fitted values")
        return self.fitted if arm == Arm.TREATED else 1.0 - self.fitted

    def to_dict(self) -> dict:
        return {
            "basis": {"l": self.basis.l, "degree": self.basis.degree, "K": self.basis.K},
            "center": self.center.tolist(),
            "scale": self.scale.tolist(),
            "coefficients": self.coef.tolist(),
            "delta": self.delta,
            "ridge": self.ridge,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> PropensityModel:
        basis = SieveBasis(l=int(doc["basis"]["l"]), degree=int(doc["basis"]["degree"]))
        coef = np.asarray(doc["coefficients"], dtype=float)
        if len(coef) != basis.K:
            raise ValueError("coefficient count does not match basis")
        return cls(
            basis=basis,
            coef=coef,
            center=np.asarray(doc["center"], dtype=float),
            scale=np.asarray(doc["scale"], dtype=float),
            delta=float(doc["delta"]),
            ridge=float(doc.get("ridge", DEFAULT_RIDGE)),
            iterations=int(doc.get("iterations", 0)),
            converged=bool(doc.get("converged", True)),
        )

    @classmethod
    def from_json(cls, text: str) -> PropensityModel:
        return cls.from_dict(json.loads(text))


def _standardize(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    center = H.mean(axis=0)
    scale = H.std(axis=0)
    center[0], scale[0] = 0.0, 1.0  # keep the intercept column equal to 1
    scale[scale == 0.0] = 1.0
    return center, scale


def fit_propensity(
    sample: Sample,
    basis: SieveBasis,
    delta: float = DEFAULT_DELTA,
    ridge: float = DEFAULT_RIDGE,
    max_iter: int = MAX_ITER,
    tol: float = GRAD_TOL,
) -> PropensityModel:
    """Maximize the penalized log pseudo-likelihood by damped Newton steps.

    Stops when the max-norm of the gradient is at most ``tol`` or after
    ``max_iter`` iterations (``converged`` is False in that case).
    """
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    if ridge < 0.0:
        raise ValueError("ridge must be nonnegative")
    if sample.l != basis.l:
        raise DataError(f"sample has {sample.l} covariates, basis expects {basis.l}")
    H = design_matrix(sample.x, basis)
    center, scale = _standardize(H)
    Z = (H - center) / scale
    t = sample.t.astype(float)

    coef = np.zeros(basis.K)
    obj = log_pseudo_likelihood(coef, Z, t, ridge)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(Z @ coef)
        grad = Z.T @ (t - mu) - ridge * coef
        if np.max(np.abs(grad)) <= tol:
            converged = True
            it -= 1
            break
        info = (Z * (mu * (1.0 - mu))[:, None]).T @ Z + ridge * np.eye(basis.K)
        if ridge == 0.0 and np.linalg.cond(info) > 1.0 / np.finfo(float).eps:
            raise PropensityFitError("singular Newton system: separation or collinear basis; increase ridge")
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            raise PropensityFitError(
                "singular Newton system: separation or collinear basis; increase ridge"
            ) from None
        # Near the optimum the true gain falls below the rounding error of
        # the objective; such steps are accepted as non-decreasing.
        slack = ROUNDING_SLACK * max(1.0, abs(obj))
        size = 1.0
        for _ in range(MAX_HALVINGS):
            cand = coef + size * step
            cand_obj = log_pseudo_likelihood(cand, Z, t, ridge)
            if cand_obj >= obj - slack:
                break
            size *= 0.5
        else:
            # No ascent available at machine precision; treat as stationary.
            converged = np.max(np.abs(grad)) <= max(tol, 1e-6 * len(t))
            break
        if not np.isfinite(cand_obj):
            raise PropensityFitError("non-finite pseudo-likelihood")
        coef, obj = cand, cand_obj
        trace.append(obj)
    else:
        mu = expit(Z @ coef)
        converged = bool(np.max(np.abs(Z.T @ (t - mu) - ridge * coef)) <= tol)

    raw = expit(Z @ coef)
    # Unpenalized coefficients diverge under separation while the gradient
    # still vanishes, so the singular-system check alone does not catch it.
    if ridge == 0.0 and np.all(np.abs(t - raw) < 1e-6):
        raise PropensityFitError("perfect separation: separation or collinear basis; increase ridge")
    fitted = np.clip(raw, delta, 1.0 - delta)
    fitted.flags.writeable = False
    return PropensityModel(
        basis=basis,
        coef=coef,
        center=center,
        scale=scale,
        delta=delta,
        ridge=ridge,
        fitted=fitted,
        iterations=it,
        converged=bool(converged),
        trace=tuple(trace),
    )


def predict(model: PropensityModel, x: Sequence[float], arm: Arm = Arm.TREATED) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if len(x) != model.basis.l:
        raise DataError(f"covariate vector has length {len(x)}, model expects {model.basis.l}")
    p = float(model.probability(x[None, :])[0])
    return p if Arm(arm) == Arm.TREATED else 1.0 - p


def select_basis_cv(
    sample: Sample,
    degrees: Sequence[int],
    folds: int = 5,
    delta: float = DEFAULT_DELTA,
    ridge: float = DEFAULT_RIDGE,
    seed: int = 0,
    rtol: float = 1e-9,
) -> SieveBasis:
    """Pick the degree with the smallest out-of-fold squared error.

    Folds come from a permutation drawn with ``seed``. Scores within ``rtol``
    of the best are ties, resolved toward the smaller degree: distinct degrees
    can span the same function space (e.g. powers of a binary covariate) and
    then differ only by rounding.
    """
    degrees = sorted(set(int(d) for d in degrees))
    if not degrees:
        raise ValueError("no candidate degrees")
    if not 2 <= folds <= sample.n:
        raise ValueError(f"folds must lie in [2, n={sample.n}]")
    if len(degrees) == 1:
        return SieveBasis(sample.l, degrees[0])

    perm = np.random.default_rng(seed).permutation(sample.n)
    assignment = np.empty(sample.n, dtype=int)
    assignment[perm] = np.arange(sample.n) % folds
    t = sample.t.astype(float)

    scores: dict[int, float] = {}
    for d in degrees:
        basis = SieveBasis(sample.l, d)
        if basis.K >= sample.n:
            warnings.warn(f"degree {d} skipped: K={basis.K} >= n={sample.n}", stacklevel=2)
            continue
        sse = 0.0
        for k in range(folds):
            test = assignment == k
            model = fit_propensity(sample.take(~test), basis, delta, ridge)
            sse += float(np.sum((t[test] - model.probability(sample.x[test])) ** 2))
        scores[d] = sse
    if not scores:
        raise ValueError("every candidate degree has K >= n")
    best = min(scores.values())
    return SieveBasis(sample.l, min(d for d, s in scores.items() if s <= best + rtol * abs(best)))
