"""Simulation scenarios with exact oracles, and the Monte Carlo study.

Each scenario draws a binary covariate X ~ Bernoulli(1/2), a treatment with
probability depending on X, and potential outcomes
``Y_j = base_j + 10 X + U_j`` with independent ``U_j ~ U(-10, 10)``. Every
outcome law is then a two-component mixture of uniforms, so CDFs are
piecewise linear and all target quantities have exact values.

Replication ``r`` of a Monte Carlo run under master seed ``s`` uses
``SeedSequence(s, spawn_key=(r, k))`` with k = 0 (data), 1 (CV folds),
2 (subsamples); any replication can be rerun on its own.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

from .data import Arm, Sample
from .ecdf import PiecewiseLinearCdf, ate, estimate_cdf, naive_mean_diff, quantile, sup_distance
from .propensity import fit_propensity, select_basis_cv
from .subsampling import ci_functional, dominance_decision, joint_statistic, sup_gap
from .subsampling import SubsamplingDistribution, subsample_values
from .wilcoxon import theta01, variance_estimate

PROBS = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class Scenario:
    """Mixture-of-uniforms design; also the exact oracle for it."""

    id: str
    label: str
    base_control: float
    base_treated: float
    # P(T = 1 | X = 0), P(T = 1 | X = 1)
    treat_prob: tuple[float, float]
    x_effect: float = 10.0
    half_width: float = 10.0
    p_x: float = 0.5

    def _base(self, arm: Arm) -> float:
        return self.base_treated if arm == Arm.TREATED else self.base_control

    def _px(self, x: int) -> float:
        return self.p_x if x == 1 else 1.0 - self.p_x

    def propensity(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        return self.treat_prob[1] * x + self.treat_prob[0] * (1.0 - x)

    def interval(self, arm: Arm, x: int) -> tuple[float, float]:
        c = self._base(arm) + self.x_effect * x
        return c - self.half_width, c + self.half_width

    def conditional_cdf(self, arm: Arm, y, x: int):
        lo, hi = self.interval(Arm(arm), x)
        return np.clip((np.asarray(y, dtype=float) - lo) / (hi - lo), 0.0, 1.0)

    def cdf(self, arm: Arm) -> PiecewiseLinearCdf:
        arm = Arm(arm)
        knots = np.unique([v for x in (0, 1) for v in self.interval(arm, x)])
        values = sum(self._px(x) * self.conditional_cdf(arm, knots, x) for x in (0, 1))
        return PiecewiseLinearCdf(knots, np.asarray(values, dtype=float))

    def density(self, arm: Arm, y):
        return self.cdf(arm).density(y)

    def quantile(self, arm: Arm, p: float) -> float:
        return self.cdf(arm).quantile(p)

    def mean(self, arm: Arm) -> float:
        return self._base(Arm(arm)) + self.x_effect * self.p_x

    @property
    def tau(self) -> float:
        return self.mean(Arm.TREATED) - self.mean(Arm.CONTROL)

    def observed_mean_difference(self) -> float:
        """Population ``E[Y | T=1] - E[Y | T=0]``."""
        w1 = {x: self._px(x) * float(self.propensity(x)) for x in (0, 1)}
        w0 = {x: self._px(x) * (1.0 - float(self.propensity(x))) for x in (0, 1)}
        m1 = sum(w1[x] * (self.base_treated + self.x_effect * x) for x in (0, 1)) / sum(w1.values())
        m0 = sum(w0[x] * (self.base_control + self.x_effect * x) for x in (0, 1)) / sum(w0.values())
        return m1 - m0

    def _conditional_moments(self, of: Arm, x: int) -> tuple[float, float]:
        """``E[G(Y_of) | x]`` and ``E[G(Y_of)^2 | x]`` with G the other arm's CDF."""
        other = self.cdf(Arm.CONTROL if of == Arm.TREATED else Arm.TREATED)
        a, b = self.interval(of, x)
        return _linear_power_mean(other, a, b, 1), _linear_power_mean(other, a, b, 2)

    @property
    def theta01(self) -> float:
        """``P(Y1 >= Y0)`` for independent draws, i.e. the integral of F0 dF1."""
        return sum(self._px(x) * self._conditional_moments(Arm.TREATED, x)[0] for x in (0, 1))

    def wilcoxon_variance(self) -> float:
        """Asymptotic variance of ``sqrt(n) * theta01_hat``, by exact expectation over x."""
        total, diffs = 0.0, {}
        for x in (0, 1):
            p = float(self.propensity(x))
            g01, m01 = self._conditional_moments(Arm.TREATED, x)
            g10, m10 = self._conditional_moments(Arm.CONTROL, x)
            total += self._px(x) * ((m01 - g01**2) / p + (m10 - g10**2) / (1.0 - p))
            diffs[x] = g10 - g01
        mean = sum(self._px(x) * diffs[x] for x in (0, 1))
        return total + sum(self._px(x) * (diffs[x] - mean) ** 2 for x in (0, 1))

    def draw(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        x = (rng.random(n) < self.p_x).astype(float)
        t = (rng.random(n) < self.propensity(x)).astype(np.int8)
        hw = self.half_width
        y1 = self.base_treated + self.x_effect * x + rng.uniform(-hw, hw, n)
        y0 = self.base_control + self.x_effect * x + rng.uniform(-hw, hw, n)
        return {"x": x, "t": t, "y1": y1, "y0": y0, "y": np.where(t == 1, y1, y0)}


def _linear_power_mean(F: PiecewiseLinearCdf, a: float, b: float, power: int) -> float:
    """Average of ``F(y)^power`` over [a, b]; Simpson on each linear piece is exact."""
    cuts = np.unique(np.concatenate(([a, b], F.knots[(F.knots > a) & (F.knots < b)])))
    lo, hi = cuts[:-1], cuts[1:]
    f = lambda y: F.cdf(y) ** power  # noqa: E731
    integral = np.sum((hi - lo) / 6.0 * (f(lo) + 4.0 * f((lo + hi) / 2.0) + f(hi)))
    return float(integral / (b - a))


SCENARIOS: dict[str, Scenario] = {
    "no-effect": Scenario("no-effect", "no treatment effect, selection on x", 70.0, 70.0, (0.25, 0.75)),
    "treatment-effect": Scenario("treatment-effect", "treated shifted up by 5, selection on x", 70.0, 75.0, (0.75, 0.25)),
    # Treated outcomes 10 below control: F1 >= F0 everywhere, dominance fails.
    "anti-dominance": Scenario("anti-dominance", "treated shifted down by 10", 70.0, 60.0, (0.25, 0.75)),
}
ALIASES = {"i": "no-effect", "1": "no-effect", "ii": "treatment-effect", "2": "treatment-effect", "anti": "anti-dominance"}


def get_scenario(scenario_id: str | Scenario) -> Scenario:
    if isinstance(scenario_id, Scenario):
        return scenario_id
    key = ALIASES.get(scenario_id, scenario_id)
    if key not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario_id!r}; choose from {sorted(SCENARIOS)} or i/ii")
    return SCENARIOS[key]


oracle = get_scenario


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    n: int
    seed: int = 0

    def __post_init__(self) -> None:
        get_scenario(self.id)
        if self.n < 2:
            raise ValueError("n must be >= 2")


def generate(spec: ScenarioSpec, rng: np.random.Generator | None = None) -> Sample:
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    d = get_scenario(spec.id).draw(spec.n, rng)
    return Sample(x=d["x"], t=d["t"], y=d["y"])


def exact_cdf(scenario: Scenario | str, arm: Arm, y: float) -> float:
    return float(get_scenario(scenario).cdf(Arm.parse(arm)).cdf(y))


def exact_truths(scenario: Scenario | str) -> dict:
    sc = get_scenario(scenario)
    return {
        "theta01": sc.theta01,
        "tau": sc.tau,
        "naive": sc.observed_mean_difference(),
        "Q1": [sc.quantile(Arm.TREATED, p) for p in PROBS],
        "Q0": [sc.quantile(Arm.CONTROL, p) for p in PROBS],
        "wilcoxon_V": sc.wilcoxon_variance(),
    }


# -- Monte Carlo ----------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloConfig:
    scenario: str = "no-effect"
    replications: int = 200
    n: int = 1000
    m: int = 100
    M: int = 400
    alpha: float = 0.05
    degrees: tuple[int, ...] = (0, 1, 2, 3)
    folds: int = 5
    delta: float = 0.01
    ridge: float = 1e-8
    seed: int = 0
    subsampling: bool = True
    refit: bool = True
    jobs: int = 1

    def __post_init__(self) -> None:
        get_scenario(self.scenario)
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 2 <= self.m < self.n:
            raise ValueError("need 2 <= m < n")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    @classmethod
    def desk(cls, scenario: str, n: int = 1000, **kw) -> MonteCarloConfig:
        """Desk-scale defaults: N=200, M=400 and m = n/10."""
        kw.setdefault("m", max(2, n // 10))
        return cls(scenario=scenario, n=n, **kw)

    @classmethod
    def full(cls, scenario: str, n: int = 1000, **kw) -> MonteCarloConfig:
        """Full-scale settings: N=1000, M=1000."""
        return cls.desk(scenario, n, **{"replications": 1000, "M": 1000, **kw})


def _seed(master: int, r: int, k: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=(r, k)).generate_state(1)[0])


def run_replication(config: MonteCarloConfig, r: int) -> dict:
    sc = get_scenario(config.scenario)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(r, 0)))
    sample = generate(ScenarioSpec(sc.id, config.n), rng)
    basis = select_basis_cv(sample, config.degrees, config.folds, config.delta, config.ridge, seed=_seed(config.seed, r, 1))
    model = fit_propensity(sample, basis, config.delta, config.ridge)
    e1 = estimate_cdf(sample, model, Arm.TREATED)
    e0 = estimate_cdf(sample, model, Arm.CONTROL)
    th = theta01(e0, e1)
    out = {
        "replication": r,
        "degree": basis.degree,
        "theta01": th,
        "Q1": [quantile(e1, p) for p in PROBS],
        "Q0": [quantile(e0, p) for p in PROBS],
        "tau": ate(e1, e0),
        "naive": naive_mean_diff(sample),
    }
    v = variance_estimate(sample, model, e0, e1)
    zq = float(norm.ppf(1.0 - config.alpha / 2.0))
    half = zq * math.sqrt(v / config.n)
    out["variance"] = v
    out["normal_ci"] = [th - half, th + half] if v > 0 else None
    if not config.subsampling:
        return out

    stat = joint_statistic(model, e1, e0, refit=config.refit)
    values, redraws = subsample_values(sample, stat, config.m, config.M, _seed(config.seed, r, 2))
    full = np.array([th, 0.0, 0.0, 0.0])
    roots = math.sqrt(config.m) * (values - full)
    dists = [SubsamplingDistribution(np.sort(roots[:, k]), config.m, config.n, redraws) for k in range(4)]
    out["redraws"] = redraws
    out["subsampling_ci"] = list(ci_functional(dists[0], th, config.alpha))
    rn = math.sqrt(config.n)
    for name, arm, ecdf, dist in (("treated", Arm.TREATED, e1, dists[1]), ("control", Arm.CONTROL, e0, dists[2])):
        d_hat = dist.quantile(1.0 - config.alpha)
        out[f"band_{name}"] = {
            "d_hat": d_hat,
            "width": 2.0 * d_hat / rn,
            "covers": bool(sup_distance(ecdf, sc.cdf(arm)) <= d_hat / rn),
        }
    sup_stat, _ = sup_gap(e1, e0)
    d_hat = dists[3].quantile(1.0 - config.alpha)
    out["dominance"] = {"sup_stat": sup_stat, "d_hat": d_hat, "reject": dominance_decision(sup_stat, d_hat, config.n)}
    return out


def _safe_replication(config: MonteCarloConfig, r: int) -> dict:
    try:
        return run_replication(config, r)
    except Exception as exc:  # counted and reported, never dropped
        return {"replication": r, "error": f"{type(exc).__name__}: {exc}"}


def _summary(values: Sequence[float], truth: float) -> dict:
    v = np.asarray(values, dtype=float)
    return {
        "truth": truth,
        "average": float(v.mean()),
        "median": float(np.median(v)),
        "sd": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
    }


def _rate(flags: Sequence[bool]) -> float | None:
    return float(np.mean(flags)) if len(flags) else None


@dataclass
class MonteCarloReport:
    config: dict
    scenario: str
    truths: dict
    estimators: dict
    ci: dict = field(default_factory=dict)
    bands: dict = field(default_factory=dict)
    dominance: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, out_dir: str | Path) -> list[Path]:
        """Write report.json plus one CSV per summary table."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "report.json"]
        paths[0].write_text(self.to_json() + "\n", encoding="utf-8")
        tables = {
            "estimates.csv": (
                ["estimator", "truth", "average", "median", "sd"],
                [[k, v["truth"], v["average"], v["median"], v["sd"]] for k, v in self.estimators.items()],
            ),
            "confidence_intervals.csv": (
                ["method", "coverage", "average_length"],
                [[k, v["coverage"], v["average_length"]] for k, v in self.ci.items()],
            ),
            "bands.csv": (
                ["arm", "coverage", "average_width"],
                [[k, v["coverage"], v["average_width"]] for k, v in self.bands.items()],
            ),
            "dominance.csv": (
                ["statistic", "rejection_rate"],
                [["Delta(y)", self.dominance.get("rejection_rate")]] if self.dominance else [],
            ),
        }
        for name, (header, rows) in tables.items():
            path = out / name
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                writer.writerows(rows)
            paths.append(path)
        return paths


def summarize(config: MonteCarloConfig, results: list[dict]) -> MonteCarloReport:
    sc = get_scenario(config.scenario)
    truths = exact_truths(sc)
    ok = [r for r in results if "error" not in r]
    failures = [r for r in results if "error" in r]

    estimators = {}
    if ok:
        estimators["theta01"] = _summary([r["theta01"] for r in ok], truths["theta01"])
        for j, arm in (("1", "Q1"), ("0", "Q0")):
            for k, p in enumerate(PROBS):
                estimators[f"Q{j}({p:.2f})"] = _summary([r[arm][k] for r in ok], truths[arm][k])
        estimators["tau"] = _summary([r["tau"] for r in ok], truths["tau"])
        estimators["naive"] = _summary([r["naive"] for r in ok], truths["naive"])

    th = truths["theta01"]
    normal = [r["normal_ci"] for r in ok if r["normal_ci"] is not None]
    ci = {
        "normal": {
            "coverage": _rate([lo <= th <= hi for lo, hi in normal]),
            "average_length": float(np.mean([hi - lo for lo, hi in normal])) if normal else None,
        }
    }
    bands, dominance = {}, {}
    sub = [r for r in ok if "subsampling_ci" in r]
    if sub:
        ci["subsampling"] = {
            "coverage": _rate([lo <= th <= hi for lo, hi in (r["subsampling_ci"] for r in sub)]),
            "average_length": float(np.mean([hi - lo for lo, hi in (r["subsampling_ci"] for r in sub)])),
        }
        for name in ("treated", "control"):
            bands[name] = {
                "coverage": _rate([r[f"band_{name}"]["covers"] for r in sub]),
                "average_width": float(np.mean([r[f"band_{name}"]["width"] for r in sub])),
            }
        dominance = {"rejection_rate": _rate([r["dominance"]["reject"] for r in sub])}

    degrees: dict[str, int] = {}
    for r in ok:
        degrees[str(r["degree"])] = degrees.get(str(r["degree"]), 0) + 1
    diagnostics = {
        "replications": len(results),
        "succeeded": len(ok),
        "failures": failures,
        "normal_degenerate": sum(r["normal_ci"] is None for r in ok),
        "redraws": int(sum(r.get("redraws", 0) for r in ok)),
        "selected_degree_counts": degrees,
    }
    cfg = asdict(config)
    cfg.pop("jobs")  # output must not depend on parallelism
    cfg["degrees"] = list(cfg["degrees"])
    return MonteCarloReport(cfg, sc.label, truths, estimators, ci, bands, dominance, diagnostics)


def run_monte_carlo(config: MonteCarloConfig, progress: bool = False) -> MonteCarloReport:
    reps = range(config.replications)
    if config.jobs == 1:
        it = reps
        if progress:
            from tqdm import tqdm

            it = tqdm(reps, desc=config.scenario)
        results = [_safe_replication(config, r) for r in it]
    else:
        results = Parallel(n_jobs=config.jobs)(delayed(_safe_replication)(config, r) for r in reps)
    results.sort(key=lambda r: r["replication"])
    return summarize(config, results)
