"""End-to-end acceptance checks at desk scale.

Each test prints one PASS/FAIL line (also echoed in the terminal summary).
Monte Carlo runs are cached per session; seeds are fixed below and were not tuned.
"""

import json
from functools import lru_cache

import numpy as np
import pytest
from scipy import integrate

from conftest import ACCEPTANCE_LINES, fixed_propensity
from ipwdist import Arm, MonteCarloConfig, Sample, exact_truths, run_monte_carlo, sup_distance, theta01
from ipwdist.ecdf import estimate_cdf, from_weighted_points
from ipwdist.propensity import ROUNDING_SLACK, SieveBasis, design_matrix, fit_propensity, log_pseudo_likelihood, score
from ipwdist.simulation import SCENARIOS
from ipwdist.wilcoxon import theta01_bruteforce

SEED_I = 20240601
SEED_II = 20240602
SEED_5000 = 20240603
SEED_ANTI = 20240604


@lru_cache(maxsize=None)
def mc_text(scenario: str, n: int, replications: int, seed: int, jobs: int = 1) -> str:
    config = MonteCarloConfig.desk(scenario, n, replications=replications, seed=seed, jobs=jobs)
    return run_monte_carlo(config).to_json()


def mc(scenario: str, n: int, replications: int, seed: int) -> dict:
    return json.loads(mc_text(scenario, n, replications, seed))


def scenario_i():
    return mc("no-effect", 1000, 200, SEED_I)


def scenario_ii():
    return mc("treatment-effect", 1000, 200, SEED_II)


class Check:
    def __init__(self, criterion: int, title: str):
        self.criterion, self.title, self.items = criterion, title, []

    def within(self, name, value, lo, hi):
        ok = value is not None and lo <= value <= hi
        self.items.append((ok, f"{name}={_fmt(value)} in [{_fmt(lo)}, {_fmt(hi)}]"))

    def near(self, name, value, target, rel):
        self.within(name, value, target * (1 - rel), target * (1 + rel))

    def holds(self, name, ok, detail=""):
        self.items.append((bool(ok), f"{name}{': ' + detail if detail else ''}"))

    def finish(self):
        ok = all(o for o, _ in self.items)
        failed = [d for o, d in self.items if not o]
        line = f"criterion {self.criterion} [{'PASS' if ok else 'FAIL'}] {self.title}"
        line += " | " + "; ".join(failed if failed else [d for _, d in self.items])
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line


def _fmt(v):
    return "None" if v is None else f"{v:.4g}"


@pytest.mark.slow
def test_criterion_1_theta_no_effect():
    c = Check(1, "scenario i theta01 mean and spread")
    est = scenario_i()["estimators"]["theta01"]
    c.within("mean", est["average"], 0.495, 0.505)
    c.within("sd", est["sd"], 0.010, 0.020)
    c.finish()


@pytest.mark.slow
def test_criterion_2_ate_naive_quantiles_no_effect():
    c = Check(2, "scenario i tau, naive difference, quartiles")
    est = scenario_i()["estimators"]
    c.within("tau", est["tau"]["average"], -0.1, 0.2)
    c.within("naive", est["naive"]["average"], 4.8, 5.2)
    for arm in ("1", "0"):
        for p, q in (("0.25", 70), ("0.50", 75), ("0.75", 80)):
            c.within(f"Q{arm}({p})", est[f"Q{arm}({p})"]["average"], q - 0.5, q + 0.5)
    c.finish()


@pytest.mark.slow
def test_criterion_3_treatment_effect_point_estimates():
    c = Check(3, "scenario ii theta01, tau, naive difference")
    est = scenario_ii()["estimators"]
    c.within("theta01", est["theta01"]["average"], 0.66, 0.68)
    c.within("tau", est["tau"]["average"], 4.8, 5.2)
    c.within("naive", est["naive"]["average"], -0.2, 0.2)
    c.finish()


@pytest.mark.slow
def test_criterion_4_wilcoxon_interval_coverage():
    c = Check(4, "scenario i Wilcoxon CI coverage and length (M=400)")
    ci = scenario_i()["ci"]
    c.within("normal coverage", ci["normal"]["coverage"], 0.91, 0.99)
    c.within("subsampling coverage", ci["subsampling"]["coverage"], 0.90, 0.98)
    c.near("normal length", ci["normal"]["average_length"], 0.063, 0.25)
    c.near("subsampling length", ci["subsampling"]["average_length"], 0.062, 0.25)
    c.finish()


@pytest.mark.slow
def test_criterion_5_confidence_bands():
    c = Check(5, "band coverage and width, n=1000 (N=200) and n=5000 (N=50)")
    for arm, band in scenario_i()["bands"].items():
        c.within(f"n1000 {arm} coverage", band["coverage"], 0.94, 1.00)
        c.near(f"n1000 {arm} width", band["average_width"], 0.137, 0.25)
    big = mc("no-effect", 5000, 50, SEED_5000)
    for arm, band in big["bands"].items():
        c.within(f"n5000 {arm} coverage", band["coverage"], 0.94, 1.00)
        c.near(f"n5000 {arm} width", band["average_width"], 0.060, 0.25)
    c.finish()


@pytest.mark.slow
def test_criterion_6_dominance_rejection_rates():
    c = Check(6, "dominance rejection rates")
    c.within("scenario i", scenario_i()["dominance"]["rejection_rate"], 0.02, 0.10)
    c.within("scenario ii", scenario_ii()["dominance"]["rejection_rate"], 0.0, 0.02)
    c.within("anti-dominance n=2000", mc("anti-dominance", 2000, 200, SEED_ANTI)["dominance"]["rejection_rate"], 0.95, 1.0)
    c.finish()


def _random_points(rng, n, ties):
    y = rng.integers(0, 15, n).astype(float) if ties else rng.normal(size=n) * 10
    return y, rng.uniform(0.05, 5.0, n)


def _grid_sup(a, b):
    pts = np.union1d(a.support, b.support)
    grid = np.concatenate([pts, (pts[:-1] + pts[1:]) / 2, [pts[0] - 1, pts[-1] + 1]])
    return float(np.max(np.abs(a.cdf(grid) - b.cdf(grid))))


def test_criterion_7_oracle_equivalences():
    c = Check(7, "fast paths equal brute-force oracles")
    rng = np.random.default_rng(7)
    worst_theta = worst_ht = 0.0
    sup_exact = 0
    sum_ok = True
    for k in range(100):
        n1, n0 = rng.integers(1, 201, 2)
        ties = k % 2 == 0
        y1, w1 = _random_points(rng, n1, ties)
        y0, w0 = _random_points(rng, n0, ties)
        e1 = from_weighted_points(Arm.TREATED, y1, w1, normalized=True)
        e0 = from_weighted_points(Arm.CONTROL, y0, w0, normalized=True)
        worst_theta = max(worst_theta, abs(theta01(e0, e1) - theta01_bruteforce(y1, w1 / w1.sum(), y0, w0 / w0.sum())))
        sup_exact += sup_distance(e1, e0) == _grid_sup(e1, e0)
        if not ties:
            sum_ok &= abs(theta01(e0, e1) + theta01(e1, e0) - 1.0) <= 1e-12

        n = int(n1 + n0)
        t = np.r_[np.ones(n1, dtype=int), np.zeros(n0, dtype=int)]
        s = Sample(np.zeros((n, 1)), t, np.r_[y1, y0])
        model = fixed_propensity(rng.uniform(0.02, 0.98, n))
        for arm in (Arm.TREATED, Arm.CONTROL):
            h, ht = estimate_cdf(s, model, arm, "hajek"), estimate_cdf(s, model, arm, "ht")
            worst_ht = max(worst_ht, float(np.max(np.abs(h.cdf(h.support) - ht.cdf(h.support) / ht.total_mass))))
    c.within("max |theta fast - double sum|", worst_theta, 0.0, 1e-12)
    c.within("max |Hajek - HT/HT(inf)|", worst_ht, 0.0, 1e-12)
    c.holds("sup_distance == dense-grid sup", sup_exact == 100, f"{sup_exact}/100 pairs")
    c.holds("theta01 + theta10 == 1 without ties", sum_ok)
    c.finish()


def test_criterion_8_numerical_checks():
    c = Check(8, "gradient, Newton ascent, density mass, exact theta01")
    rng = np.random.default_rng(8)
    worst = 0.0
    monotone = True
    for degree in (1, 2, 3):
        x = rng.normal(size=(300, 1))
        t = (rng.random(300) < 1 / (1 + np.exp(-x[:, 0] - 0.5 * x[:, 0] ** 2))).astype(float)
        Z = design_matrix(x, SieveBasis(1, degree))
        Z[:, 1:] = (Z[:, 1:] - Z[:, 1:].mean(0)) / Z[:, 1:].std(0)
        coef = rng.normal(scale=0.3, size=Z.shape[1])
        g = score(coef, Z, t, 1e-8)
        h = 1e-6
        fd = np.array([(log_pseudo_likelihood(coef + h * e, Z, t, 1e-8) - log_pseudo_likelihood(coef - h * e, Z, t, 1e-8)) / (2 * h) for e in np.eye(len(coef))])
        worst = max(worst, float(np.linalg.norm(fd - g) / np.linalg.norm(g)))
        trace = np.array(fit_propensity(Sample(x, t.astype(int), np.zeros(300)), SieveBasis(1, degree)).trace)
        monotone &= bool(np.all(np.diff(trace) >= -ROUNDING_SLACK * np.maximum(1, np.abs(trace[:-1]))))
    c.within("gradient rel err", worst, 0.0, 1e-5)
    c.holds("Newton objective non-decreasing", monotone)
    worst_mass = 0.0
    for sc in SCENARIOS.values():
        for arm in (Arm.TREATED, Arm.CONTROL):
            F = sc.cdf(arm)
            mass, _ = integrate.quad(lambda y: float(F.density(y)), F.knots[0], F.knots[-1], points=F.knots, limit=200)
            worst_mass = max(worst_mass, abs(mass - 1.0))
    c.within("max |density mass - 1|", worst_mass, 0.0, 1e-6)
    c.holds("scenario ii theta01 rounds to 0.672", round(exact_truths("treatment-effect")["theta01"], 3) == 0.672,
            f"{exact_truths('treatment-effect')['theta01']:.6f}")
    c.finish()


@pytest.mark.slow
def test_criterion_9_determinism_across_jobs():
    c = Check(9, "same seed gives byte-identical desk report for jobs=1 and jobs=2")
    a = mc_text("no-effect", 1000, 200, SEED_I, jobs=1)
    b = mc_text("no-effect", 1000, 200, SEED_I, jobs=2)
    c.holds("reports identical", a.encode() == b.encode(), f"{len(a)} bytes each")
    c.finish()
