import json

import numpy as np
import pytest
from scipy import integrate

from ipwdist import Arm, MonteCarloConfig, ScenarioSpec, exact_cdf, exact_truths, generate, run_monte_carlo
from ipwdist.simulation import SCENARIOS, get_scenario


@pytest.mark.parametrize("arm", [Arm.TREATED, Arm.CONTROL])
def test_no_effect_cdf_at_quartiles(arm):
    for y, p in ((70, 0.25), (75, 0.5), (80, 0.75), (60, 0.0), (90, 1.0)):
        assert exact_cdf("no-effect", arm, y) == pytest.approx(p, abs=1e-12)


def test_treatment_effect_treated_cdf():
    for y, p in ((75, 0.25), (80, 0.5), (85, 0.75)):
        assert exact_cdf("treatment-effect", Arm.TREATED, y) == pytest.approx(p, abs=1e-12)


@pytest.mark.parametrize("sid", sorted(SCENARIOS))
@pytest.mark.parametrize("arm", [Arm.TREATED, Arm.CONTROL])
def test_densities_integrate_to_one(sid, arm):
    F = get_scenario(sid).cdf(arm)
    total, _ = integrate.quad(lambda y: float(F.density(y)), F.knots[0] - 5, F.knots[-1] + 5, points=F.knots, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_theta_by_dense_grid_quadrature():
    sc = get_scenario("treatment-effect")
    F0, F1 = sc.cdf(Arm.CONTROL), sc.cdf(Arm.TREATED)
    y = np.linspace(50, 110, 1_000_001)
    mid = (y[:-1] + y[1:]) / 2
    grid_theta = float(np.sum(F0.cdf(mid) * np.diff(F1.cdf(y))))
    assert round(grid_theta, 3) == 0.672
    assert exact_truths(sc)["theta01"] == pytest.approx(grid_theta, abs=1e-6)
    assert exact_truths("no-effect")["theta01"] == pytest.approx(0.5, abs=1e-12)


def test_truths_of_both_scenarios():
    i, ii = exact_truths("i"), exact_truths("ii")
    assert (i["tau"], i["naive"]) == pytest.approx((0.0, 5.0))
    assert (ii["tau"], ii["naive"]) == pytest.approx((5.0, 0.0))
    assert i["Q1"] == pytest.approx([70, 75, 80]) and i["Q0"] == pytest.approx([70, 75, 80])
    assert ii["Q1"] == pytest.approx([75, 80, 85])
    assert exact_truths("anti")["theta01"] < 0.5


def test_sampled_draws_match_exact_cdf():
    s = generate(ScenarioSpec("treatment-effect", 200_000, seed=11))
    sc = get_scenario("treatment-effect")
    d = sc.draw(200_000, np.random.default_rng(11))
    for arm, ys in ((Arm.TREATED, d["y1"]), (Arm.CONTROL, d["y0"])):
        grid = np.linspace(60, 100, 41)
        emp = np.searchsorted(np.sort(ys), grid, side="right") / len(ys)
        np.testing.assert_allclose(emp, sc.cdf(arm).cdf(grid), atol=0.005)
    assert s.n == 200_000 and set(np.unique(s.x)) == {0.0, 1.0}


def test_generate_is_reproducible():
    a = generate(ScenarioSpec("no-effect", 50, seed=2))
    assert a == generate(ScenarioSpec("no-effect", 50, seed=2))
    assert a != generate(ScenarioSpec("no-effect", 50, seed=3))


def test_unknown_scenario_rejected():
    with pytest.raises(ValueError):
        ScenarioSpec("iii", 10)


def test_config_validation():
    with pytest.raises(ValueError):
        MonteCarloConfig(n=100, m=100)
    with pytest.raises(ValueError):
        MonteCarloConfig(alpha=0.0)
    assert MonteCarloConfig.desk("i", 5000).m == 500
    assert MonteCarloConfig.full("i").M == 1000


def test_small_run_is_deterministic_across_jobs():
    cfg = MonteCarloConfig.desk("no-effect", n=300, replications=3, M=30, seed=9)
    a = run_monte_carlo(cfg).to_json()
    b = run_monte_carlo(MonteCarloConfig.desk("no-effect", n=300, replications=3, M=30, seed=9, jobs=2)).to_json()
    assert a == b
    doc = json.loads(a)
    assert doc["diagnostics"]["succeeded"] == 3
    assert "jobs" not in doc["config"]


def test_report_tables_written(tmp_path):
    rep = run_monte_carlo(MonteCarloConfig.desk("treatment-effect", n=300, replications=2, M=20, seed=1))
    paths = rep.write(tmp_path)
    assert {p.name for p in paths} == {
        "report.json",
        "estimates.csv",
        "confidence_intervals.csv",
        "bands.csv",
        "dominance.csv",
    }
    header = (tmp_path / "estimates.csv").read_text().splitlines()[0]
    assert header == "estimator,truth,average,median,sd"
