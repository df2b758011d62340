import numpy as np
import pytest

from bctcure.montecarlo import McFailure, monte_carlo_study, perturbed_start
from bctcure.simulation import BinaryScenario, ContinuousScenario, rng_stream
from bctcure.sqh import AdmissibleBox

SMALL = BinaryScenario(n1=60, n2=40)


def test_single_replication_identity():
    rep = monte_carlo_study(SMALL, 1, seed=3, report_targets=[(2, 0)])
    for row in rep.rows:
        assert row.rmse == pytest.approx(row.bias, rel=1e-12, abs=1e-15)
        assert row.mae == pytest.approx(row.bias, rel=1e-12, abs=1e-15)
    est = rep.estimates[0]
    truth = SMALL.true_theta().to_array()
    np.testing.assert_allclose([r.bias for r in rep.rows[:5]], np.abs(est - truth), rtol=1e-12)


def test_oracle_mode_gives_exact_zeros():
    rep = monte_carlo_study(SMALL, 5, init_strategy="oracle", report_targets=[(2, 0), (2, 1)])
    assert rep.completed == 5 and rep.diverged == 0
    for row in rep.rows:
        assert row.bias == 0.0 and row.rmse == 0.0 and row.mae == 0.0


def test_report_invariants():
    rep = monte_carlo_study(SMALL, 8, seed=1, report_targets=[(2, 1)])
    assert rep.completed + rep.diverged == rep.requested
    for row in rep.rows:
        assert row.rmse >= row.bias - 1e-15
        assert row.rmse >= row.mae - 1e-15
    names = [r.name for r in rep.rows]
    assert names == ["beta0", "beta1", "gamma1", "gamma2", "alpha", "p0[x=1]", "p0[x=0]", "S_p(y=2|x=1)"]


def test_determinism_and_parallel_equivalence():
    a = monte_carlo_study(SMALL, 6, seed=21)
    b = monte_carlo_study(SMALL, 6, seed=21)
    c = monte_carlo_study(SMALL, 6, seed=21, workers=2)
    np.testing.assert_array_equal(a.estimates, b.estimates)
    np.testing.assert_array_equal(a.estimates, c.estimates)
    assert [r.rmse for r in a.rows] == [r.rmse for r in c.rows]
    d = monte_carlo_study(SMALL, 6, seed=22)
    assert not np.array_equal(a.estimates, d.estimates)


@pytest.mark.parametrize("strategy", ["km", "truth"])
def test_other_start_strategies_run(strategy):
    rep = monte_carlo_study(SMALL, 3, init_strategy=strategy, seed=5)
    assert rep.completed == 3
    assert rep.settings["init"] == strategy


def test_continuous_scenario_runs():
    rep = monte_carlo_study(ContinuousScenario(n=100), 3, seed=2, report_targets=[(2, 5)])
    assert rep.completed + rep.diverged == 3
    assert [r.name for r in rep.rows][-1] == "S_p(y=2|x=5)"


def test_perturbed_start_stays_in_box_and_band():
    truth = SMALL.true_theta()
    box = AdmissibleBox.for_bct(2)
    for i in range(50):
        start = perturbed_start(truth, rng_stream(0, i, 1), 0.2).to_array()
        assert box.contains(start)
        ratio = start / truth.to_array()
        assert np.all(ratio >= 0.8 - 1e-12) and np.all(ratio <= 1.2 + 1e-12)


def test_all_failures_raise(monkeypatch):
    import bctcure.montecarlo as mc
    from bctcure.sqh import SqhStallError

    def stall(*args, **kwargs):
        raise SqhStallError("forced")

    monkeypatch.setattr(mc, "fit_model", stall)
    with pytest.raises(McFailure):
        monte_carlo_study(SMALL, 2, init_strategy="truth")


def test_diverged_replications_are_counted(monkeypatch):
    import bctcure.montecarlo as mc
    from bctcure.sqh import SqhStallError

    real = mc.fit_model
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] % 2:
            raise SqhStallError("forced")
        return real(*args, **kwargs)

    monkeypatch.setattr(mc, "fit_model", flaky)
    rep = monte_carlo_study(SMALL, 4, init_strategy="truth")
    assert rep.diverged == 2 and rep.completed == 2
    assert rep.estimates.shape == (2, 5)


def test_bad_arguments():
    with pytest.raises(ValueError):
        monte_carlo_study(SMALL, 0)
    with pytest.raises(ValueError):
        monte_carlo_study(SMALL, 1, init_strategy="guess")


def test_serialization():
    rep = monte_carlo_study(SMALL, 2, seed=4, report_targets=[(2, 0)])
    text = rep.to_text().splitlines()
    assert text[0] == rep.label
    assert "RMSE" in text[1]
    assert any(line.startswith("replications: requested=2") for line in text)
    rows = rep.to_csv().splitlines()
    assert rows[0] == "label,quantity,metric,value"
    assert len(rows) == 1 + 5 * len(rep.rows) + 6
    cells = [r.split(",") for r in rows[1:]]
    rmse_alpha = [c for c in cells if c[-3] == "alpha" and c[-2] == "rmse"]
    assert float(rmse_alpha[0][-1]) == rep.row("alpha").rmse
