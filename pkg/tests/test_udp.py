import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fedref.metrics import NEVER_EXCEEDED
from fedref.udp import DriftScenario, in_regime, sample_noise, tail_prob, threshold, verify_ordering


def scen(**kw):
    base = dict(delta=10.0, eta=1.0, lam=1.0, anchor_gap=1.0, c_opt=3.0, prox_gap=6.0,
                noise="gaussian", noise_param=3.0, samples=100_000, seed=0)
    base.update(kw)
    return DriftScenario(**base)


def test_threshold_examples():
    assert threshold("fedavg", scen(delta=10, eta=1)) == 10
    assert threshold("fedref", scen(lam=1, anchor_gap=1)) == 9
    assert threshold("fedprox", scen(prox_gap=6)) == 4
    assert threshold("fedopt", scen(delta=20, eta=2, c_opt=3)) == 7


def test_tail_examples():
    assert tail_prob(0.0, scen()) == 1.0
    assert tail_prob(-3.0, scen()) == 1.0
    assert tail_prob(math.log(2), scen(noise="exponential", noise_param=1.0)) == pytest.approx(0.5)
    g = scen(noise_param=1.0)
    assert tail_prob(1.0, g) == pytest.approx(2 * stats.norm.sf(1.0), rel=1e-12)
    assert tail_prob(1.0, g) == pytest.approx(0.3173, abs=1e-4)


@settings(max_examples=200)
@given(st.floats(-5, 30), st.floats(-5, 30), st.sampled_from(["gaussian", "exponential"]),
       st.floats(0.1, 5))
def test_tail_is_monotone(t1, t2, noise, param):
    s = scen(noise=noise, noise_param=param)
    lo, hi = sorted((t1, t2))
    assert tail_prob(lo, s) >= tail_prob(hi, s)


def test_worked_scenario():
    rep = verify_ordering(scen())
    assert rep.in_regime
    assert [rep.thresholds[m] for m in ("fedavg", "fedref", "fedopt", "fedprox")] == [10, 9, 7, 4]
    p = rep.closed_form
    assert p["fedavg"] < p["fedref"] < p["fedopt"] < p["fedprox"]
    assert rep.closed_form_ordering and rep.empirical_ordering and rep.mc_agrees


def test_zero_lambda_collapses_to_fedavg():
    rep = verify_ordering(scen(lam=0.0))
    assert rep.thresholds["fedref"] == rep.thresholds["fedavg"]
    assert rep.closed_form["fedref"] == rep.closed_form["fedavg"]


def test_out_of_regime_is_reported_not_raised():
    rep = verify_ordering(scen(c_opt=8.0, prox_gap=6.0, samples=1000))
    assert not rep.in_regime and "c_opt" in rep.reason
    rep = verify_ordering(scen(delta=0.5, samples=1000))
    assert not rep.in_regime


def test_log_sentinel_for_vanishing_tail():
    rep = verify_ordering(scen(delta=1e4, noise_param=1.0, samples=10))
    assert rep.log_closed_form["fedavg"] is NEVER_EXCEEDED
    assert rep.to_dict()["log_closed_form"]["fedavg"] == "never_exceeded"


@pytest.mark.parametrize("noise, param", [("gaussian", 3.0), ("exponential", 0.4)])
def test_monte_carlo_within_three_sigma(noise, param):
    s = scen(noise=noise, noise_param=param, samples=100_000, seed=7)
    eps = sample_noise(s)
    for m in ("fedavg", "fedref", "fedopt", "fedprox"):
        t = threshold(m, s)
        p = tail_prob(t, s)
        assert abs(np.mean(eps > t) - p) <= 3 * math.sqrt(p * (1 - p) / s.samples)


def test_monte_carlo_error_shrinks_with_samples():
    errs = {}
    for n in (1_000, 100_000):
        e = []
        for seed in range(20):
            rep = verify_ordering(scen(samples=n, seed=seed))
            e.append(abs(rep.monte_carlo["fedopt"] - rep.closed_form["fedopt"]) / rep.closed_form["fedopt"])
        errs[n] = float(np.mean(e))
    assert errs[100_000] < errs[1_000]


def test_sampling_is_deterministic_and_batched():
    s = scen(samples=120_001, seed=3)
    a, b = sample_noise(s), sample_noise(s)
    assert a.shape == (120_001,)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample_noise(scen(samples=120_001, seed=4)))


def test_regime_checks():
    assert in_regime(scen())[0]
    assert not in_regime(scen(lam=5.0))[0]
    assert not in_regime(scen(prox_gap=2.0))[0]
