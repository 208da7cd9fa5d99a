import numpy as np
import pytest

from selftest_bnn.campaign import (CampaignConfig, RunResult, evaluate_model, run_campaign, summarize)
from selftest_bnn.detector import FingerprintBoundary, calibrate_boundary, classify
from selftest_bnn.errors import CampaignRunError, EmptyDataset, IncompleteCampaign, InvalidConfig
from selftest_bnn.faults import FaultSpec
from selftest_bnn.nn import fingerprint
from selftest_bnn.rng import derive
from selftest_bnn.training import Dataset


@pytest.fixture(scope="module")
def setup(trained_mlp):
    m, held, _ = trained_mlp
    b = calibrate_boundary(fingerprint(m.forward(held.fingerprint_split.x)))
    return m, b, held.task_split


def test_config_validation():
    spec = [FaultSpec("bit_flip", "weights", 0.0)]
    with pytest.raises(InvalidConfig):
        CampaignConfig(spec, fault_rates=[0.2, 0.1])
    with pytest.raises(InvalidConfig):
        CampaignConfig(spec, runs_per_rate=0)
    with pytest.raises(InvalidConfig):
        CampaignConfig(spec, fault_rates=[1.5])
    with pytest.raises(InvalidConfig):
        CampaignConfig([])
    assert CampaignConfig(spec).fault_rates == [0.0, 0.05, 0.1, 0.15, 0.2, 0.25]


def test_evaluate_open_boundary_has_zero_coverage(setup):
    m, _, data = setup
    res = evaluate_model(m, data, FingerprintBoundary(-np.inf, np.inf))
    assert res.coverage == 0.0
    assert res.accuracy > 0.9


def test_evaluate_point_boundary(setup):
    m, _, data = setup
    f = fingerprint(m.forward(data.x))
    v = float(f[0])
    res = evaluate_model(m, data, FingerprintBoundary(v, v))
    assert res.coverage == np.mean(f != v)


def test_coverage_recount(setup):
    m, b, data = setup
    res = evaluate_model(m, data, b)
    recount = sum(classify(float(fv), b).status.value == "Faulty" for fv in fingerprint(m.forward(data.x)))
    assert res.coverage == recount / len(data)


def test_evaluate_empty(setup):
    m, b, data = setup
    with pytest.raises(EmptyDataset):
        evaluate_model(m, data.subset(np.arange(0)), b)


def test_rate_zero_reproduces_golden(setup):
    m, b, data = setup
    golden = evaluate_model(m, data, b)
    cfg = CampaignConfig([FaultSpec("bit_flip", "weights", 0.0)], fault_rates=[0.0], runs_per_rate=5)
    runs = run_campaign(m, b, cfg, data)
    assert len(runs) == 5
    assert all(r.accuracy == golden.accuracy and r.coverage == golden.coverage for r in runs)
    assert not any(r.nonfunctional for r in runs)


def test_deterministic_and_seeded_by_index(setup):
    m, b, data = setup
    cfg = CampaignConfig([FaultSpec("bit_flip", "weights", 0.0)], fault_rates=[0.05, 0.2], runs_per_rate=3,
                         base_seed=17)
    a = run_campaign(m, b, cfg, data)
    assert a == run_campaign(m, b, cfg, data)
    assert [r.seed_used for r in a] == [derive(17, i, j) for i in range(2) for j in range(3)]


def test_stuck_at_all_weights_gives_chance(setup):
    # every unit of the first layer then computes sum(x); zero-sum inputs leave nothing to discriminate on
    m, b, data = setup
    per_class = np.bincount(data.y).min()
    idx = np.concatenate([np.flatnonzero(data.y == c)[:per_class] for c in range(3)])
    x = data.x[idx] - data.x[idx].mean(axis=1, keepdims=True)
    balanced = Dataset(x, data.y[idx])
    cfg = CampaignConfig([FaultSpec("stuck_at", "weights", 1.0, target_state=1)], fault_rates=[1.0],
                         runs_per_rate=1)
    (r,) = run_campaign(m, b, cfg, balanced, baseline_accuracy=1.0)
    n, p = len(balanced), 1 / 3
    assert abs(r.accuracy - p) <= 3 * np.sqrt(p * (1 - p) / n)
    assert r.nonfunctional


def test_activation_specs_and_mixed_runs(setup):
    m, b, data = setup
    cfg = CampaignConfig([FaultSpec("bit_flip", "weights", 0.0), FaultSpec("bit_flip", "activations", 0.0)],
                         fault_rates=[0.0, 0.3], runs_per_rate=2)
    runs = run_campaign(m, b, cfg, data)
    assert runs[2].accuracy < runs[0].accuracy


def test_run_failure_is_wrapped(setup):
    m, b, data = setup
    cfg = CampaignConfig([FaultSpec("bit_flip", "weights", 0.0, layers=["missing"])], fault_rates=[0.1],
                         runs_per_rate=1)
    with pytest.raises(CampaignRunError) as err:
        run_campaign(m, b, cfg, data)
    assert (err.value.rate_index, err.value.run_index) == (0, 0)


def _rr(rate, run, acc, cov):
    return RunResult(rate, run, acc, cov, False, 0)


def test_summary_single_run_and_constant():
    s = summarize([_rr(0.1, 0, 0.5, 0.4)], 0.9, 0.1)
    assert s.rates[0].cov_median == 0.4 and s.rates[0].n_nonfunctional == 1
    s = summarize([_rr(0.1, i, 0.9, 1.0) for i in range(4)], 0.9, 0.1)
    r = s.rates[0]
    assert r.cov_median == r.cov_q1 == r.cov_q3 == 1.0
    assert r.tpr_nonfunctional is None


def test_summary_matches_sorted_recomputation():
    rng = np.random.default_rng(0)
    cov, acc = rng.uniform(size=11), rng.uniform(size=11)
    s = summarize([_rr(0.2, i, acc[i], cov[i]) for i in range(11)], 0.8, 0.05).rates[0]
    c = sorted(cov)
    assert s.cov_median == c[5]
    assert s.cov_q1 == pytest.approx(c[2] + 0.5 * (c[3] - c[2]))
    assert s.cov_q3 == pytest.approx(c[7] + 0.5 * (c[8] - c[7]))
    assert (s.cov_min, s.cov_max) == (c[0], c[-1])
    assert s.acc_mean == pytest.approx(sum(acc) / 11)
    assert s.acc_std == pytest.approx(np.sqrt(sum((a - sum(acc) / 11) ** 2 for a in acc) / 11))
    nf = acc < 0.8 - 0.2
    assert s.n_nonfunctional == nf.sum()


def test_summary_incomplete():
    with pytest.raises(IncompleteCampaign):
        summarize([_rr(0.1, 0, 0.5, 0.4), _rr(0.1, 2, 0.5, 0.4)], 0.9, 0.1)
    with pytest.raises(IncompleteCampaign):
        summarize([_rr(0.1, 0, 0.5, 0.4)], 0.9, 0.1, runs_per_rate=3)
