import json
import math

import numpy as np
import pytest
from scipy import stats

from ntmtest.bitstream import BitSequence
from ntmtest.errors import ContractError, SequenceTooShortError
from ntmtest.experiments import (
    ExperimentConfig,
    binomial_pmf,
    dumps,
    pearson_gof,
    run_battery,
    run_joint_histogram,
    run_rejection_experiment,
    run_rejection_histogram,
    sequence_p_values,
)
from ntmtest.generators import generate, seed_for_index
from ntmtest.matching import run_test
from ntmtest.templates import default_battery
from ntmtest.whitening import transform_for

PAIR = ("001010101", "010101011")


def test_config_validation_and_round_trip():
    cfg = ExperimentConfig(K=10, n=2000, templates=list(PAIR))
    assert cfg.M == 250
    assert ExperimentConfig.from_mapping(cfg.to_dict()) == cfg
    json.dumps(cfg.to_dict())
    for bad in (dict(K=0), dict(generator="rc4"), dict(alpha=1.5), dict(n=50), dict(G=1), dict(workers=0)):
        with pytest.raises(ContractError):
            ExperimentConfig(**bad)
    with pytest.raises(ContractError):
        ExperimentConfig.from_mapping({"K": 3, "bogus": 1})


def test_sequence_p_values_match_single_runs():
    cfg = ExperimentConfig(K=7, n=20000, base_seed=3, batch=3)
    pv = sequence_p_values(cfg, PAIR)
    assert pv.shape == (7, 2)
    for i in (0, 4, 6):
        seq = generate(seed_for_index(3, i), 20000)
        with pytest.warns(Warning):
            assert pv[i, 1] == pytest.approx(run_test(seq, PAIR[1], 8).p_value, rel=1e-12)


def test_batch_and_worker_count_do_not_change_results():
    base = ExperimentConfig(K=130, n=20000, base_seed=11, batch=50)
    a = sequence_p_values(base, PAIR)
    b = sequence_p_values(ExperimentConfig(K=130, n=20000, base_seed=11, batch=50, workers=2), PAIR)
    c = sequence_p_values(ExperimentConfig(K=130, n=20000, base_seed=11, batch=7), PAIR)
    assert np.array_equal(a, b)
    assert np.array_equal(a, c)


def test_joint_histogram_report():
    cfg = ExperimentConfig(K=300, n=20000, base_seed=1, G=5)
    rep = run_joint_histogram(cfg, *PAIR)
    assert rep.counts.sum() == 300
    assert rep.counts.shape == (5, 5)
    assert abs(rep.expected.sum() - 1) < 1e-9
    assert rep.rho == pytest.approx(323 / 495)
    d = json.loads(dumps(rep.to_dict()))
    assert d["provenance"]["base_seed"] == 1
    assert d["upper_corner"]["independent"] == 0.01
    again = run_joint_histogram(cfg, *PAIR, pvals=rep.p_values)
    assert np.array_equal(again.counts, rep.counts)


def test_pearson_gof_pools_small_cells():
    probs = np.array([0.001, 0.001, 0.498, 0.5])
    obs = np.array([0, 1, 49, 50])
    g = pearson_gof(obs, probs)
    assert g.bins == 2
    assert g.df == 1
    exp = np.array([0.5 * 100, 0.5 * 100])
    assert g.statistic == pytest.approx(np.sum((np.array([50, 50]) - exp) ** 2 / exp))


def test_pearson_gof_matches_scipy_when_no_pooling():
    obs = np.array([18, 22, 30, 30])
    probs = np.full(4, 0.25)
    g = pearson_gof(obs, probs)
    ref = stats.chisquare(obs)
    assert g.statistic == pytest.approx(ref.statistic)
    assert g.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_binomial_pmf():
    pmf = binomial_pmf(145, 0.01)
    assert abs(pmf.sum() - 1) < 1e-12
    assert np.allclose(pmf, stats.binom.pmf(np.arange(146), 145, 0.01))


def test_rejection_reports_single_pass_matches_separate():
    cfg = ExperimentConfig(K=60, n=20000, base_seed=2, templates=[t.pattern for t in default_battery()[:20]])
    plain, orth = run_rejection_experiment(cfg)
    assert plain.histogram.sum() == orth.histogram.sum() == 60
    assert plain.items == orth.items == 20
    assert np.array_equal(run_rejection_histogram(cfg, False).histogram, plain.histogram)
    assert np.array_equal(run_rejection_histogram(cfg, True).histogram, orth.histogram)
    d = orth.to_dict()
    assert d["provenance"]["transform_sha256"] == transform_for(cfg.templates).digest()
    assert plain.to_dict()["provenance"]["transform_sha256"] is None
    assert sum(d["expected_counts"]) == pytest.approx(60)


def test_battery_all_zeros():
    seq = BitSequence(np.zeros(125000, np.uint8), 10 ** 6)
    rep = run_battery(seq)
    assert len(rep["templates"]) == 148
    i = rep["templates"].index("100000000")
    assert rep["template_p_values"][i] < 1e-300
    assert rep["template_rejected"][i]
    orth = run_battery(seq, orthogonalize=True)
    assert len(orth["item_p_values"]) == 145
    assert orth["rejections"] >= 1


def test_battery_reports_are_reproducible():
    seq = generate(seed_for_index(5, 0), 100_003)
    a = dumps(run_battery(seq, orthogonalize=True))
    b = dumps(run_battery(seq, orthogonalize=True))
    assert a == b
    assert json.loads(a)["discarded_bits"] == 3


def test_battery_errors():
    with pytest.raises(SequenceTooShortError):
        run_battery(BitSequence(np.zeros(8, np.uint8), 60))
    tr = transform_for(default_battery()[:3])
    with pytest.raises(ContractError):
        run_battery(generate(seed_for_index(1, 0), 5000), templates=default_battery()[1:4], orthogonalize=True,
                    transform=tr)


def test_small_battery_rejection_rate_is_alpha():
    cfg = ExperimentConfig(K=400, n=20000, base_seed=9, templates=[t.pattern for t in default_battery()[:30]])
    plain, orth = run_rejection_experiment(cfg)
    # the expected rejection count is 0.3 per sequence
    se = math.sqrt(30 * 0.01 * 0.99 / 400)
    assert abs(orth.mean_rejections - 0.3) < 5 * se
