import csv
import io

import numpy as np
import pytest

from omdcache.baselines import LFUCache, LRUCache
from omdcache.core import Catalog, InvalidInputError
from omdcache.harness import (ConstantPolicy, ExperimentConfig, csv_text, ftl_breaker, load_trace,
                              parse_config, partial_change_sets, report_slots, run_adversary,
                              run_experiment)
from omdcache.metrics import curves, nac
from omdcache.policies import FTLPolicy
from omdcache.rounding import CoupledRounding, IndependentRounding
from omdcache.traces import GeneratorSpec, generate

def test_parse_config():
    cfg = parse_config("""
        # comment
        trace = fixed-popularity
        policy = omd-ne
        k = 5
        shuffle = yes
        eta = 0.1
        rounding = none
        trace.B = 300
        trace.alpha = 0.5
    """)
    assert cfg.policy == "omd-ne" and cfg.k == 5 and cfg.shuffle is True and cfg.eta == 0.1
    assert cfg.rounding is None
    assert cfg.trace_overrides == {"B": 300, "alpha": 0.5}
    for bad in ("k", "bogus = 1", "k = many", "tau = 0", "schedule = weird"):
        with pytest.raises(InvalidInputError):
            parse_config(bad)


def test_csv_schema_ranges_and_reproducibility(tmp_path):
    cfg = ExperimentConfig(trace="batched-fixed-popularity", policy="omd-ne", k=10,
                           trace_overrides={"B": 60, "R": 50}, seed=3, output=str(tmp_path / "a.csv"))
    rec = run_experiment(cfg)
    text = (tmp_path / "a.csv").read_text()
    again = csv_text([run_experiment(ExperimentConfig(**{**cfg.__dict__, "output": None}))])
    assert text == again
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["slot", "policy", "metric", "value"]
    assert {r[2] for r in rows[1:]} == {"nac", "nmac", "tar", "cuc"}
    c = curves(rec)
    assert np.all((c["nac"] >= 0) & (c["nac"] <= 1))
    assert np.all((c["nmac"] >= 0) & (c["nmac"] <= 1))
    assert np.all(np.abs(c["tar"]) <= rec.batch_size)
    assert np.all(c["cuc"] >= 0)


def test_report_slots():
    assert report_slots(250).tolist()[:3] == [2, 4, 6] and report_slots(250)[-1] == 250
    assert report_slots(7, 3).tolist() == [3, 6, 7]


@pytest.mark.parametrize("policy", ["ogd", "omd-ne", "omd-ne-delta", "omd-q1.5", "lru", "lfu",
                                    "w-lfu", "ftpl", "ftl", "best-static", "best-dynamic"])
def test_every_policy_runs(policy):
    cfg = ExperimentConfig(trace="fixed-popularity", policy=policy, k=5,
                           trace_overrides={"B": 300, "N": 30}, delta=1e-3)
    rec = run_experiment(cfg)
    assert rec.n_slots == 300 and 0 <= nac(rec, 300) <= 1


def test_best_static_policy_has_zero_tar():
    cfg = ExperimentConfig(trace="fixed-popularity", policy="best-static", k=5, trace_overrides={"B": 400, "N": 30})
    c = curves(run_experiment(cfg))
    np.testing.assert_allclose(c["tar"], 0.0, atol=1e-12)


def test_config_errors():
    tr = generate(GeneratorSpec(N=20, B=10))
    with pytest.raises(InvalidInputError):
        run_experiment(ExperimentConfig(k=3), trace=tr, catalog=Catalog.uniform(21))
    with pytest.raises(InvalidInputError):
        run_experiment(ExperimentConfig(k=20), trace=tr)
    with pytest.raises(InvalidInputError):
        run_experiment(ExperimentConfig(k=3, policy="lru", rounding="coupled"), trace=tr)
    with pytest.raises(InvalidInputError):
        run_experiment(ExperimentConfig(k=3, policy="nope"), trace=tr)
    with pytest.raises(InvalidInputError):
        load_trace(ExperimentConfig(trace="/no/such/file"))


def test_partial_reset_protocol():
    spec = GeneratorSpec(kind="PartialPopularityChange", alpha=0.8, N=60, R=20, B=40, period=10, seed=0)
    tr = generate(spec)
    sets = partial_change_sets(tr)
    assert sorted(sets) == [10, 20, 30]
    assert sets[10].tolist() == [0, 1, 2, 57, 58, 59]
    rec = run_experiment(ExperimentConfig(policy="ogd", k=6), trace=tr)
    assert rec.n_slots == 40 and np.all(rec.update >= 0)
    off = run_experiment(ExperimentConfig(policy="ogd", k=6, reset=False), trace=tr)
    assert off.update.sum() == 0.0
    glob = generate(GeneratorSpec(kind="GlobalPopularityChange", N=20, B=10, period=5))
    assert partial_change_sets(glob) == {}


def test_rounded_run_transfers_service_cost():
    tr = generate(GeneratorSpec(kind="BatchedZipf", N=30, R=10, B=80, seed=1))
    frac = run_experiment(ExperimentConfig(policy="ogd", k=4), trace=tr)
    rounded = run_experiment(ExperimentConfig(policy="ogd", k=4, rounding="coupled", seed=2), trace=tr)
    np.testing.assert_allclose(rounded.extra["expected_service"], frac.service, atol=1e-9)
    assert rounded.policy == "ogd+coupled"
    opt = run_experiment(ExperimentConfig(policy="ogd", k=4, rounding="optimal", seed=2), trace=tr)
    assert np.all(opt.extra["expected_update"] <= rounded.extra["expected_update"] + 1e-9)


def test_ftl_breaker_regret():
    T = 1000
    res = run_adversary("ftl-breaker", FTLPolicy(Catalog.uniform(2), 1), Catalog.uniform(2), 1, T)
    assert res.regret >= T - 2
    assert [b.indices[0] for b in ftl_breaker(4)] == [0, 1, 0, 1]


@pytest.mark.parametrize("make", [LRUCache, LFUCache, FTLPolicy], ids=["lru", "lfu", "ftl"])
def test_deterministic_breaker(make):
    n, k, T = 10, 2, 2000
    cat = Catalog.uniform(n)
    res = run_adversary("deterministic-breaker", make(cat, k), cat, k, T)
    assert res.regret >= 0.95 * k * (1 - k / n) * T


def test_rounding_breaker():
    cat = Catalog.uniform(2)
    T = 2000
    ind = run_adversary("rounding-breaker", ConstantPolicy([0.5, 0.5]), cat, 1, T, IndependentRounding(1, seed=0))
    cpl = run_adversary("rounding-breaker", ConstantPolicy([0.5, 0.5]), cat, 1, T, CoupledRounding(1, seed=0))
    assert ind.extended_regret >= 0.1 * T
    assert cpl.update.sum() == 0.0
    with pytest.raises(InvalidInputError):
        run_adversary("nope", ConstantPolicy([0.5, 0.5]), cat, 1, 5)


def test_shuffle_flag_changes_only_order():
    tr = generate(GeneratorSpec(kind="BatchedZipf", N=30, R=40, B=30, seed=5))
    a = run_experiment(ExperimentConfig(policy="lru", k=5, shuffle=True, seed=1), trace=tr)
    b = run_experiment(ExperimentConfig(policy="lru", k=5, shuffle=True, seed=1), trace=tr)
    np.testing.assert_array_equal(a.service, b.service)
    assert a.service.sum() <= tr.batch_size * tr.n_batches


@pytest.mark.slow
def test_ogd_reaches_best_static_nac():
    cfg = ExperimentConfig(trace="fixed-popularity", policy="ogd", k=10)
    tr = load_trace(cfg)
    ogd = run_experiment(cfg, trace=tr)
    best = run_experiment(ExperimentConfig(trace="fixed-popularity", policy="best-static", k=10), trace=tr)
    T = ogd.n_slots
    assert abs(nac(ogd, T) - nac(best, T)) <= 0.05
