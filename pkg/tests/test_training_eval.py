import json
from dataclasses import replace

import numpy as np
import pytest

from routenet import queueing, topologies
from routenet.datasets import GenConfig, generate_dataset
from routenet.evaluation import (Predictions, Truth, baseline_predictions, cdf_csv, evaluate, export_cdf, mre,
                                 pearson, relative_errors, report, reports_json, table, truth_of)
from routenet.training import TrainConfig, TrainingAborted, load_checkpoint, train


@pytest.fixture(scope="module")
def data():
    cfg = GenConfig(ti_range=(8000.0, 20000.0), schemes_per_topo=3, tms_per_scheme=4, duration=400.0, seed=2)
    samples, _ = generate_dataset([topologies.toy5()], cfg)
    return samples[:9], samples[9:]


SMALL = dict(hidden_dim=8, iterations=2, readout_hidden=8, batch_size=4, val_every=20, patience=None)


def test_paper_preset_matches_published_values():
    cfg = TrainConfig.paper()
    assert (cfg.steps, cfg.batch_size, cfg.learning_rate, cfg.weight_decay) == (260000, 16, 1e-3, 0.1)
    assert (cfg.dropout_rate, cfg.hidden_dim, cfg.iterations, cfg.patience) == (0.5, 32, 8, None)


def test_training_reduces_validation_loss_and_is_seeded(data):
    tr, va = data
    cfg = TrainConfig(head="normal-delay", steps=60, seed=1, **SMALL)
    a = train(cfg, tr, va)
    assert a.best_val < a.history[0]["val_loss"] or a.best_step > 0
    assert a.steps_run == 60 and len(a.history) == 3
    b = train(cfg, tr, va)
    assert a.checkpoint_text(cfg) == b.checkpoint_text(cfg)


def test_early_stopping_keeps_best(data):
    tr, va = data
    cfg = TrainConfig(head="binomial-drops", steps=400, seed=0, learning_rate=0.05,
                      **{**SMALL, "patience": 1, "val_every": 10})
    res = train(cfg, tr, va)
    assert res.steps_run < 400
    losses = [h["val_loss"] for h in res.history]
    assert res.best_val <= min(losses) + 1e-9


def test_checkpoint_file_round_trip(data, tmp_path):
    tr, va = data
    cfg = TrainConfig(head="gamma-delay", steps=5, seed=0, **SMALL)
    res = train(cfg, tr, va)
    path = tmp_path / "m.ckpt"
    path.write_text(res.checkpoint_text(cfg, "abc"))
    params, meta = load_checkpoint(path)
    assert meta["dataset"] == "abc" and meta["train"]["head"] == "gamma-delay"
    assert params.state_dict().keys() == res.params.state_dict().keys()


def test_non_finite_loss_aborts_with_dump(data, tmp_path):
    tr, _ = data
    bad = replace(tr[0], targets={**tr[0].targets, "mean": np.full_like(tr[0].targets["mean"], np.nan)})
    broken = [bad] + list(tr[1:])
    dump = tmp_path / "nan.json"
    with pytest.raises(TrainingAborted):
        train(TrainConfig(steps=50, seed=0, **SMALL), broken, [], nan_dump=dump)
    info = json.loads(dump.read_text())
    assert 0 in info["batch"]


def test_empty_training_set():
    with pytest.raises(ValueError):
        train(TrainConfig(steps=1), [])


def test_relative_errors_are_signed_and_skip_zero_truth():
    rel, excluded = relative_errors(np.array([1.1, 0.9, 5.0]), np.array([1.0, 1.0, 0.0]), np.ones(3, bool))
    np.testing.assert_allclose(rel, [0.1, -0.1])
    assert excluded == 1
    assert mre(rel) == pytest.approx(0.1)
    assert np.isnan(mre(np.zeros(0)))


def test_pearson_and_degenerate_flag():
    x = np.arange(10.0)
    assert pearson(2 * x + 1, x) == (pytest.approx(1.0), False)
    assert pearson(np.ones(10), x) == (0.0, True)


def test_cdf_matches_empirical_count():
    e = np.random.default_rng(0).normal(size=500).round(2)
    cdf = export_cdf(e)
    for v, c in cdf[::37]:
        assert c == pytest.approx(np.mean(e <= v))
    assert cdf[-1][1] == 1.0
    assert all(a[0] < b[0] for a, b in zip(cdf, cdf[1:]))
    assert cdf_csv([0.5, -0.5]).splitlines() == ["relative_error,cdf", "-0.5,0.5", "0.5,1.0"]
    with pytest.raises(ValueError):
        export_cdf([])


def test_report_counts_and_drop_eligibility():
    truth = Truth(n=np.array([10.0, 0.0, 5.0]), delay=np.array([1.0, 0.0, 2.0]), jitter=np.array([0.1, 0, 0.2]),
                  loss=np.array([0.0, 1.0, 0.5]), dropped=np.array([0.0, 3.0, 5.0]))
    pred = Predictions(np.array([1.5, 9.0, 2.0]), np.array([0.1, 9.0, 0.1]), np.array([0.01, 0.9, 0.25]))
    r = report(pred, truth, "X")
    assert r.mre_delay == pytest.approx(0.25)
    assert r.mre_jitter == pytest.approx(0.25)
    assert r.mre_drops == pytest.approx((0.1 + 0.5) / 2)
    assert r.counts["delay"] == 2 and r.counts["drops"] == 2


def test_baseline_predictions_align_with_truth(data):
    _, te = data
    pred = baseline_predictions(te)
    truth = truth_of(te)
    assert pred.delay.shape == truth.delay.shape
    first = queueing.predict(te[0].topology, te[0].routing, te[0].tm)
    np.testing.assert_allclose(pred.delay[:len(first)], [v[0] for v in first.values()])


def test_evaluate_and_table(data):
    tr, te = data
    d = train(TrainConfig(head="normal-delay", steps=3, seed=0, **SMALL), tr).params
    l = train(TrainConfig(head="binomial-drops", steps=3, seed=0, **SMALL), tr).params
    reports = evaluate(d, l, te, with_baseline=True)
    assert set(reports) == {"RN", "QT"}
    text = table(reports)
    lines = text.splitlines()
    assert "Delay" in lines[0] and "Jitter" in lines[0] and "Drops" in lines[0]
    assert lines[1].count("RN") == 3 and lines[1].count("QT") == 3
    assert json.loads(reports_json(reports, {"v": 1}))["meta"] == {"v": 1}
