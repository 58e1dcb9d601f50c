import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simba.errors import ConfigurationError, DataError
from simba.evaluation import (
    ConfusionMatrix,
    RunResult,
    _tables,
    class_metrics,
    compare,
    confusion,
    f1_from,
    max_workers,
    metrics,
)
from simba.preprocess import WindowedSet
from simba.training import TrainConfig


def test_confusion_examples():
    assert np.array_equal(confusion([0, 1, 2, 1], [0, 1, 2, 1], 3).counts, np.diag([1, 2, 1]))
    cm = confusion([1, 0, 1], [1, 1, 0], 2)
    assert (cm.tp(1), cm.fn(1), cm.fp(1), cm.counts[0, 0]) == (1, 1, 1, 0)
    assert np.array_equal(confusion([], [], 3).counts, np.zeros((3, 3)))
    assert confusion([], [], 3).total == 0


def test_confusion_from_probabilities_breaks_ties_low():
    probs = np.array([[0.5, 0.5], [0.2, 0.8], [0.6, 0.4]])
    assert np.array_equal(confusion(probs, [1, 1, 0], 2).counts, [[1, 0], [1, 1]])
    p3 = np.array([[[0.3, 0.35, 0.35]]])
    assert confusion(p3, np.array([[1]]), 3).tp(1) == 1


def test_confusion_errors():
    with pytest.raises(DataError):
        confusion([0, 1], [0], 2)
    with pytest.raises(DataError):
        confusion([0, 2], [0, 1], 2)
    with pytest.raises(DataError):
        confusion(np.ones((2, 3)) / 3, [0, 1], 2)


def test_f1_examples():
    assert round(f1_from(0.99, 0.95), 2) == 0.97
    assert abs(f1_from(0.99, 0.95) - 0.9696) < 1e-4
    assert round(f1_from(0.78, 0.91), 2) == 0.84
    assert abs(f1_from(0.78, 0.91) - 0.8400) < 1e-4


def test_degenerate_metrics_flagged():
    m = class_metrics(tp=0, fp=4, fn=0)
    assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0
    assert "recall_undefined" in m.flags
    empty = class_metrics(0, 0, 0)
    assert empty.flags == ["precision_undefined", "recall_undefined"] and empty.f1 == 0.0
    no_hits = class_metrics(0, 3, 2)
    assert no_hits.precision == 0.0 and no_hits.flags == []


@given(st.integers(1, 1000), st.integers(0, 1000), st.integers(0, 1000))
def test_harmonic_bounds(tp, fp, fn):
    m = class_metrics(tp, fp, fn)
    assert min(m.precision, m.recall) - 1e-12 <= m.f1 <= max(m.precision, m.recall) + 1e-12
    assert 0 <= m.f1 <= 1


@given(st.lists(st.integers(0, 2), min_size=1, max_size=200))
def test_self_confusion_is_perfect(labels):
    rep = metrics(confusion(labels, labels, 3), ["No Failure", "EPR", "Interf"])
    for c, name in enumerate(["No Failure", "EPR", "Interf"]):
        cm = rep.classes[name]
        if c in labels:
            assert cm.precision == cm.recall == cm.f1 == 1.0
    assert confusion(labels, labels, 3).total == len(labels)


def test_metrics_averages():
    cm = ConfusionMatrix(np.array([[90, 5, 5], [2, 8, 0], [1, 1, 8]]))
    rep = metrics(cm, ["No Failure", "EPR", "Interf"], architecture="SIMBA", seed=3)
    e, i = rep.classes["EPR"], rep.classes["Interf"]
    assert abs(rep.macro_f1 - (e.f1 + i.f1) / 2) < 1e-15
    assert abs(rep.micro_precision - 16 / 27) < 1e-15 and abs(rep.micro_recall - 16 / 20) < 1e-15
    assert rep.classes["No Failure"].support == 100 and rep.seed == 3
    assert json.loads(json.dumps(rep.to_dict()))["architecture"] == "SIMBA"
    assert cm.to_csv(["No Failure", "EPR", "Interf"]).splitlines()[1] == "No Failure,90,5,5"


def _run(arch, task, seed, cm, names):
    counts = np.asarray(cm)
    return RunResult(arch, task, "normal", seed, report=metrics(ConfusionMatrix(counts), names), confusion=counts.tolist())


def test_table_vi_rows_and_pooled_healthy_row():
    runs = []
    for seed in range(3):
        runs.append(_run("SIMBA", "epr", seed, [[95, 1], [2, 8]], ["No Failure", "EPR"]))
        runs.append(_run("SIMBA", "interf", seed, [[90, 6], [1, 9]], ["No Failure", "Interf"]))
        runs.append(_run("SIMBA", "multiclass", seed, [[90, 3, 3], [1, 8, 1], [1, 1, 8]], ["No Failure", "EPR", "Interf"]))
    tv, tvi = _tables(runs, ["SIMBA"], ["normal"])
    rows = tvi["SIMBA"]["normal"]
    assert list(rows) == ["EPR", "Interf", "No Failure"]
    pooled = class_metrics(185, 3, 7)
    assert abs(rows["No Failure"]["f1"]["median"] - pooled.f1) < 1e-15
    assert rows["EPR"]["recall"]["median"] == 0.8 and rows["EPR"]["f1"]["iqr"] == 0.0
    assert tv["SIMBA"]["normal"]["f1"]["n"] == 3


def _synthetic_sets(seed, n=60, W=5, positive=True):
    r = np.random.default_rng(seed)
    sets = {}
    for name in ("train", "val", "test"):
        x = r.normal(size=(n, 7, W, 6))
        y = np.where(x[:, :, -1, 0] > 1.2, 1, 0) + np.where(x[:, :, -1, 1] > 1.2, 1, 0) * 2
        y = np.minimum(y, 2).astype(np.int8)
        if not positive:
            y[y == 2] = 0
        sets[name] = WindowedSet(x, y, np.arange(n))
    return sets


def test_compare_self_consistency_and_failures():
    cfg = TrainConfig(batch_size=30, learning_rate=3e-3, max_epochs=2, patience=2)
    data = {("normal", 5): _synthetic_sets(0)}
    a = compare(["GNN_RCA"], [0, 1, 2], ["normal"], data, cfg, tasks=("multiclass",), workers=1)
    b = compare(["GNN_RCA"], [0, 1, 2], ["normal"], data, cfg, tasks=("multiclass",), workers=1)
    assert a.to_json() == b.to_json() and not a.failed
    # no interference samples anywhere: those runs fail and are surfaced
    bad = {("normal", 5): _synthetic_sets(0, positive=False)}
    rep = compare(["GNN_RCA"], [0, 1, 2], ["normal"], bad, cfg, tasks=("epr", "interf"), workers=1)
    assert len(rep.failed) == 3 and all(r.task == "interf" for r in rep.failed)
    assert rep.table_vi["GNN_RCA"]["normal"]["Interf"]["f1"]["n"] == 0
    assert rep.table_vi["GNN_RCA"]["normal"]["EPR"]["f1"]["n"] == 3
    assert "FAILED RUNS" in rep.to_text()
    assert len(json.loads(rep.to_json())["failed"]) == 3


def test_compare_writes_outputs(tmp_path):
    cfg = TrainConfig(batch_size=30, learning_rate=3e-3, max_epochs=1, patience=1)
    data = {("normal", 5): _synthetic_sets(1)}
    rep = compare(["SIMBA", "GNN_RCA"], [0, 1, 2], ["normal"], data, cfg, workers=2)
    paths = rep.write(tmp_path, confusion_csv=True)
    text = paths["text"].read_text()
    assert "Overall" in text and "Per failure" in text and "No Failure" in text
    assert set(json.loads(paths["json"].read_text())["table_v"]) == {"SIMBA", "GNN_RCA"}
    assert sum(1 for k in paths if k.startswith("confusion_")) == 2 * 3 * 3


def test_compare_validation(monkeypatch):
    cfg = TrainConfig()
    data = {("normal", 5): _synthetic_sets(0)}
    with pytest.raises(ConfigurationError):
        compare(["SIMBA"], [0, 1], ["normal"], data, cfg)
    with pytest.raises(ConfigurationError):
        compare(["SIMBA"], [0, 1, 2], ["rush"], data, cfg)
    with pytest.raises(DataError):
        compare(["MTGNN"], [0, 1, 2], ["normal"], data, cfg)
    monkeypatch.setenv("SIMBA_THREADS", "3")
    assert max_workers() == 3
    monkeypatch.setenv("SIMBA_THREADS", "many")
    with pytest.raises(ConfigurationError):
        max_workers()
