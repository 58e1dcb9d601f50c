import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simba.datagen import EpisodeConfig, FaultType, KpiTable, RECORD_COLUMNS, simulate_episode
from simba.errors import ConfigurationError, DataError
from simba.preprocess import (
    FeatureStats,
    WindowedSet,
    aggregate,
    class_weights,
    load_windows,
    normalize_features,
    prepare,
    save_windows,
    split,
    stack_series,
    task_targets,
    window,
)


def _table(rows):
    cols = {c: np.array([r.get(c, 0.0) for r in rows], dtype=np.float64) for c in RECORD_COLUMNS}
    for c in ("t_s", "user_id", "serving_cell"):
        cols[c] = cols[c].astype(np.int64)
    return KpiTable(cols)


def test_aggregate_two_point_mean():
    rows = [dict(t_s=0, user_id=0, serving_cell=0, sinr_db=10.0), dict(t_s=0, user_id=1, serving_cell=0, sinr_db=20.0)]
    s = aggregate(_table(rows), np.zeros((1, 2), dtype=np.int8), 1)
    assert s[0].features[0, 2] == 15.0 and s[0].features[0, 5] == 2
    assert s[1].features[0, 5] == 0


def test_aggregate_forward_fill():
    rows = [
        dict(t_s=0, user_id=0, serving_cell=0, rsrp_dbm=-80.0, throughput_bps=5.0),
        dict(t_s=2, user_id=0, serving_cell=0, rsrp_dbm=-70.0, throughput_bps=9.0),
        dict(t_s=0, user_id=1, serving_cell=1, rsrp_dbm=-60.0),
        dict(t_s=1, user_id=1, serving_cell=1, rsrp_dbm=-61.0),
        dict(t_s=2, user_id=1, serving_cell=1, rsrp_dbm=-62.0),
    ]
    labels = np.array([[0, 0], [1, 0], [0, 2]], dtype=np.int8)
    s = aggregate(_table(rows), labels, 3)
    f = s[0].features
    assert np.array_equal(f[1, :5], f[0, :5]) and f[1, 5] == 0
    assert f[2, 0] == -70.0 and f[2, 5] == 1
    assert np.array_equal(s[0].labels, [0, 1, 0]) and np.array_equal(s[1].labels, [0, 0, 2])


def test_aggregate_leading_empty_uses_first_observation():
    rows = [dict(t_s=2, user_id=0, serving_cell=0, rsrp_dbm=-75.0)]
    f = aggregate(_table(rows), np.zeros((3, 1), dtype=np.int8), 3)[0].features
    assert np.all(f[:, 0] == -75.0) and np.array_equal(f[:, 5], [0, 0, 1])


def test_aggregate_errors():
    with pytest.raises(DataError):
        aggregate(_table([dict(t_s=0, user_id=0, serving_cell=9)]), np.zeros((1, 7)), 1)
    with pytest.raises(DataError):
        aggregate(_table([dict(t_s=5, user_id=0, serving_cell=0)]), np.zeros((1, 7)), 1)


def test_aggregate_permutation_invariant(rng):
    ep = simulate_episode(EpisodeConfig(duration_s=120, users_per_cell=4, seed=5))
    perm = rng.permutation(len(ep.records))
    shuffled = KpiTable({c: v[perm] for c, v in ep.records.columns.items()})
    a, _ = stack_series(aggregate(ep.records, ep.labels, 120))
    b, _ = stack_series(aggregate(shuffled, ep.labels, 120))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-9)


def test_full_episode_gives_seven_series():
    ep = simulate_episode(EpisodeConfig())
    series = aggregate(ep.records, ep.labels, 3600)
    assert len(series) == 7 and all(s.features.shape == (3600, 6) for s in series)
    assert sum(s.features[:, 5].sum() for s in series) == 7 * 30 * 3600


def test_split_examples():
    assert split(3600).ranges() == {"train": (0, 1800), "val": (1800, 2700), "test": (2700, 3600)}
    assert split(20).ranges() == {"train": (0, 10), "val": (10, 15), "test": (15, 20)}
    with pytest.raises(DataError):
        split(19)


@given(st.integers(20, 10_000))
def test_split_partitions(T):
    r = split(T).ranges()
    assert r["train"][0] == 0 and r["train"][1] == r["val"][0] and r["val"][1] == r["test"][0] and r["test"][1] == T
    assert r["train"][1] == T // 2 and r["val"][1] == (3 * T) // 4


def _series(T, N=7, F=6):
    X = np.arange(T * N * F, dtype=np.float64).reshape(T, N, F)
    y = (np.arange(T * N).reshape(T, N) % 3).astype(np.int8)
    return X, y


def test_window_examples():
    X, y = _series(3600)
    sets = window(X, y, split(3600))
    assert (len(sets["train"]), len(sets["val"]), len(sets["test"])) == (1795, 895, 895)
    first = sets["train"]
    assert np.array_equal(first.inputs[0], X[0:5].transpose(1, 0, 2))
    assert np.array_equal(first.labels[0], y[5]) and first.t[0] == 4


@pytest.mark.parametrize("T,W", [(20, 1), (20, 4), (100, 5), (100, 9), (3600, 5), (3600, 8)])
def test_windows_stay_inside_their_split(T, W):
    X, y = _series(T)
    # encode the time index in the features so every window can be traced back
    X[..., 0] = np.arange(T)[:, None]
    for name, (a, b) in split(T).ranges().items():
        ws = window(X, y, split(T), W)[name]
        times = ws.inputs[..., 0]
        assert len(ws) == (b - a) - W
        assert times.min() >= a and times.max() < b
        assert np.all(ws.t + 1 < b) and np.all(ws.t - W + 1 >= a)
        assert np.array_equal(ws.labels, y[ws.t + 1])


def test_window_errors():
    X, y = _series(20)
    with pytest.raises(DataError):
        window(X, y, split(20), 5)
    with pytest.raises(ConfigurationError):
        window(X, y, split(20), 0)


def test_task_targets():
    labels = np.array([0, 1, 2, 1], dtype=np.int8)
    assert np.array_equal(task_targets(labels, "epr"), [0, 1, 0, 1])
    assert np.array_equal(task_targets(labels, "interf"), [0, 0, 1, 0])
    assert np.array_equal(task_targets(labels, "multiclass"), [0, 1, 2, 1])
    with pytest.raises(ConfigurationError):
        task_targets(labels, "both")
    assert int(FaultType.EPR) == 1 and int(FaultType.INTERF) == 2


def test_class_weight_examples():
    assert np.array_equal(class_weights(np.array([0, 1] * 5), 2).weights, [1.0, 1.0])
    cw = class_weights(np.array([0] * 98 + [1] * 2), 2)
    assert np.allclose(cw.raw, [100 / 196, 25.0]) and abs(cw.raw[0] - 0.5102) < 5e-5
    assert abs(cw.raw[1] / cw.raw[0] - 49.0) < 1e-12
    assert abs(cw.weights.mean() - 1.0) < 1e-12
    with pytest.raises(ConfigurationError, match="fault budget"):
        class_weights(np.zeros(10, dtype=int), 2)


@given(st.lists(st.integers(1, 500), min_size=2, max_size=3))
def test_class_weight_properties(counts):
    t = np.repeat(np.arange(len(counts)), counts)
    cw = class_weights(t, len(counts))
    assert np.all(cw.weights > 0)
    assert np.allclose(class_weights(np.repeat(np.arange(len(counts)), [3 * c for c in counts]), len(counts)).weights, cw.weights)
    assert cw.weights[np.argmax(counts)] == cw.weights.min()
    assert np.allclose(cw.weights * np.array(counts), (cw.weights * np.array(counts))[0])


def test_normalize_examples(rng):
    X = rng.normal(3.0, 5.0, size=(300, 7, 6))
    X[..., 4] = 2.5  # constant feature
    X[200:] += 10.0  # later splits drift away from train
    y = np.zeros((300, 7), dtype=np.int8)
    sets, stats = normalize_features(window(X, y, split(300)))
    flat = sets["train"].inputs.reshape(-1, 6)
    assert np.allclose(flat[:, [0, 1, 2, 3, 5]].mean(axis=0), 0, atol=1e-9)
    assert np.allclose(flat[:, [0, 1, 2, 3, 5]].std(axis=0), 1, atol=1e-6)
    assert np.all(sets["test"].inputs[..., 4] == 0)
    raw_test = window(X, y, split(300))["test"].inputs
    own = (raw_test - raw_test.reshape(-1, 6).mean(0)) / np.maximum(raw_test.reshape(-1, 6).std(0), 1e-8)
    assert np.allclose(sets["test"].inputs, stats.apply(raw_test))
    assert not np.allclose(sets["test"].inputs[..., 0], own[..., 0])
    assert FeatureStats.from_dict(stats.to_dict()).mean.tolist() == stats.mean.tolist()


def test_dataset_file_round_trip(tmp_path, rng):
    ws = WindowedSet(rng.normal(size=(4, 7, 5, 6)), rng.integers(0, 3, size=(4, 7)).astype(np.int8), np.arange(4))
    p = tmp_path / "d.bin"
    save_windows(ws, p)
    raw = p.read_bytes()
    assert raw[:6] == b"SIMBA1" and np.frombuffer(raw[6:22], "<u4").tolist() == [7, 5, 6, 4]
    assert len(raw) == 22 + 4 * 7 * 5 * 6 * 8 + 4 * 7
    back = load_windows(p)
    assert np.array_equal(back.inputs, ws.inputs) and np.array_equal(back.labels, ws.labels)
    p.write_bytes(raw[:-1])
    with pytest.raises(DataError):
        load_windows(p)
    p.write_bytes(b"XXXXXX" + raw[6:])
    with pytest.raises(DataError):
        load_windows(p)


def test_prepare_pipeline():
    ep = simulate_episode(EpisodeConfig(duration_s=200, users_per_cell=3, seed=2))
    sets, stats = prepare(ep.records, ep.labels, W=5)
    assert sets["train"].inputs.shape == (95, 7, 5, 6)
    assert len(stats.mean) == 6
