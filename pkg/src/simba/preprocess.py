"""Station-level aggregation, chronological splits, windowing and class weights."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datagen import FaultType, KpiTable
from .errors import ConfigurationError, DataError

FEATURES = ("rsrp_dbm", "rsrq_db", "sinr_db", "throughput_bps", "distance_m", "user_count")
_MEAN_COLUMNS = FEATURES[:5]

TASKS = ("epr", "interf", "multiclass")
CLASS_NAMES = {
    "epr": ("No Failure", "EPR"),
    "interf": ("No Failure", "Interf"),
    "multiclass": ("No Failure", "EPR", "Interf"),
}


@dataclass
class StationSeries:
    cell_id: int
    features: np.ndarray  # [T, F]
    labels: np.ndarray  # [T] FaultType codes


def aggregate(records: KpiTable, labels: np.ndarray, duration: int) -> list[StationSeries]:
    """Per-cell, per-second means of the user KPIs plus the attached-user count.

    Seconds without attached users repeat the previous second's means with a
    count of 0 (leading empty seconds take the first observed means).
    """
    labels = np.asarray(labels)
    n_cells = labels.shape[1]
    t = np.asarray(records["t_s"], dtype=np.int64)
    cell = np.asarray(records["serving_cell"], dtype=np.int64)
    if len(cell) and (cell.min() < 0 or cell.max() >= n_cells):
        bad = cell[(cell < 0) | (cell >= n_cells)][0]
        raise DataError(f"record refers to unknown cell id {bad} (deployment has {n_cells} cells)")
    if len(t) and (t.min() < 0 or t.max() >= duration):
        raise DataError(f"record time outside [0, {duration})")
    if labels.shape[0] != duration:
        raise DataError(f"label stream covers {labels.shape[0]} s, expected {duration}")
    flat = t * n_cells + cell
    size = duration * n_cells
    count = np.bincount(flat, minlength=size).astype(np.float64)
    feats = np.zeros((size, len(FEATURES)))
    with np.errstate(invalid="ignore", divide="ignore"):
        for j, col in enumerate(_MEAN_COLUMNS):
            sums = np.bincount(flat, weights=np.asarray(records[col], dtype=np.float64), minlength=size)
            feats[:, j] = sums / count
    feats[:, -1] = count
    feats = feats.reshape(duration, n_cells, len(FEATURES))
    count = count.reshape(duration, n_cells)
    out = []
    for c in range(n_cells):
        f = feats[:, c, :].copy()
        empty = count[:, c] == 0
        if empty.any():
            observed = np.flatnonzero(~empty)
            if observed.size == 0:
                f[:, :-1] = 0.0
            else:
                # index of the latest observed second at or before each t
                last = np.maximum.accumulate(np.where(~empty, np.arange(duration), -1))
                last[last < 0] = observed[0]
                f[:, :-1] = f[last, :-1]
        out.append(StationSeries(c, f, labels[:, c].astype(np.int8)))
    return out


def stack_series(series: list[StationSeries]) -> tuple[np.ndarray, np.ndarray]:
    """``([T, N, F] features, [T, N] labels)`` with nodes in cell-id order."""
    series = sorted(series, key=lambda s: s.cell_id)
    return np.stack([s.features for s in series], axis=1), np.stack([s.labels for s in series], axis=1)


@dataclass(frozen=True)
class SplitSpec:
    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]

    def ranges(self) -> dict[str, tuple[int, int]]:
        return {"train": self.train, "val": self.val, "test": self.test}


def split(T: int | list[StationSeries]) -> SplitSpec:
    """Contiguous 50/25/25 partition of ``[0, T)``; accepts T or the station series."""
    if not isinstance(T, (int, np.integer)):
        T = len(T[0].labels)
    if T < 20:
        raise DataError(f"need at least 20 time steps to split, got {T}")
    a, b = int(math.floor(0.5 * T)), int(math.floor(0.75 * T))
    return SplitSpec((0, a), (a, b), (b, T))


@dataclass
class WindowedSet:
    """Samples ``inputs[s] = X[t-W+1 .. t]`` with targets taken at ``t + 1``."""

    inputs: np.ndarray  # [S, N, W, F]
    labels: np.ndarray  # [S, N] FaultType codes at t + 1
    t: np.ndarray  # [S] last input step

    def __len__(self) -> int:
        return len(self.labels)

    def targets(self, task: str) -> np.ndarray:
        return task_targets(self.labels, task)

    def subset(self, idx) -> "WindowedSet":
        return WindowedSet(self.inputs[idx], self.labels[idx], self.t[idx])


def task_targets(labels: np.ndarray, task: str) -> np.ndarray:
    """Map FaultType codes to class indices for one task layout."""
    if task == "epr":
        return (labels == FaultType.EPR).astype(np.int64)
    if task == "interf":
        return (labels == FaultType.INTERF).astype(np.int64)
    if task == "multiclass":
        return labels.astype(np.int64)
    raise ConfigurationError(f"task must be one of {TASKS}, got {task!r}")


def window_range(X: np.ndarray, y: np.ndarray, start: int, stop: int, W: int) -> WindowedSet:
    count = (stop - start) - W
    if count < 1:
        raise DataError(f"split range [{start}, {stop}) is too short for window {W} plus one target step")
    ts = np.arange(start + W - 1, stop - 1)
    offsets = np.arange(-W + 1, 1)
    idx = ts[:, None] + offsets[None, :]  # [S, W]
    inputs = X[idx].transpose(0, 2, 1, 3)  # [S, W, N, F] -> [S, N, W, F]
    return WindowedSet(np.ascontiguousarray(inputs), y[ts + 1].copy(), ts)


def window(X: np.ndarray, y: np.ndarray, spec: SplitSpec, W: int = 5) -> dict[str, WindowedSet]:
    """Window every split separately so no sample straddles a boundary."""
    if W < 1:
        raise ConfigurationError(f"window must be >= 1, got {W}")
    return {name: window_range(X, y, a, b, W) for name, (a, b) in spec.ranges().items()}


@dataclass(frozen=True)
class ClassWeights:
    weights: np.ndarray
    raw: np.ndarray
    counts: np.ndarray


def class_weights(targets: np.ndarray, num_classes: int) -> ClassWeights:
    """Inverse-frequency weights ``n / (C n_c)``, rescaled to unit mean."""
    counts = np.bincount(np.asarray(targets).ravel(), minlength=num_classes)[:num_classes]
    if np.any(counts == 0):
        absent = [int(c) for c in np.flatnonzero(counts == 0)]
        raise ConfigurationError(
            f"class(es) {absent} absent from the training split; increase the fault budget or merge classes"
        )
    raw = counts.sum() / (num_classes * counts.astype(np.float64))
    return ClassWeights(raw / raw.mean(), raw, counts)


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / self.std
        z[..., self.std <= STD_FLOOR] = 0.0
        return z

    def to_dict(self) -> dict:
        return {"features": list(FEATURES[: len(self.mean)]), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


STD_FLOOR = 1e-8


def fit_stats(inputs: np.ndarray) -> FeatureStats:
    if len(inputs) == 0:
        raise DataError("cannot standardize with an empty training set")
    flat = inputs.reshape(-1, inputs.shape[-1])
    return FeatureStats(flat.mean(axis=0), np.maximum(flat.std(axis=0), STD_FLOOR))


def normalize_features(sets: dict[str, WindowedSet]) -> tuple[dict[str, WindowedSet], FeatureStats]:
    """Z-score every split with statistics of the training split only."""
    stats = fit_stats(sets["train"].inputs)
    out = {name: WindowedSet(stats.apply(s.inputs), s.labels, s.t) for name, s in sets.items()}
    return out, stats


# -- binary dataset file ----------------------------------------------------

DATASET_MAGIC = b"SIMBA1"


def save_windows(ws: WindowedSet, path) -> None:
    """``SIMBA1`` | u32 N, W, F, count | float64 inputs | u8 labels (little-endian)."""
    s, n, w, f = ws.inputs.shape if len(ws) else (0, *ws.inputs.shape[1:])
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<4I", n, w, f, s))
        fh.write(np.ascontiguousarray(ws.inputs, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ws.labels, dtype=np.uint8).tobytes())


def load_windows(path) -> WindowedSet:
    data = Path(path).read_bytes()
    if not data.startswith(DATASET_MAGIC):
        raise DataError(f"{path}: not a windowed dataset (bad magic)")
    off = len(DATASET_MAGIC)
    n, w, f, s = struct.unpack_from("<4I", data, off)
    off += 16
    n_in = s * n * w * f
    expected = off + 8 * n_in + s * n
    if len(data) != expected:
        raise DataError(f"{path}: size {len(data)} does not match header (expected {expected})")
    inputs = np.frombuffer(data, dtype="<f8", count=n_in, offset=off).reshape(s, n, w, f).copy()
    off += 8 * n_in
    labels = np.frombuffer(data, dtype=np.uint8, count=s * n, offset=off).reshape(s, n).astype(np.int8)
    return WindowedSet(inputs, labels, np.full(s, -1, dtype=np.int64))


def prepare(records: KpiTable, labels: np.ndarray, W: int = 5) -> tuple[dict[str, WindowedSet], FeatureStats]:
    """Aggregate, split, window and standardize in one go."""
    T = labels.shape[0]
    X, y = stack_series(aggregate(records, labels, T))
    return normalize_features(window(X, y, split(T), W))
