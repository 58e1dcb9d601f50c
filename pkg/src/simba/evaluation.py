"""Confusion matrices, precision/recall/F1 and seeded architecture comparisons."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, SimbaError
from .preprocess import CLASS_NAMES, WindowedSet

log = logging.getLogger(__name__)

SCENARIOS = {"normal": 30, "peak": 90}
FAILURE_ROWS = ("EPR", "Interf", "No Failure")


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # [C, C], rows = truth, cols = predicted

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tp(self, c: int) -> int:
        return int(self.counts[c, c])

    def fp(self, c: int) -> int:
        return int(self.counts[:, c].sum() - self.counts[c, c])

    def fn(self, c: int) -> int:
        return int(self.counts[c, :].sum() - self.counts[c, c])

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def to_csv(self, class_names=None) -> str:
        names = list(class_names or range(self.num_classes))
        lines = ["truth\\pred," + ",".join(str(n) for n in names)]
        lines += [f"{names[i]}," + ",".join(str(int(v)) for v in row) for i, row in enumerate(self.counts)]
        return "\n".join(lines) + "\n"


def confusion(preds, targets, C: int) -> ConfusionMatrix:
    """Count (truth, prediction) pairs.

    ``preds`` holds class indices, or probability vectors along the last axis
    (argmax decides; ties go to the lower class index).
    """
    preds = np.asarray(preds)
    targets = np.asarray(targets)
    if preds.ndim == targets.ndim + 1:
        if preds.shape[-1] != C:
            raise DataError(f"probability vectors have {preds.shape[-1]} entries, expected {C}")
        preds = preds.argmax(axis=-1)
    preds, targets = preds.ravel(), targets.ravel()
    if preds.shape != targets.shape:
        raise DataError(f"{preds.size} predictions vs {targets.size} targets")
    if preds.size and (min(preds.min(), targets.min()) < 0 or max(preds.max(), targets.max()) >= C):
        raise DataError(f"class indices must lie in [0, {C})")
    counts = np.bincount(targets.astype(np.int64) * C + preds.astype(np.int64), minlength=C * C)
    return ConfusionMatrix(counts.reshape(C, C))


def f1_from(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both inputs are 0."""
    s = precision + recall
    return 0.0 if s == 0 else 2.0 * precision * recall / s


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    flags: list[str] = field(default_factory=list)


def _ratio(num: int, den: int, flag: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def class_metrics(tp: int, fp: int, fn: int) -> ClassMetrics:
    flags: list[str] = []
    p = _ratio(tp, tp + fp, "precision_undefined", flags)
    r = _ratio(tp, tp + fn, "recall_undefined", flags)
    return ClassMetrics(p, r, f1_from(p, r), tp + fn, flags)


@dataclass
class MetricsReport:
    """Per-class metrics; macro/micro averages run over the failure classes only."""

    classes: dict[str, ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    architecture: str = ""
    task: str = ""
    scenario: str = ""
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def metrics(cm: ConfusionMatrix, class_names=None, **meta) -> MetricsReport:
    C = cm.num_classes
    names = list(class_names or [str(c) for c in range(C)])
    per = {names[c]: class_metrics(cm.tp(c), cm.fp(c), cm.fn(c)) for c in range(C)}
    failure = range(1, C) if C > 1 else range(C)
    fm = [per[names[c]] for c in failure]
    tp = sum(cm.tp(c) for c in failure)
    fp = sum(cm.fp(c) for c in failure)
    fn = sum(cm.fn(c) for c in failure)
    micro = class_metrics(tp, fp, fn)
    return MetricsReport(
        classes=per,
        macro_precision=float(np.mean([m.precision for m in fm])),
        macro_recall=float(np.mean([m.recall for m in fm])),
        macro_f1=float(np.mean([m.f1 for m in fm])),
        micro_precision=micro.precision,
        micro_recall=micro.recall,
        micro_f1=micro.f1,
        **meta,
    )


def evaluate(model, ws: WindowedSet, task: str, **meta) -> tuple[ConfusionMatrix, MetricsReport]:
    C = model.config.num_classes
    cm = confusion(model.predict_proba(ws.inputs), ws.targets(task), C)
    return cm, metrics(cm, CLASS_NAMES[task], task=task, **meta)


# -- multi-seed comparison --------------------------------------------------


@dataclass
class RunResult:
    architecture: str
    task: str
    scenario: str
    seed: int
    status: str = "ok"
    error: str = ""
    report: MetricsReport | None = None
    confusion: list[list[int]] | None = None
    best_epoch: int = -1


def _run_one(job) -> RunResult:
    from .models import ModelConfig, build_model
    from .training import train

    arch, task, scenario, seed, sets, model_overrides, train_cfg = job
    res = RunResult(arch, task, scenario, seed)
    try:
        W = sets["train"].inputs.shape[2]
        C = 3 if task == "multiclass" else 2
        cfg = ModelConfig(architecture=arch, window=W, num_classes=C, seed=seed, **model_overrides)
        model = build_model(cfg)
        rep = train(model, sets, train_cfg.with_(task=task, seed=seed))
        cm, m = evaluate(model, sets["test"], task, architecture=arch, scenario=scenario, seed=seed)
        res.report, res.confusion, res.best_epoch = m, cm.counts.tolist(), rep.best_epoch
    except (SimbaError, FloatingPointError, ValueError) as exc:
        res.status, res.error = "failed", f"{type(exc).__name__}: {exc}"
    return res


def _stat(values) -> dict:
    if not values:
        return {"median": float("nan"), "iqr": float("nan"), "n": 0}
    v = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"median": float(med), "iqr": float(q3 - q1), "n": int(len(v))}


@dataclass
class ComparisonReport:
    runs: list[RunResult]
    table_v: dict  # arch -> scenario -> metric -> stat
    table_vi: dict  # arch -> scenario -> row -> metric -> stat

    @property
    def failed(self) -> list[RunResult]:
        return [r for r in self.runs if r.status != "ok"]

    def to_json(self) -> str:
        d = {
            "table_v": self.table_v,
            "table_vi": self.table_vi,
            "runs": [asdict(r) for r in self.runs],
            "failed": [f"{r.architecture}/{r.task}/{r.scenario}/seed{r.seed}: {r.error}" for r in self.failed],
        }
        return json.dumps(d, indent=2, sort_keys=True)

    def to_text(self) -> str:
        out = ["Overall (multiclass, macro over failure classes): median [IQR]"]
        out.append(f"{'architecture':<12} {'scenario':<8} {'precision':>16} {'recall':>16} {'f1':>16}")
        for arch, by_sc in self.table_v.items():
            for sc, st in by_sc.items():
                cells = [f"{st[m]['median']:.3f} [{st[m]['iqr']:.3f}]" for m in ("precision", "recall", "f1")]
                out.append(f"{arch:<12} {sc:<8} " + " ".join(f"{c:>16}" for c in cells))
        out.append("")
        out.append("Per failure (binary models): median [IQR]")
        out.append(f"{'architecture':<12} {'scenario':<8} {'row':<11} {'precision':>16} {'recall':>16} {'f1':>16}")
        for arch, by_sc in self.table_vi.items():
            for sc, rows in by_sc.items():
                for row, st in rows.items():
                    cells = [f"{st[m]['median']:.3f} [{st[m]['iqr']:.3f}]" for m in ("precision", "recall", "f1")]
                    out.append(f"{arch:<12} {sc:<8} {row:<11} " + " ".join(f"{c:>16}" for c in cells))
        if self.failed:
            out.append("")
            out.append("FAILED RUNS (excluded from medians):")
            out += [f"  {r.architecture}/{r.task}/{r.scenario}/seed{r.seed}: {r.error}" for r in self.failed]
        return "\n".join(out) + "\n"

    def write(self, out_dir, confusion_csv: bool = False) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"json": out / "comparison.json", "text": out / "comparison.txt"}
        paths["json"].write_text(self.to_json() + "\n")
        paths["text"].write_text(self.to_text())
        if confusion_csv:
            for r in self.runs:
                if r.confusion is None:
                    continue
                p = out / f"confusion_{r.architecture}_{r.task}_{r.scenario}_seed{r.seed}.csv"
                p.write_text(ConfusionMatrix(np.asarray(r.confusion)).to_csv(CLASS_NAMES[r.task]))
                paths[p.stem] = p
        return paths


def _tables(runs: list[RunResult], architectures, scenarios) -> tuple[dict, dict]:
    ok = [r for r in runs if r.status == "ok"]
    table_v: dict = {}
    table_vi: dict = {}
    for arch in architectures:
        table_v[arch], table_vi[arch] = {}, {}
        for sc in scenarios:
            multi = [r.report for r in ok if (r.architecture, r.scenario, r.task) == (arch, sc, "multiclass")]
            table_v[arch][sc] = {
                "precision": _stat([m.macro_precision for m in multi]),
                "recall": _stat([m.macro_recall for m in multi]),
                "f1": _stat([m.macro_f1 for m in multi]),
                "micro_f1": _stat([m.micro_f1 for m in multi]),
            }
            rows = {}
            for row, task, cls in (("EPR", "epr", "EPR"), ("Interf", "interf", "Interf")):
                reps = [r.report.classes[cls] for r in ok if (r.architecture, r.scenario, r.task) == (arch, sc, task)]
                rows[row] = {k: _stat([getattr(m, k) for m in reps]) for k in ("precision", "recall", "f1")}
            # the healthy row pools both binary models' confusion counts per seed
            healthy = []
            for seed in sorted({r.seed for r in ok}):
                cms = [np.asarray(r.confusion) for r in ok
                       if (r.architecture, r.scenario, r.seed) == (arch, sc, seed) and r.task in ("epr", "interf")]
                if len(cms) == 2:
                    cm = ConfusionMatrix(cms[0] + cms[1])
                    healthy.append(class_metrics(cm.tp(0), cm.fp(0), cm.fn(0)))
            rows["No Failure"] = {k: _stat([getattr(m, k) for m in healthy]) for k in ("precision", "recall", "f1")}
            table_vi[arch][sc] = rows
    return table_v, table_vi


def max_workers() -> int:
    env = os.environ.get("SIMBA_THREADS")
    if env is None:
        return 1
    try:
        n = int(env)
    except ValueError:
        raise ConfigurationError(f"SIMBA_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigurationError(f"SIMBA_THREADS must be >= 1, got {n}")
    return n


def compare(architectures, seeds, scenarios, datasets: dict, train_cfg, tasks=("multiclass", "epr", "interf"),
            model_overrides: dict | None = None, workers: int | None = None) -> ComparisonReport:
    """Train and test every (architecture, task, scenario, seed) combination.

    ``datasets[(scenario, window)]`` holds the split dict for that scenario at
    that window length, so every architecture sees identical synthetic data.
    Failed runs are kept in the report, flagged, and left out of the medians.
    """
    seeds = list(seeds)
    if len(seeds) < 3:
        raise ConfigurationError(f"comparison needs at least 3 seeds, got {len(seeds)}")
    for sc in scenarios:
        if sc not in SCENARIOS:
            raise ConfigurationError(f"scenario must be one of {tuple(SCENARIOS)}, got {sc!r}")
    overrides = dict(model_overrides or {})
    jobs = []
    for arch in architectures:
        W = 8 if arch == "MTGNN" else 5
        for sc in scenarios:
            if (sc, W) not in datasets:
                raise DataError(f"no prepared data for scenario {sc!r} at window {W}")
            for task in tasks:
                for seed in seeds:
                    jobs.append((arch, task, sc, seed, datasets[(sc, W)], overrides, train_cfg))
    workers = workers or max_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_one, jobs))
    else:
        runs = [_run_one(j) for j in jobs]
    for r in runs:
        if r.status != "ok":
            log.warning("run %s/%s/%s/seed%d failed: %s", r.architecture, r.task, r.scenario, r.seed, r.error)
    table_v, table_vi = _tables(runs, list(architectures), list(scenarios))
    return ComparisonReport(runs, table_v, table_vi)
