"""Command-line pipeline: generate -> preprocess -> train -> eval, plus compare.

Exit codes: 0 success, 2 configuration error, 3 missing input, 4 integrity
error (corrupted file or checkpoint/config mismatch).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .config import build, read_config, split_keys
from .datagen import EpisodeConfig, read_labels_csv, read_records_csv, simulate_episode, write_episode
from .errors import ConfigurationError, DataError, IntegrityError
from .evaluation import SCENARIOS, ConfusionMatrix, compare, evaluate
from .models import ModelConfig, build_model, load_checkpoint
from .preprocess import CLASS_NAMES, TASKS, aggregate, load_windows, normalize_features, save_windows, split, stack_series, window
from .training import DESK, TrainConfig, train

log = logging.getLogger("simba")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_INTEGRITY = 0, 2, 3, 4

# desk episode whose train, val and test splits all contain both fault types
DESK_EPISODE_SEED = 27

ARCH_NAMES = {"simba": "SIMBA", "gnn_rca": "GNN_RCA", "mtgnn": "MTGNN"}
ARCH_WINDOW = {"SIMBA": 5, "GNN_RCA": 5, "MTGNN": 8}

# model keys a train config may set; seed, window and class count come from the run
MODEL_KEYS = tuple(f.name for f in fields(ModelConfig) if f.name not in ("seed", "window", "num_classes", "num_nodes", "num_features"))
TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig) if f.name not in ("seed", "task"))


class MissingInput(Exception):
    def __init__(self, path):
        super().__init__(str(path))
        self.path = Path(path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: list[int]
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, dict] = field(default_factory=dict)
    version: str = __version__

    def add_output(self, name: str, path: Path, root: Path) -> None:
        self.outputs[name] = {"path": str(Path(path).relative_to(root)), "sha256": sha256_file(path)}

    def write(self, out_dir) -> Path:
        p = Path(out_dir) / "manifest.json"
        p.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return p


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"{path}: unreadable manifest: {exc}") from None


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingInput(path)
    return path


def _config_values(path) -> dict[str, str]:
    if path is None:
        return {}
    return read_config(_require(path))


def _train_configs(values: dict[str, str], arch: str | None, task: str, seed: int):
    model_vals, train_vals = split_keys(values, MODEL_KEYS, TRAIN_KEYS)
    if arch is not None:
        model_vals["architecture"] = arch
    train_cfg = build(TrainConfig, train_vals, base=DESK, task=task, seed=seed)
    return model_vals, train_cfg


# -- commands ----------------------------------------------------------------

def cmd_generate(args) -> int:
    values = _config_values(args.config)
    if args.seed is not None:
        values["seed"] = str(args.seed)
    if args.users is not None:
        values["users_per_cell"] = str(args.users)
    cfg = build(EpisodeConfig, values)
    episode = simulate_episode(cfg)
    out = Path(args.out)
    paths = write_episode(episode, out)
    manifest = RunManifest("generate", asdict(cfg), [cfg.seed])
    if args.config:
        manifest.inputs["config"] = str(args.config)
    for name, p in paths.items():
        manifest.add_output(name, p, out)
    manifest.write(out)
    frac = float((episode.labels > 0).mean())
    print(f"wrote {len(episode.records)} records, {len(episode.faults)} fault events, fault fraction {frac:.4f} -> {out}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    src = Path(args.input)
    rec_path, lab_path = _require(src / "records.csv"), _require(src / "labels.csv")
    labels = read_labels_csv(lab_path)
    records = read_records_csv(rec_path)
    T = labels.shape[0]
    X, y = stack_series(aggregate(records, labels, T))
    spec = split(T)
    sets, stats = normalize_features(window(X, y, spec, args.window))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("preprocess", {"window": args.window, "splits": {k: list(v) for k, v in spec.ranges().items()}}, [])
    manifest.inputs = {"records": str(rec_path), "labels": str(lab_path)}
    for name, ws in sets.items():
        p = out / f"{name}.bin"
        save_windows(ws, p)
        manifest.add_output(name, p, out)
    sp = out / "stats.json"
    sp.write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n")
    manifest.add_output("stats", sp, out)
    manifest.write(out)
    print(", ".join(f"{k}: {len(v)} samples" for k, v in sets.items()) + f" -> {out}")
    return EXIT_OK


def _load_sets(data_dir, names=("train", "val", "test")):
    data_dir = Path(data_dir)
    return {n: load_windows(_require(data_dir / f"{n}.bin")) for n in names}


def cmd_train(args) -> int:
    arch = ARCH_NAMES.get(args.arch.lower()) if args.arch else None
    if args.arch and arch is None:
        raise ConfigurationError(f"unknown architecture {args.arch!r}; choose from {sorted(ARCH_NAMES)}")
    values = _config_values(args.config)
    model_vals, train_cfg = _train_configs(values, arch, args.task, args.seed)
    sets = _load_sets(args.data, ("train", "val"))
    _, n, w, f = sets["train"].inputs.shape
    model_cfg = build(ModelConfig, model_vals, num_nodes=n, window=w, num_features=f,
                      num_classes=train_cfg.num_classes, seed=args.seed)
    model = build_model(model_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.ckpt"
    report = train(model, sets, train_cfg, checkpoint_path=ckpt)
    report.checkpoint_path = ckpt.name
    paths = report.write(out)
    manifest = RunManifest("train", {"model": asdict(model_cfg), "train": asdict(train_cfg),
                                     "model_config_hash": model_cfg.config_hash()}, [args.seed])
    manifest.inputs = {"data": str(args.data)}
    manifest.add_output("checkpoint", ckpt, out)
    for name, p in paths.items():
        manifest.add_output(name, p, out)
    manifest.write(out)
    print(f"best epoch {report.best_epoch} val loss {report.best_val_loss:.5f} "
          f"({report.epochs_run} epochs, {report.wall_time_s:.1f} s) -> {ckpt}")
    return EXIT_OK


def _expected_config(ckpt: Path) -> ModelConfig | None:
    mp = ckpt.parent / "manifest.json"
    if not mp.exists():
        return None
    m = read_manifest(mp)
    cfg = m.get("config", {}).get("model")
    if cfg is None:
        return None
    try:
        expected = ModelConfig.from_dict(cfg)
    except (ConfigurationError, TypeError) as exc:
        raise IntegrityError(f"{mp}: bad model config: {exc}") from None
    if m["config"].get("model_config_hash") != expected.config_hash():
        raise IntegrityError(f"{mp}: model config does not match its recorded hash")
    out = m.get("outputs", {}).get("checkpoint")
    if out and (ckpt.parent / out["path"]).resolve() == ckpt.resolve() and sha256_file(ckpt) != out["sha256"]:
        raise IntegrityError(f"{ckpt}: file hash differs from the training manifest")
    return expected


def cmd_eval(args) -> int:
    ckpt = _require(args.checkpoint)
    model = load_checkpoint(ckpt, _expected_config(ckpt))
    split_name = args.split
    ws = _load_sets(args.data, (split_name,))[split_name]
    task = args.task
    want = 3 if task == "multiclass" else 2
    if model.config.num_classes != want:
        raise ConfigurationError(f"checkpoint has {model.config.num_classes} classes; task {task!r} needs {want}")
    cm, rep = evaluate(model, ws, task, architecture=model.config.architecture, seed=model.config.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mj, mt, cc = out / "metrics.json", out / "metrics.txt", out / "confusion.csv"
    mj.write_text(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    mt.write_text(format_metrics(rep))
    cc.write_text(ConfusionMatrix(cm.counts).to_csv(CLASS_NAMES[task]))
    manifest = RunManifest("eval", {"task": task, "split": split_name, "model_config_hash": model.config.config_hash()},
                           [model.config.seed])
    manifest.inputs = {"checkpoint": str(ckpt), "data": str(args.data)}
    for name, p in (("metrics", mj), ("metrics_text", mt), ("confusion", cc)):
        manifest.add_output(name, p, out)
    manifest.write(out)
    print(format_metrics(rep), end="")
    return EXIT_OK


def format_metrics(rep) -> str:
    lines = [f"{'class':<12} {'precision':>9} {'recall':>9} {'f1':>9} {'support':>8}"]
    for name, m in rep.classes.items():
        flag = "  (" + ", ".join(m.flags) + ")" if m.flags else ""
        lines.append(f"{name:<12} {m.precision:>9.4f} {m.recall:>9.4f} {m.f1:>9.4f} {m.support:>8d}{flag}")
    lines.append(f"{'macro':<12} {rep.macro_precision:>9.4f} {rep.macro_recall:>9.4f} {rep.macro_f1:>9.4f}")
    lines.append(f"{'micro':<12} {rep.micro_precision:>9.4f} {rep.micro_recall:>9.4f} {rep.micro_f1:>9.4f}")
    return "\n".join(lines) + "\n"


def cmd_compare(args) -> int:
    archs = []
    for a in args.arch.split(","):
        if a.strip().lower() not in ARCH_NAMES:
            raise ConfigurationError(f"unknown architecture {a!r}; choose from {sorted(ARCH_NAMES)}")
        archs.append(ARCH_NAMES[a.strip().lower()])
    scenarios = [s.strip() for s in args.scenario.split(",")]
    for s in scenarios:
        if s not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {s!r}; choose from {sorted(SCENARIOS)}")
    values = _config_values(args.config)
    model_vals, train_cfg = _train_configs(values, None, "multiclass", 0)
    seeds = list(range(args.seed_offset, args.seed_offset + args.seeds))
    datasets = {}
    for sc in scenarios:
        episode = simulate_episode(EpisodeConfig(users_per_cell=SCENARIOS[sc], seed=args.data_seed))
        T = episode.labels.shape[0]
        X, y = stack_series(aggregate(episode.records, episode.labels, T))
        for W in sorted({ARCH_WINDOW[a] for a in archs}):
            datasets[(sc, W)] = normalize_features(window(X, y, split(T), W))[0]
    if "architecture" in model_vals:
        raise ConfigurationError("config key 'architecture' is not allowed for compare; use --arch")
    parsed = build(ModelConfig, model_vals)
    overrides = {k: getattr(parsed, k) for k in model_vals}
    report = compare(archs, seeds, scenarios, datasets, train_cfg, model_overrides=overrides)
    out = Path(args.out)
    paths = report.write(out, confusion_csv=args.confusion_csv)
    manifest = RunManifest("compare", {"architectures": archs, "scenarios": scenarios, "data_seed": args.data_seed,
                                       "train": asdict(train_cfg), "model_overrides": overrides}, seeds)
    if args.config:
        manifest.inputs["config"] = str(args.config)
    for name, p in paths.items():
        manifest.add_output(name, p, out)
    manifest.write(out)
    print(report.to_text(), end="")
    return EXIT_OK if not report.failed else 1


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simba", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate one labeled KPI episode")
    g.add_argument("--config", help="flat key = value file with episode keys")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--users", type=int, help="users per cell (30 normal, 90 peak)")
    g.set_defaults(fn=cmd_generate)

    pp = sub.add_parser("preprocess", help="aggregate, split, window and standardize an episode")
    pp.add_argument("--in", dest="input", required=True, help="directory holding records.csv and labels.csv")
    pp.add_argument("--out", required=True)
    pp.add_argument("--window", type=int, default=5)
    pp.set_defaults(fn=cmd_preprocess)

    t = sub.add_parser("train", help="train one model on a preprocessed dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="model and training keys")
    t.add_argument("--arch", help="simba, gnn_rca or mtgnn (overrides the config)")
    t.add_argument("--task", choices=TASKS, default="epr")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--task", choices=TASKS, default="epr")
    e.add_argument("--split", choices=("train", "val", "test"), default="test")
    e.set_defaults(fn=cmd_eval)

    c = sub.add_parser("compare", help="multi-seed architecture comparison")
    c.add_argument("--arch", default="simba,gnn_rca,mtgnn")
    c.add_argument("--seeds", type=int, default=3)
    c.add_argument("--seed-offset", type=int, default=0)
    c.add_argument("--scenario", default="normal", help="normal, peak or normal,peak")
    c.add_argument("--data-seed", type=int, default=DESK_EPISODE_SEED)
    c.add_argument("--config", help="model and training keys")
    c.add_argument("--out", required=True)
    c.add_argument("--confusion-csv", action="store_true")
    c.set_defaults(fn=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingInput, FileNotFoundError) as exc:
        path = exc.path if isinstance(exc, MissingInput) else (exc.filename or exc)
        print(f"missing input: {path}", file=sys.stderr)
        return EXIT_MISSING
    except (IntegrityError, DataError) as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY


if __name__ == "__main__":
    sys.exit(main())
