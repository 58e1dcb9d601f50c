"""Train Simba on the binary EPR task of the desk episode and report test metrics.

    python scripts/desk_epr.py [--data-seed 27] [--seed 0] [--arch SIMBA]
"""

import argparse
import time

from simba.cli import DESK_EPISODE_SEED, format_metrics
from simba.datagen import EpisodeConfig, simulate_episode
from simba.evaluation import evaluate
from simba.models import ModelConfig, build_model
from simba.preprocess import prepare
from simba.training import DESK, train


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data-seed", type=int, default=DESK_EPISODE_SEED)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--arch", default="SIMBA")
    p.add_argument("--task", default="epr", choices=("epr", "interf", "multiclass"))
    args = p.parse_args()

    t0 = time.perf_counter()
    episode = simulate_episode(EpisodeConfig(seed=args.data_seed))
    W = 8 if args.arch.upper() == "MTGNN" else 5
    sets, _ = prepare(episode.records, episode.labels, W)
    C = 3 if args.task == "multiclass" else 2
    model = build_model(ModelConfig(architecture=args.arch, window=W, num_classes=C, seed=args.seed))
    report = train(model, sets, DESK.with_(task=args.task, seed=args.seed))
    for split in ("val", "test"):
        cm, m = evaluate(model, sets[split], args.task)
        print(f"-- {split} (confusion rows = truth): {cm.counts.tolist()}")
        print(format_metrics(m), end="")
    print(f"best epoch {report.best_epoch} of {report.epochs_run}, {time.perf_counter() - t0:.0f} s total")


if __name__ == "__main__":
    main()
