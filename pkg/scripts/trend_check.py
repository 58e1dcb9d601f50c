"""Multi-seed trend check on one shared synthetic episode.

Trains Simba and GNN_RCA (multiclass) plus Simba's binary EPR and Interf
models for every seed, then reports the median orderings per seed triple:

    python scripts/trend_check.py [--seeds 9] [--out runs/trend]
"""

import argparse
from pathlib import Path

import numpy as np

from simba.cli import DESK_EPISODE_SEED
from simba.datagen import EpisodeConfig, simulate_episode
from simba.evaluation import compare
from simba.preprocess import aggregate, normalize_features, split, stack_series, window
from simba.training import DESK


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=9, help="a multiple of 3")
    p.add_argument("--data-seed", type=int, default=DESK_EPISODE_SEED)
    p.add_argument("--out", default="runs/trend")
    args = p.parse_args()

    episode = simulate_episode(EpisodeConfig(seed=args.data_seed))
    T = episode.labels.shape[0]
    X, y = stack_series(aggregate(episode.records, episode.labels, T))
    data = {("normal", 5): normalize_features(window(X, y, split(T), 5))[0]}
    seeds = list(range(args.seeds))
    multi = compare(["SIMBA", "GNN_RCA"], seeds, ["normal"], data, DESK, tasks=("multiclass",))
    binary = compare(["SIMBA"], seeds, ["normal"], data, DESK, tasks=("epr", "interf"))
    out = Path(args.out)
    multi.write(out / "multiclass", confusion_csv=True)
    binary.write(out / "binary", confusion_csv=True)

    scores = {}
    for r in multi.runs + binary.runs:
        if r.status != "ok":
            continue
        if r.task == "multiclass":
            scores[(r.architecture, r.task, r.seed)] = r.report.macro_f1
        else:
            scores[(r.architecture, r.task, r.seed)] = r.report.classes["EPR" if r.task == "epr" else "Interf"].f1

    print(f"{'seed':>4} {'Simba macro':>12} {'GNN_RCA macro':>14} {'Simba EPR':>10} {'Simba Interf':>13}")
    for s in seeds:
        row = [scores.get(k, float("nan")) for k in
               (("SIMBA", "multiclass", s), ("GNN_RCA", "multiclass", s), ("SIMBA", "epr", s), ("SIMBA", "interf", s))]
        print(f"{s:>4} " + " ".join(f"{v:>{w}.3f}" for v, w in zip(row, (12, 14, 10, 13))))
    for i in range(0, len(seeds) - 2, 3):
        tr = seeds[i : i + 3]
        med = {key: np.median([scores.get((*key, s), np.nan) for s in tr])
               for key in (("SIMBA", "multiclass"), ("GNN_RCA", "multiclass"), ("SIMBA", "epr"), ("SIMBA", "interf"))}
        print(f"seeds {tr[0]}-{tr[-1]}: Simba>=GNN_RCA {med['SIMBA', 'multiclass'] >= med['GNN_RCA', 'multiclass']} "
              f"({med['SIMBA', 'multiclass']:.3f} vs {med['GNN_RCA', 'multiclass']:.3f}), "
              f"EPR>=Interf {med['SIMBA', 'epr'] >= med['SIMBA', 'interf']} "
              f"({med['SIMBA', 'epr']:.3f} vs {med['SIMBA', 'interf']:.3f})")
    for r in multi.failed + binary.failed:
        print(f"FAILED {r.architecture}/{r.task}/seed{r.seed}: {r.error}")


if __name__ == "__main__":
    main()
