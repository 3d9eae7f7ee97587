"""Sweep the path-size penalty factor and report how the largest path
shrinks. Trains once, then re-runs only the assignment step per alpha
(the penalty enters training solely through that step).

Usage:
    python3 scripts/sweep_alpha.py [--alphas 3e-5 3e-4 3e-3 3e-2]
"""

import argparse
import json

from pathrec.data import make_split, preprocess, synth_clusters
from pathrec.em import EmConfig, coordinate_descent_assign
from pathrec.seeding import substream
from pathrec.structure import StructureConfig
from pathrec.train import train_model


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alphas", type=float, nargs="+",
                    default=[3e-5, 3e-4, 3e-3, 3e-2])
    ap.add_argument("--nodes", type=int, default=32)
    ap.add_argument("--depth", type=int, default=2)
    ap.add_argument("--paths", type=int, default=2)
    ap.add_argument("--epochs", type=int, default=4)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    records, _ = synth_clusters(8, 250, 5000, 20, 0.2, args.seed)
    kept, _ = preprocess(records)
    split = make_split(kept, 200, 500, args.seed)
    cfg = StructureConfig(num_nodes=args.nodes, depth=args.depth,
                          paths_per_item=args.paths, beam_size=16,
                          score_capacity=16, penalty_alpha=args.alphas[-1])
    em_cfg = EmConfig(epochs=args.epochs, batch_size=64, num_negatives=100,
                      freeze_epoch=args.epochs)
    trained = train_model(kept, split, cfg, em_cfg, args.seed)

    for alpha in args.alphas:
        mapping = coordinate_descent_assign(
            trained.table, trained.num_items, cfg.num_nodes, cfg.depth,
            alpha, cfg.paths_per_item, 5, substream(args.seed, "sweep"))
        sizes = sorted(mapping.path_sizes.values(), reverse=True)
        print(json.dumps({"event": "sweep", "alpha": alpha,
                          "top_path_size": sizes[0],
                          "nonempty_paths": len(sizes),
                          "mean_path_size": sum(sizes) / len(sizes)}))


if __name__ == "__main__":
    main()
