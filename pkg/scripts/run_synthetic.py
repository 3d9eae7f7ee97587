"""Train on a planted-cluster corpus and compare structure retrieval with
the brute-force baseline.

Usage:
    python3 scripts/run_synthetic.py [--clusters 8] [--users 5000] ...
"""

import argparse
import json

from pathrec.data import evaluate, make_split, preprocess, synth_clusters
from pathrec.em import EmConfig
from pathrec.structure import StructureConfig
from pathrec.train import train_model


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--clusters", type=int, default=8)
    ap.add_argument("--items-per-cluster", type=int, default=250)
    ap.add_argument("--users", type=int, default=5000)
    ap.add_argument("--interactions-per-user", type=int, default=20)
    ap.add_argument("--mixture", type=float, default=0.2)
    ap.add_argument("--nodes", type=int, default=16)
    ap.add_argument("--depth", type=int, default=2)
    ap.add_argument("--paths", type=int, default=2)
    ap.add_argument("--beam", type=int, default=8)
    ap.add_argument("--score-capacity", type=int, default=8)
    ap.add_argument("--alpha", type=float, default=3e-3)
    ap.add_argument("--epochs", type=int, default=4)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--test-users", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    records, _ = synth_clusters(args.clusters, args.items_per_cluster,
                                args.users, args.interactions_per_user,
                                args.mixture, args.seed)
    kept, stats = preprocess(records)
    print(json.dumps({"event": "corpus", **stats}))
    split = make_split(kept, 200, args.test_users, args.seed)

    cfg = StructureConfig(num_nodes=args.nodes, depth=args.depth,
                          paths_per_item=args.paths, beam_size=args.beam,
                          score_capacity=args.score_capacity,
                          penalty_alpha=args.alpha)
    em_cfg = EmConfig(epochs=args.epochs, batch_size=64,
                      num_negatives=100, freeze_epoch=2)
    trained = train_model(kept, split, cfg, em_cfg, args.seed)
    for s in trained.stats:
        print(json.dumps({"event": "epoch", **s}))

    index = {item: i for i, item in enumerate(trained.item_ids)}

    def run(fn):
        def retrieve(behavior, k):
            internal = [index[i] for i in behavior if i in index]
            return [trained.item_ids[i] for i, _ in fn(internal, k)]
        return retrieve

    for name, fn in [("structure",
                      lambda b, k: trained.retrieve(b, k, adaptive=True)),
                     ("brute_force", trained.retrieve_brute_force)]:
        report = evaluate(run(fn), split, args.k)
        print(json.dumps({"event": "metrics", "method": name,
                          **report.as_dict()}))


if __name__ == "__main__":
    main()
