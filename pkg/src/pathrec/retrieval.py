"""Beam search over the structure, the path -> items inverted index, and
end-to-end candidate retrieval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .structure import PathId, StructureConfig, StructureParams, UserContext
from .structure import batched_layer_log_probs, user_embedding, validate_path


@dataclass
class ItemPathMapping:
    """The item -> J paths assignment with its derived bookkeeping.

    `path_sizes` counts multiplicity (an item contributes once per assigned
    path) and `inverted` maps each non-empty path to its item ids.
    """

    assignments: list          # item id -> tuple of J PathIds
    path_sizes: dict = field(default_factory=dict)
    inverted: dict = field(default_factory=dict)

    @classmethod
    def from_assignments(cls, assignments) -> "ItemPathMapping":
        assignments = [tuple(tuple(int(c) for c in p) for p in paths)
                       for paths in assignments]
        mapping = cls(assignments)
        mapping.rebuild()
        return mapping

    @classmethod
    def random_init(cls, cfg: StructureConfig, num_items: int,
                    rng: np.random.Generator) -> "ItemPathMapping":
        """J distinct random paths per item."""
        J, D, K = cfg.paths_per_item, cfg.depth, cfg.num_nodes
        draw = rng.integers(0, K, size=(num_items, J, D))
        assignments = []
        for v in range(num_items):
            chosen = {tuple(int(c) for c in row) for row in draw[v]}
            while len(chosen) < J:     # rare collision, redraw
                chosen.add(tuple(int(c) for c in rng.integers(0, K, size=D)))
            assignments.append(tuple(sorted(chosen)))
        return cls.from_assignments(assignments)

    def rebuild(self) -> None:
        """Recompute sizes and the inverted index from the assignments."""
        self.path_sizes = {}
        self.inverted = {}
        for item, paths in enumerate(self.assignments):
            for path in paths:
                self.path_sizes[path] = self.path_sizes.get(path, 0) + 1
                self.inverted.setdefault(path, []).append(item)

    @property
    def num_items(self) -> int:
        return len(self.assignments)

    def validate(self, cfg: StructureConfig | None = None) -> None:
        if cfg is not None:
            for paths in self.assignments:
                for p in paths:
                    validate_path(p, cfg)
        total = sum(self.path_sizes.values())
        expected = sum(len(paths) for paths in self.assignments)
        if total != expected:
            raise ValueError(f"path size total {total} != assignment total {expected}")
        rebuilt = ItemPathMapping.from_assignments(self.assignments)
        if rebuilt.path_sizes != self.path_sizes or rebuilt.inverted != self.inverted:
            raise ValueError("inverted index inconsistent with assignments")


def beam_search(ctx: UserContext, params: StructureParams,
                beam_size: int | None = None) -> list:
    """Top-B paths by log-probability, sorted descending.

    Per layer, expands the current beam to all K successors and keeps the
    top B; ties broken toward the lexicographically smaller path. With
    B >= K^D this is exhaustive enumeration.
    """
    cfg = params.cfg
    B = cfg.beam_size if beam_size is None else int(beam_size)
    if B < 1:
        raise ValueError("beam_size must be >= 1")
    u = user_embedding(ctx, params)
    prefixes = np.zeros((1, 0), dtype=np.int64)
    logps = np.zeros(1)
    for d in range(cfg.depth):
        layer_lp = batched_layer_log_probs(u, prefixes, params)      # (n, K)
        neg = (-logps[:, None] - layer_lp).ravel()
        n, K = layer_lp.shape
        need = min(B, neg.size)
        if need < neg.size:
            # Keep everything at least as good as the B-th candidate, then
            # order that small pool exactly.
            kth = np.partition(neg, need - 1)[need - 1]
            pool = np.flatnonzero(neg <= kth)
        else:
            pool = np.arange(neg.size)
        rows = pool // K
        nodes = pool % K
        # Sort by log-prob descending, ties toward the smaller path;
        # lexsort keys are least significant first.
        keys = (nodes,) + tuple(prefixes[rows, j]
                                for j in range(prefixes.shape[1] - 1, -1, -1))
        order = np.lexsort(keys + (neg[pool],))[:need]
        sel = pool[order]
        prefixes = np.concatenate(
            [prefixes[sel // K], (sel % K)[:, None]], axis=1)
        logps = -neg[sel]
    return [(tuple(path), float(lp))
            for path, lp in zip(prefixes.tolist(), logps.tolist())]


def retrieve_candidates(ctx: UserContext, params: StructureParams,
                        mapping: ItemPathMapping,
                        beam_size: int | None = None) -> list:
    """Deduplicated (item, best path log-prob) over the beam-retrieved paths.

    An item reached via several paths is scored by its maximum path
    log-probability; sorted descending, ties toward the smaller item id.
    """
    paths = beam_search(ctx, params, beam_size)
    best: dict = {}
    for path, lp in paths:
        for item in mapping.inverted.get(path, ()):
            if item not in best or lp > best[item]:
                best[item] = lp
    return sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))


def adaptive_beam(ctx: UserContext, params: StructureParams,
                  mapping: ItemPathMapping, target_count: int,
                  multiplier_range: tuple = (5, 10)) -> tuple:
    """Grow the beam geometrically until enough candidates are retrieved.

    Doubles B until the candidate count reaches multiplier_range[0] times
    `target_count` or the beam covers every path. Returns (candidates, B).
    """
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    cfg = params.cfg
    want = multiplier_range[0] * target_count
    B = 1
    while True:
        candidates = retrieve_candidates(ctx, params, mapping, beam_size=B)
        if len(candidates) >= want or B >= cfg.num_paths:
            return candidates, B
        B = min(2 * B, cfg.num_paths)
