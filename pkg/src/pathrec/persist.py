"""Checkpoint persistence: a self-describing directory with a manifest,
binary tensor blobs, the item-path mapping and the score table.

Tensor blob layout (little-endian throughout):
    8-byte magic | uint32 ndim | uint32 dims... | float32 payload | uint32 crc32
with the checksum covering everything before it. The manifest additionally
records a sha256 per file so corruption anywhere is detected on load.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .core import AffineLayer
from .em import ScoreTable
from .reranker import SoftmaxModel
from .retrieval import ItemPathMapping
from .structure import StructureConfig, StructureParams
from .trained import TrainedModel

TENSOR_MAGIC = b"PATHTNSR"
FORMAT_VERSION = 1


class CorruptionError(RuntimeError):
    """A blob failed its checksum or is structurally damaged."""


class MigrationError(RuntimeError):
    """The checkpoint was written by an incompatible format version."""


def write_tensor(path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = TENSOR_MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    body = header + arr.tobytes()
    crc = zlib.crc32(body) & 0xFFFFFFFF
    Path(path).write_bytes(body + struct.pack("<I", crc))


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < len(TENSOR_MAGIC) + 8 or raw[:8] != TENSOR_MAGIC:
        raise CorruptionError(f"{path}: bad magic or truncated header")
    body, crc_bytes = raw[:-4], raw[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != struct.unpack("<I", crc_bytes)[0]:
        raise CorruptionError(f"{path}: checksum mismatch")
    ndim = struct.unpack_from("<I", body, 8)[0]
    shape = struct.unpack_from(f"<{ndim}I", body, 12)
    payload = body[12 + 4 * ndim:]
    expected = 4 * int(np.prod(shape)) if ndim else 4
    if len(payload) != expected:
        raise CorruptionError(f"{path}: payload size {len(payload)} != {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float64)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _format_path(path) -> str:
    return "-".join(str(c) for c in path)


def _parse_path(text: str):
    return tuple(int(c) for c in text.split("-"))


def write_mapping(path, mapping: ItemPathMapping) -> None:
    lines = []
    for item, paths in enumerate(mapping.assignments):
        lines.append(f"{item}\t" + ";".join(_format_path(p) for p in paths))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mapping(path) -> ItemPathMapping:
    assignments: dict = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        item_text, paths_text = line.split("\t")
        assignments[int(item_text)] = tuple(_parse_path(p)
                                            for p in paths_text.split(";"))
    ordered = [assignments[i] for i in range(len(assignments))]
    return ItemPathMapping.from_assignments(ordered)


def write_scores(path, table: ScoreTable) -> None:
    lines = [f"#capacity\t{table.capacity}"]
    for item in sorted(table.scores):
        entries = table.top_paths(item)
        count = table.counts.get(item, 0.0)
        body = ";".join(f"{_format_path(p)}={s.hex()}" for p, s in entries)
        lines.append(f"{item}\t{count.hex()}\t{body}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_scores(path) -> ScoreTable:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#capacity\t"):
        raise CorruptionError(f"{path}: missing capacity header")
    table = ScoreTable(int(lines[0].split("\t")[1]))
    for line in lines[1:]:
        if not line.strip():
            continue
        item_text, count_text, body = line.split("\t")
        item = int(item_text)
        table.counts[item] = float.fromhex(count_text)
        entries = {}
        if body:
            for part in body.split(";"):
                path_text, score_text = part.split("=")
                entries[_parse_path(path_text)] = float.fromhex(score_text)
        table.scores[item] = entries
    return table


def save_checkpoint(directory, trained: TrainedModel,
                    extra_config: dict | None = None) -> None:
    """Write a complete checkpoint; deterministic byte-for-byte given the
    same model state."""
    root = Path(directory)
    (root / "tensors").mkdir(parents=True, exist_ok=True)
    tensors = dict(trained.params.tensor_dict())
    tensors["out_emb"] = trained.model.out_emb
    tensor_meta = {}
    for name, arr in tensors.items():
        rel = f"tensors/{name}.bin"
        write_tensor(root / rel, arr)
        tensor_meta[name] = {"file": rel, "shape": list(arr.shape),
                             "sha256": _sha256(root / rel)}
    write_mapping(root / "mapping.tsv", trained.mapping)
    write_scores(root / "scores.tsv", trained.table)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": dataclasses.asdict(trained.cfg),
        "extra_config": extra_config or {},
        "num_items": trained.num_items,
        "item_ids": list(trained.item_ids),
        "tensors": tensor_meta,
        "files": {
            "mapping": {"file": "mapping.tsv", "sha256": _sha256(root / "mapping.tsv")},
            "scores": {"file": "scores.tsv", "sha256": _sha256(root / "scores.tsv")},
        },
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n")


def load_checkpoint(directory) -> TrainedModel:
    root = Path(directory)
    manifest = json.loads((root / "manifest.json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise MigrationError(
            f"checkpoint version {manifest.get('format_version')} != {FORMAT_VERSION}")
    for meta in list(manifest["tensors"].values()) + list(manifest["files"].values()):
        if _sha256(root / meta["file"]) != meta["sha256"]:
            raise CorruptionError(f"{meta['file']}: sha256 mismatch")
    cfg = StructureConfig(**manifest["config"])
    tensors = {name: read_tensor(root / meta["file"])
               for name, meta in manifest["tensors"].items()}
    mlps = []
    for d in range(cfg.depth):
        mlps.append((AffineLayer(tensors[f"mlp{d}_w1"], tensors[f"mlp{d}_b1"]),
                     AffineLayer(tensors[f"mlp{d}_w2"], tensors[f"mlp{d}_b2"])))
    params = StructureParams(cfg, manifest["num_items"], tensors["item_emb"],
                             tensors["node_emb"], mlps)
    model = SoftmaxModel(tensors["out_emb"])
    mapping = read_mapping(root / manifest["files"]["mapping"]["file"])
    table = read_scores(root / manifest["files"]["scores"]["file"])
    return TrainedModel(cfg=cfg, params=params, model=model, mapping=mapping,
                        table=table, item_ids=manifest["item_ids"])
