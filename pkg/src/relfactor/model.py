"""Model parameters and scoring: one k-vector per entity, optional per-entity
biases and per-relation offsets, logistic link.

The probability that a relation holds between two entities is
sigmoid(dot(v1, v2) [+ b1 + b2 + g_rel when biases are enabled]).
"""

from __future__ import annotations

import math
import os
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError
from .rng import substream
from .schema import Database, EntityRegistry, Manifest, Relation

MODEL_MAGIC = "relfactor-model"
MODEL_VERSION = "v1"


def sigmoid(s: float) -> float:
    """Numerically stable logistic function."""
    if s >= 0.0:
        return 1.0 / (1.0 + math.exp(-s))
    z = math.exp(s)
    return z / (1.0 + z)


def log_sigmoid(s: np.ndarray) -> np.ndarray:
    """Stable elementwise log(sigmoid(s))."""
    return -np.logaddexp(0.0, -s)


class EmbeddingStore:
    """Entity embeddings plus the schema context needed to score cells.

    vectors is float64 of shape (n_entities, k), row-indexed by the global
    entity index of the shared registry. biases (n_entities,) and offsets
    (one per relation) exist only when enable_biases is true.
    """

    def __init__(self, entities: EntityRegistry, relations: dict[str, Relation],
                 vectors: np.ndarray, enable_biases: bool = False,
                 biases: Optional[np.ndarray] = None,
                 offsets: Optional[dict[str, float]] = None):
        if vectors.ndim != 2 or vectors.shape[0] != len(entities):
            raise DataError("vectors must be (n_entities, k)")
        self.entities = entities
        self.relations = dict(relations)
        self.vectors = vectors
        self.enable_biases = enable_biases
        if enable_biases:
            self.biases = biases if biases is not None else np.zeros(len(entities))
            self.offsets = offsets if offsets is not None else {r: 0.0 for r in relations}
        else:
            self.biases = None
            self.offsets = None

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    def relation(self, name: str) -> Relation:
        try:
            return self.relations[name]
        except KeyError:
            raise DataError(f"unknown relation {name!r}") from None

    def resolve(self, relation: str, e1_id: str, e2_id: str):
        rel = self.relation(relation)
        e1 = self.entities.get(rel.row_type, e1_id)
        e2 = self.entities.get(rel.col_type, e2_id)
        return rel, e1, e2

    def raw_score(self, relation: str, e1_id: str, e2_id: str) -> float:
        rel, e1, e2 = self.resolve(relation, e1_id, e2_id)
        s = float(self.vectors[e1.index] @ self.vectors[e2.index])
        if self.enable_biases:
            s += float(self.biases[e1.index]) + float(self.biases[e2.index])
            s += self.offsets[rel.name]
        return s

    def copy_parameters(self) -> tuple[np.ndarray, Optional[np.ndarray], Optional[dict[str, float]]]:
        return (
            self.vectors.copy(),
            None if self.biases is None else self.biases.copy(),
            None if self.offsets is None else dict(self.offsets),
        )

    def squared_norm(self) -> float:
        """||Phi||^2 over all entity vectors (plus biases when enabled)."""
        total = float(np.sum(self.vectors * self.vectors))
        if self.enable_biases:
            total += float(np.sum(self.biases * self.biases))
        return total


def score(store: EmbeddingStore, relation: str, e1_id: str, e2_id: str) -> float:
    """Probability that relation(e1, e2) = 1 under the current parameters."""
    return sigmoid(store.raw_score(relation, e1_id, e2_id))


def init_embeddings(db: Database, k: int, seed: int, scale: float = 0.01,
                    enable_biases: bool = False) -> EmbeddingStore:
    """Fresh store with coordinates i.i.d. uniform on (-scale, scale).

    Biases and offsets (when enabled) start at zero. Deterministic in seed.
    """
    if k < 1:
        raise DataError("embedding dimension k must be >= 1")
    if scale <= 0:
        raise DataError("init scale must be positive")
    rng = substream(seed, "init")
    vectors = rng.uniform(-scale, scale, size=(len(db.entities), k))
    return EmbeddingStore(db.entities, db.relations, vectors, enable_biases=enable_biases)


def log_likelihood(store: EmbeddingStore, db: Database,
                   relation_subset: Optional[Sequence[str]] = None,
                   lam: float = 0.0,
                   sampled_negatives: Optional[Iterable[tuple[str, int, int]]] = None) -> float:
    """Regularized Bernoulli log likelihood of the observed tuples.

    Sums y*ln(p) + (1-y)*ln(1-p) over the observed tuples of the selected
    relations (plus any supplied sampled-negative cells, scored as label 0),
    minus lam * ||Phi||^2. Negative cells are given as (relation, row_index,
    col_index) using global entity indices.
    """
    if lam < 0:
        raise DataError("lambda must be nonnegative")
    if not np.all(np.isfinite(store.vectors)):
        raise DataError("non-finite parameters")
    names = list(relation_subset) if relation_subset is not None else list(db.relations)
    rows, cols, labels, offs = [], [], [], []
    for name in names:
        cells = db.cells(name)
        off = store.offsets[name] if store.enable_biases else 0.0
        for (i, j), y in cells.items():
            rows.append(i)
            cols.append(j)
            labels.append(y)
            offs.append(off)
    if sampled_negatives is not None:
        for name, i, j in sampled_negatives:
            rows.append(i)
            cols.append(j)
            labels.append(0)
            offs.append(store.offsets[name] if store.enable_biases else 0.0)
    total = -lam * store.squared_norm()
    if rows:
        ri = np.asarray(rows)
        ci = np.asarray(cols)
        y = np.asarray(labels, dtype=np.float64)
        s = np.einsum("ij,ij->i", store.vectors[ri], store.vectors[ci])
        if store.enable_biases:
            s = s + store.biases[ri] + store.biases[ci] + np.asarray(offs)
        total += float(np.sum(y * log_sigmoid(s) + (1.0 - y) * log_sigmoid(-s)))
    return total


# --- persistence -------------------------------------------------------------

def _fmt(x: float, compact: bool) -> str:
    return format(x, ".9g") if compact else format(x, ".17g")


def save_model(store: EmbeddingStore, path: str | os.PathLike, compact: bool = False) -> None:
    """Write the versioned text format (bit-exact roundtrip unless compact)."""
    lines = [f"{MODEL_MAGIC} {MODEL_VERSION} k={store.k} biases={int(store.enable_biases)}"
             + (" compact=1" if compact else "")]
    for t in store.entities.types:
        lines.append(f"type {t}")
    for rel in store.relations.values():
        flag = ""
        if rel.fully_observed:
            flag = " fully_observed"
        elif rel.positives_only:
            flag = " positives_only"
        lines.append(f"relation {rel.name} {rel.row_type} {rel.col_type}{flag}")
    for ent in store.entities:
        b = store.biases[ent.index] if store.enable_biases else 0.0
        coords = " ".join(_fmt(c, compact) for c in store.vectors[ent.index])
        lines.append(f"{ent.type}:{ent.id}\tb={_fmt(b, compact)}\t{coords}")
    if store.enable_biases:
        for name, value in store.offsets.items():
            lines.append(f"offset {name} {_fmt(value, compact)}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_model(path: str | os.PathLike) -> EmbeddingStore:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty model file")
    header = lines[0].split()
    if len(header) < 4 or header[0] != MODEL_MAGIC:
        raise DataError(f"{path}: not a relfactor model file")
    if header[1] != MODEL_VERSION:
        raise DataError(f"{path}: unsupported model version {header[1]!r}")
    fields = dict(kv.split("=", 1) for kv in header[2:])
    try:
        k = int(fields["k"])
        enable_biases = bool(int(fields["biases"]))
    except (KeyError, ValueError):
        raise DataError(f"{path}: malformed model header") from None

    manifest = Manifest()
    seen_types: set[str] = set()
    entity_rows: list[tuple[str, str, float, list[float]]] = []
    offsets: dict[str, float] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        if line.startswith("type "):
            name = line.split()[1]
            seen_types.add(name)
            manifest.entity_types.append(name)
        elif line.startswith("relation "):
            parts = line.split()
            if len(parts) not in (4, 5):
                raise DataError(f"{path}:{lineno}: malformed relation line")
            flags = {"fully_observed": False, "positives_only": False}
            if len(parts) == 5:
                flags[parts[4]] = True
            manifest.relations[parts[1]] = Relation(parts[1], parts[2], parts[3], **flags)
        elif line.startswith("offset "):
            parts = line.split()
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: malformed offset line")
            offsets[parts[1]] = float(parts[2])
        else:
            cells = line.split("\t")
            if len(cells) != 3 or not cells[1].startswith("b="):
                raise DataError(f"{path}:{lineno}: malformed entity line")
            etype, _, eid = cells[0].partition(":")
            if etype not in seen_types:
                raise DataError(f"{path}:{lineno}: entity of undeclared type {etype!r}")
            coords = [float(c) for c in cells[2].split(" ")]
            if len(coords) != k:
                raise DataError(f"{path}:{lineno}: expected {k} coordinates, got {len(coords)}")
            entity_rows.append((etype, eid, float(cells[1][2:]), coords))

    registry = EntityRegistry(manifest.entity_types)
    vectors = np.empty((len(entity_rows), k), dtype=np.float64)
    biases = np.zeros(len(entity_rows), dtype=np.float64)
    for etype, eid, b, coords in entity_rows:
        ent = registry.register(etype, eid)
        vectors[ent.index] = coords
        biases[ent.index] = b
    if enable_biases:
        for name in manifest.relations:
            offsets.setdefault(name, 0.0)
        return EmbeddingStore(registry, manifest.relations, vectors,
                              enable_biases=True, biases=biases, offsets=offsets)
    return EmbeddingStore(registry, manifest.relations, vectors)
