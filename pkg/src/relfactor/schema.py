"""Relational data model: entity types, entities, relation schemas, tuples.

A Database is immutable once built and safe for concurrent reads. Entities
are auto-registered in first-seen order from tuple streams; an optional
census can pre-register entities that carry no tuples (needed so cold-start
splits keep withheld entities in the registry).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .errors import DataError

# Raw stream record: (relation_name, e1_id, e2_id, label)
StreamTuple = tuple[str, str, str, int]


@dataclass(frozen=True)
class Relation:
    """Schema for one binary matrix.

    fully_observed: unrecorded cells are known false (lookup returns 0).
    positives_only: only true cells are recorded; negatives must be sampled.
    """

    name: str
    row_type: str
    col_type: str
    fully_observed: bool = False
    positives_only: bool = False

    def __post_init__(self) -> None:
        if self.fully_observed and self.positives_only:
            raise DataError(
                f"relation {self.name!r}: fully_observed and positives_only are mutually exclusive"
            )


@dataclass(frozen=True)
class Entity:
    """A registered entity. ordinal is dense within its type; index is global."""

    type: str
    id: str
    ordinal: int
    index: int

    @property
    def key(self) -> str:
        return f"{self.type}:{self.id}"


@dataclass
class Manifest:
    """Parsed schema manifest: declared entity types and relations."""

    entity_types: list[str] = field(default_factory=list)
    relations: dict[str, Relation] = field(default_factory=dict)


def parse_manifest(text: str) -> Manifest:
    """Parse a schema manifest.

    One declaration per line: ``type <name>`` or
    ``relation <name> <row_type> <col_type> [fully_observed|positives_only]``.
    Lines starting with ``#`` and blank lines are ignored.
    """
    manifest = Manifest()
    seen_types: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "type":
            if len(parts) != 2:
                raise DataError(f"manifest line {lineno}: expected 'type <name>'")
            name = parts[1]
            if ":" in name:
                raise DataError(f"manifest line {lineno}: type name may not contain ':'")
            if name in seen_types:
                raise DataError(f"manifest line {lineno}: duplicate type {name!r}")
            seen_types.add(name)
            manifest.entity_types.append(name)
        elif parts[0] == "relation":
            if len(parts) not in (4, 5):
                raise DataError(
                    f"manifest line {lineno}: expected 'relation <name> <row> <col> [flag]'"
                )
            name, row_type, col_type = parts[1], parts[2], parts[3]
            if name in manifest.relations:
                raise DataError(f"manifest line {lineno}: duplicate relation {name!r}")
            flags = {"fully_observed": False, "positives_only": False}
            if len(parts) == 5:
                if parts[4] not in flags:
                    raise DataError(f"manifest line {lineno}: unknown flag {parts[4]!r}")
                flags[parts[4]] = True
            for t in (row_type, col_type):
                if t not in seen_types:
                    raise DataError(f"manifest line {lineno}: undeclared entity type {t!r}")
            manifest.relations[name] = Relation(name, row_type, col_type, **flags)
        else:
            raise DataError(f"manifest line {lineno}: unknown declaration {parts[0]!r}")
    return manifest


def load_manifest(path: str | os.PathLike) -> Manifest:
    with open(path, "r", encoding="utf-8") as f:
        return parse_manifest(f.read())


class EntityRegistry:
    """Entities keyed by (type, id) with dense per-type ordinals."""

    def __init__(self, entity_types: Iterable[str]):
        self._types = list(entity_types)
        self._by_key: dict[tuple[str, str], Entity] = {}
        self._by_type: dict[str, list[Entity]] = {t: [] for t in self._types}
        self._all: list[Entity] = []

    def register(self, etype: str, eid: str) -> Entity:
        key = (etype, eid)
        ent = self._by_key.get(key)
        if ent is not None:
            return ent
        if etype not in self._by_type:
            raise DataError(f"unknown entity type {etype!r}")
        if not eid:
            raise DataError("empty entity id")
        ent = Entity(etype, eid, ordinal=len(self._by_type[etype]), index=len(self._all))
        self._by_key[key] = ent
        self._by_type[etype].append(ent)
        self._all.append(ent)
        return ent

    def get(self, etype: str, eid: str) -> Entity:
        try:
            return self._by_key[(etype, eid)]
        except KeyError:
            raise DataError(f"unknown entity {etype}:{eid}") from None

    def find(self, etype: str, eid: str) -> Optional[Entity]:
        return self._by_key.get((etype, eid))

    def of_type(self, etype: str) -> list[Entity]:
        if etype not in self._by_type:
            raise DataError(f"unknown entity type {etype!r}")
        return self._by_type[etype]

    @property
    def types(self) -> list[str]:
        return self._types

    def __len__(self) -> int:
        return len(self._all)

    def __iter__(self) -> Iterator[Entity]:
        return iter(self._all)


class Database:
    """Immutable store of observed tuples over a declared schema.

    Per-relation cells are keyed by (row_entity.index, col_entity.index) for
    O(1) membership lookup; iteration follows insertion order.
    """

    def __init__(self, manifest: Manifest, entities: EntityRegistry,
                 cells: dict[str, dict[tuple[int, int], int]]):
        self.manifest = manifest
        self.entities = entities
        self._cells = cells

    @property
    def relations(self) -> dict[str, Relation]:
        return self.manifest.relations

    def relation(self, name: str) -> Relation:
        try:
            return self.manifest.relations[name]
        except KeyError:
            raise DataError(f"unknown relation {name!r}") from None

    def cells(self, relation: str) -> dict[tuple[int, int], int]:
        self.relation(relation)
        return self._cells[relation]

    def tuple_count(self, relation: str) -> int:
        return len(self.cells(relation))

    def total_tuples(self) -> int:
        return sum(len(c) for c in self._cells.values())

    def iter_tuples(self, relation: str) -> Iterator[StreamTuple]:
        """Yield (relation, e1_id, e2_id, label) in insertion order."""
        ents = self.entities
        all_ents = list(ents)
        for (i, j), label in self.cells(relation).items():
            yield (relation, all_ents[i].id, all_ents[j].id, label)

    def with_tuples(self, kept: dict[str, Iterable[tuple[int, int, int]]]) -> "Database":
        """New Database sharing this registry, with relation tuple sets replaced.

        ``kept`` maps relation name -> iterable of (row_index, col_index, label);
        relations not in ``kept`` carry over unchanged. The shared registry is
        what keeps withheld entities registered after a split.
        """
        cells: dict[str, dict[tuple[int, int], int]] = {}
        for name in self.manifest.relations:
            if name in kept:
                cells[name] = {(i, j): y for i, j, y in kept[name]}
            else:
                cells[name] = dict(self._cells[name])
        return Database(self.manifest, self.entities, cells)


def build_database(manifest: Manifest, tuple_stream: Iterable[StreamTuple],
                   census: Optional[Iterable[tuple[str, str]]] = None) -> Database:
    """Build a validated Database from a manifest and a tuple stream.

    Entities auto-register on first appearance, ordinals in first-seen order.
    Exact duplicate tuples deduplicate silently; a conflicting label for an
    already-stored cell is an error. ``census`` pre-registers (type, id)
    pairs before the stream is read.
    """
    entities = EntityRegistry(manifest.entity_types)
    if census is not None:
        for etype, eid in census:
            entities.register(etype, eid)
    cells: dict[str, dict[tuple[int, int], int]] = {name: {} for name in manifest.relations}
    for rel_name, e1_id, e2_id, label in tuple_stream:
        rel = manifest.relations.get(rel_name)
        if rel is None:
            raise DataError(f"tuple references undeclared relation {rel_name!r}")
        if label not in (0, 1):
            raise DataError(f"relation {rel_name}: label must be 0 or 1, got {label!r}")
        if rel.positives_only and label != 1:
            raise DataError(
                f"relation {rel_name} is positives_only but tuple ({e1_id},{e2_id}) has label 0"
            )
        e1 = entities.register(rel.row_type, e1_id)
        e2 = entities.register(rel.col_type, e2_id)
        cell = (e1.index, e2.index)
        store = cells[rel_name]
        prev = store.get(cell)
        if prev is None:
            store[cell] = label
        elif prev != label:
            raise DataError(
                f"relation {rel_name}: conflicting labels for cell ({e1_id},{e2_id})"
            )
    return Database(manifest, entities, cells)


def lookup(db: Database, relation: str, e1_id: str, e2_id: str) -> Optional[int]:
    """Stored label of a cell, 0 for absent cells of fully_observed relations,
    None for absent cells otherwise."""
    rel = db.relation(relation)
    e1 = db.entities.get(rel.row_type, e1_id)
    e2 = db.entities.get(rel.col_type, e2_id)
    label = db.cells(relation).get((e1.index, e2.index))
    if label is None and rel.fully_observed:
        return 0
    return label


def degree_stats(db: Database, relation: str) -> tuple[dict[str, int], dict[str, int]]:
    """Observed tuple counts per row entity and per column entity.

    Every registered entity of the relation's row/col type appears, with 0
    when it has no observed tuples.
    """
    rel = db.relation(relation)
    rows = {e.id: 0 for e in db.entities.of_type(rel.row_type)}
    cols = {e.id: 0 for e in db.entities.of_type(rel.col_type)}
    all_ents = list(db.entities)
    for (i, j) in db.cells(relation):
        rows[all_ents[i].id] += 1
        cols[all_ents[j].id] += 1
    return rows, cols


# --- file formats -----------------------------------------------------------

def read_tuple_stream(path: str | os.PathLike, manifest: Manifest) -> Iterator[StreamTuple]:
    """Read a tuple-stream TSV: ``relation \\t e1 \\t e2 \\t label``.

    For positives_only relations a 3-column form (label implied 1) is accepted.
    """
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) == 4:
                rel_name, e1, e2, label_s = parts
                if label_s not in ("0", "1"):
                    raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {label_s!r}")
                label = int(label_s)
            elif len(parts) == 3:
                rel_name, e1, e2 = parts
                rel = manifest.relations.get(rel_name)
                if rel is None:
                    raise DataError(f"{path}:{lineno}: undeclared relation {rel_name!r}")
                if not rel.positives_only:
                    raise DataError(
                        f"{path}:{lineno}: 3-column form only allowed for positives_only relations"
                    )
                label = 1
            else:
                raise DataError(f"{path}:{lineno}: expected 3 or 4 tab-separated columns")
            yield (rel_name, e1, e2, label)


def format_manifest(manifest: Manifest) -> str:
    lines = [f"type {t}" for t in manifest.entity_types]
    for rel in manifest.relations.values():
        flag = ""
        if rel.fully_observed:
            flag = " fully_observed"
        elif rel.positives_only:
            flag = " positives_only"
        lines.append(f"relation {rel.name} {rel.row_type} {rel.col_type}{flag}")
    return "\n".join(lines) + "\n"


def format_tuple_line(rel: Relation, e1_id: str, e2_id: str, label: int) -> str:
    if rel.positives_only:
        return f"{rel.name}\t{e1_id}\t{e2_id}"
    return f"{rel.name}\t{e1_id}\t{e2_id}\t{label}"
