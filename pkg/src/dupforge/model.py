"""Shared domain types and versioned-value lookups.

Time is an integer tick; version intervals are half-open ``[valid_from,
valid_to)`` with ``valid_to=None`` meaning open-ended.  Documents inside the
engine are *flat*: a dict from leaf path key (``"address.city"``) to value.
"""

from __future__ import annotations

import bisect
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

from .exceptions import OutsideLifespan, UnknownEntity
from .values import decode_json, encode_value, to_plain

LIFESPAN = "__lifespan__"


@dataclass(frozen=True)
class AttributePath:
    segments: tuple

    def __post_init__(self):
        if not self.segments:
            raise ValueError("attribute path must be non-empty")

    @property
    def key(self) -> str:
        return ".".join(str(s) for s in self.segments)

    @classmethod
    def parse(cls, key: str) -> "AttributePath":
        return cls(tuple(key.split(".")))

    def __str__(self):
        return self.key


def path_key(path) -> str:
    if isinstance(path, AttributePath):
        return path.key
    if isinstance(path, tuple):
        return ".".join(str(s) for s in path)
    return path


# -- schema ------------------------------------------------------------------


@dataclass
class Attribute:
    name: str  # flat path key
    semantic_type: str = "unknown"
    kind: str = "text"
    nullable: bool = True
    segments: tuple = ()

    def to_dict(self):
        return {"name": self.name, "segments": list(self.segments or (self.name,)),
                "semantic_type": self.semantic_type, "kind": self.kind, "nullable": self.nullable}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d.get("semantic_type", "unknown"), d.get("kind", "text"),
                   d.get("nullable", True), tuple(d.get("segments") or (d["name"],)))


@dataclass
class Relationship:
    kind: str  # "foreign-key" | "nesting"
    from_path: str
    to_path: str

    def to_dict(self):
        return {"kind": self.kind, "from": self.from_path, "to": self.to_path}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["from"], d["to"])


@dataclass
class Schema:
    model: str = "relational"
    attributes: list[Attribute] = field(default_factory=list)
    relationships: list[Relationship] = field(default_factory=list)

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ValueError("attribute names must be unique")
        known = set(names)
        for rel in self.relationships:
            if rel.kind == "foreign-key" and (rel.from_path not in known or rel.to_path not in known):
                raise ValueError(f"relationship endpoint missing: {rel}")

    @property
    def paths(self) -> list[str]:
        return [a.name for a in self.attributes]

    def attribute(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    def segment_map(self) -> dict:
        return {a.name: tuple(a.segments or (a.name,)) for a in self.attributes}

    def to_dict(self):
        return {"model": self.model, "attributes": [a.to_dict() for a in self.attributes],
                "relationships": [r.to_dict() for r in self.relationships]}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("model", "relational"), [Attribute.from_dict(a) for a in d["attributes"]],
                   [Relationship.from_dict(r) for r in d.get("relationships", [])])


# -- constraints ---------------------------------------------------------------


@dataclass(frozen=True)
class Unique:
    paths: tuple

    def to_dict(self):
        return {"type": "unique", "paths": list(self.paths)}

    def __str__(self):
        return f"Unique({', '.join(self.paths)})"


@dataclass(frozen=True)
class TemporalUnique:
    paths: tuple

    def to_dict(self):
        return {"type": "temporal_unique", "paths": list(self.paths)}

    def __str__(self):
        return f"TemporalUnique({', '.join(self.paths)})"


@dataclass(frozen=True)
class FunctionalDependency:
    lhs: tuple
    rhs: tuple

    def __post_init__(self):
        if not self.rhs:
            raise ValueError("FD right-hand side must be non-empty")
        if set(self.lhs) & set(self.rhs):
            raise ValueError("FD sides must be disjoint")

    @property
    def paths(self):
        return tuple(self.lhs) + tuple(self.rhs)

    def to_dict(self):
        return {"type": "fd", "lhs": list(self.lhs), "rhs": list(self.rhs)}

    def __str__(self):
        return f"{{{', '.join(self.lhs)}}} -> {{{', '.join(self.rhs)}}}"


def constraint_from_dict(d):
    t = d["type"]
    if t == "unique":
        return Unique(tuple(d["paths"]))
    if t == "temporal_unique":
        return TemporalUnique(tuple(d["paths"]))
    if t == "fd":
        return FunctionalDependency(tuple(d["lhs"]), tuple(d["rhs"]))
    raise ValueError(f"unknown constraint type {t!r}")


@dataclass
class SemanticType:
    label: str = "unknown"
    confidence: float = 0.0

    def to_dict(self):
        return {"label": self.label, "confidence": self.confidence}


@dataclass
class EnrichedSchema:
    schema: Schema
    constraints: list = field(default_factory=list)
    semantic_types: dict = field(default_factory=dict)
    change_model: object = None  # profiling.temporal.ChangeModel
    update_rules: list = field(default_factory=list)

    def __post_init__(self):
        known = set(self.schema.paths)
        for c in self.constraints:
            missing = [p for p in c.paths if p not in known]
            if missing:
                raise ValueError(f"constraint {c} references unknown paths {missing}")


# -- history -----------------------------------------------------------------


class VersionedValue(NamedTuple):
    value: object
    valid_from: int
    valid_to: int | None


@dataclass
class EntityHistory:
    entity_id: int
    created_at: int
    deleted_at: int | None
    versions: dict  # path key -> list[VersionedValue]

    def alive_at(self, t: int) -> bool:
        return self.created_at <= t and (self.deleted_at is None or t < self.deleted_at)

    def value_at(self, path: str, t: int):
        versions = self.versions[path]
        if len(versions) == 1:
            return versions[0].value
        starts = [v.valid_from for v in versions]
        return versions[bisect.bisect_right(starts, t) - 1].value

    def doc_at(self, t: int) -> dict:
        return {p: self.value_at(p, t) for p in self.versions}

    def last_alive_tick(self) -> int | None:
        return None if self.deleted_at is None else self.deleted_at - 1

    def truth_doc(self, horizon: int) -> dict:
        """Values at ``horizon``; for entities deleted earlier, the last alive state."""
        if self.deleted_at is not None and self.deleted_at <= horizon:
            return self.doc_at(self.deleted_at - 1)
        return self.doc_at(horizon)


@dataclass
class DataHistory:
    paths: list
    entities: dict = field(default_factory=dict)  # EntityId -> EntityHistory
    horizon: int = 0
    diagnostics: list = field(default_factory=list)

    def add(self, eh: EntityHistory):
        self.entities[eh.entity_id] = eh

    def __iter__(self) -> Iterator[EntityHistory]:
        return iter(self.entities.values())

    def __len__(self):
        return len(self.entities)


def value_at(history: DataHistory, entity: int, path, t: int):
    eh = history.entities.get(entity)
    if eh is None:
        raise UnknownEntity(entity)
    if not eh.alive_at(t):
        raise OutsideLifespan(f"entity {entity} not alive at t={t}")
    return eh.value_at(path_key(path), t)


def snapshot_at(history: DataHistory, t: int) -> list[tuple[int, dict]]:
    return [(eid, eh.doc_at(t)) for eid, eh in sorted(history.entities.items()) if eh.alive_at(t)]


# -- validation ----------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    at: int
    constraint: object
    entities: tuple


def _boundary_changes(history: DataHistory, paths: list):
    """tick -> list of (entity, dict of path->new value, or None for deletion)."""
    changes = defaultdict(list)
    for eh in history:
        changes[eh.created_at].append((eh.entity_id, {p: eh.value_at(p, eh.created_at) for p in paths}))
        for p in paths:
            for v in eh.versions[p][1:]:
                changes[v.valid_from].append((eh.entity_id, {p: v.value}))
        if eh.deleted_at is not None:
            changes[eh.deleted_at].append((eh.entity_id, None))
    return changes


def validate_history(history: DataHistory, schema: EnrichedSchema) -> list[Violation]:
    """Sweep every event boundary and report each constraint violation where it starts.

    Unique keys with a null component are ignored; FDs treat null as a value.
    """
    constraints = list(schema.constraints)
    if not constraints or not history.entities:
        return []
    paths = sorted({p for c in constraints for p in c.paths})
    changes = _boundary_changes(history, paths)
    current: dict = {}
    uniq_idx = [defaultdict(set) for _ in constraints]
    fd_idx = [defaultdict(lambda: defaultdict(set)) for _ in constraints]
    temporal_owner = [dict() for _ in constraints]  # key -> (entity, holding)
    flagged = [set() for _ in constraints]
    out = []

    def key_of(c, doc):
        return tuple(doc[p] for p in c.paths) if not isinstance(c, FunctionalDependency) else (
            tuple(doc[p] for p in c.lhs), tuple(doc[p] for p in c.rhs))

    hashable = _hashable
    for t in sorted(changes):
        touched = [set() for _ in constraints]
        for entity, update in changes[t]:
            old = current.get(entity)
            if update is None:
                new = None
            else:
                new = dict(old) if old else {}
                new.update(update)
            for i, c in enumerate(constraints):
                ok = key_of(c, old) if old else None
                nk = key_of(c, new) if new else None
                if ok is not None:
                    ok = hashable(ok)
                if nk is not None:
                    nk = hashable(nk)
                if ok == nk:
                    continue
                if isinstance(c, FunctionalDependency):
                    if ok is not None:
                        fd_idx[i][ok[0]][ok[1]].discard(entity)
                        if not fd_idx[i][ok[0]][ok[1]]:
                            del fd_idx[i][ok[0]][ok[1]]
                        touched[i].add(ok[0])
                    if nk is not None:
                        fd_idx[i][nk[0]][nk[1]].add(entity)
                        touched[i].add(nk[0])
                    continue
                if ok is not None and None not in ok:
                    uniq_idx[i][ok].discard(entity)
                    touched[i].add(ok)
                    if isinstance(c, TemporalUnique) and temporal_owner[i].get(ok, (None,))[0] == entity:
                        temporal_owner[i][ok] = (entity, False)
                if nk is not None and None not in nk:
                    uniq_idx[i][nk].add(entity)
                    touched[i].add(nk)
                    if isinstance(c, TemporalUnique):
                        prev = temporal_owner[i].get(nk)
                        if prev is None:
                            temporal_owner[i][nk] = (entity, True)
                        elif prev[0] != entity or not prev[1]:
                            out.append(Violation(t, c, tuple(sorted({prev[0], entity}))))
                            temporal_owner[i][nk] = (entity, True)
            if new is None:
                current.pop(entity, None)
            else:
                current[entity] = new
        for i, c in enumerate(constraints):
            for key in touched[i]:
                if isinstance(c, FunctionalDependency):
                    groups = fd_idx[i].get(key)
                    bad = groups is not None and len(groups) > 1
                    ents = tuple(sorted(e for s in groups.values() for e in s)) if bad else ()
                    if groups is not None and not groups:
                        del fd_idx[i][key]
                else:
                    holders = uniq_idx[i].get(key, ())
                    bad = len(holders) > 1
                    ents = tuple(sorted(holders))
                    if not holders and key in uniq_idx[i]:
                        del uniq_idx[i][key]
                if bad and key not in flagged[i]:
                    flagged[i].add(key)
                    if not isinstance(c, TemporalUnique):
                        out.append(Violation(t, c, ents))
                elif not bad:
                    flagged[i].discard(key)
    return out


def _hashable(value):
    if isinstance(value, (list, dict)):
        return encode_value(value)
    if isinstance(value, tuple):
        return tuple(_hashable(v) for v in value)
    return value


# -- serialization -------------------------------------------------------------


def history_lines(eh: EntityHistory, paths: Iterable[str]) -> Iterator[str]:
    eid = eh.entity_id
    dead = "null" if eh.deleted_at is None else str(eh.deleted_at)
    yield (f'{{"entity_id":{eid},"path":"{LIFESPAN}","value":null,'
           f'"valid_from":{eh.created_at},"valid_to":{dead}}}\n')
    for p in paths:
        pj = json.dumps(p, ensure_ascii=False)
        for v in eh.versions[p]:
            to = "null" if v.valid_to is None else str(v.valid_to)
            yield (f'{{"entity_id":{eid},"path":{pj},"value":{encode_value(v.value)},'
                   f'"valid_from":{v.valid_from},"valid_to":{to}}}\n')


def write_history(history: DataHistory, fh) -> None:
    for eh in history:
        fh.writelines(history_lines(eh, history.paths))


def iter_history_file(fh) -> Iterator[EntityHistory]:
    """Stream EntityHistory objects from a history JSON-lines file grouped by entity."""
    current = None
    for line in fh:
        if not line.strip():
            continue
        d = decode_json(line)
        eid = int(d["entity_id"])
        if d["path"] == LIFESPAN:
            if current is not None:
                yield current
            current = EntityHistory(eid, int(d["valid_from"]), None if d["valid_to"] is None else int(d["valid_to"]), {})
            continue
        if current is None or current.entity_id != eid:
            raise ValueError(f"history line for entity {eid} precedes its lifespan line")
        to = d["valid_to"]
        current.versions.setdefault(d["path"], []).append(
            VersionedValue(d["value"], int(d["valid_from"]), None if to is None else int(to)))
    if current is not None:
        yield current


def read_history(fh, paths=None, horizon: int = 0) -> DataHistory:
    h = DataHistory(list(paths or []), horizon=horizon)
    for eh in iter_history_file(fh):
        h.add(eh)
        if not paths:
            for p in eh.versions:
                if p not in h.paths:
                    h.paths.append(p)
    return h


__all__ = [
    "AttributePath", "Attribute", "Relationship", "Schema", "Unique", "TemporalUnique",
    "FunctionalDependency", "SemanticType", "EnrichedSchema", "VersionedValue", "EntityHistory",
    "DataHistory", "Violation", "value_at", "snapshot_at", "validate_history", "history_lines",
    "write_history", "iter_history_file", "read_history", "constraint_from_dict", "path_key",
    "to_plain", "LIFESPAN",
]
