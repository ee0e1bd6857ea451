"""Per-attribute statistics over a snapshot."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal

from ..values import as_text, encode_value, kind_of


@dataclass
class PathStats:
    count: int = 0  # non-null values
    nulls: int = 0
    distinct: int = 0
    length_min: int | None = None
    length_max: int | None = None
    length_sum: int = 0
    tokens_min: int | None = None
    tokens_max: int | None = None
    tokens_sum: int = 0
    kinds: dict = field(default_factory=dict)
    number_min: Decimal | None = None
    number_max: Decimal | None = None
    number_scale: int = 0
    _seen: set = field(default_factory=set, repr=False, compare=False)

    def add(self, value) -> None:
        if value is None:
            self.nulls += 1
            self.kinds["null"] = self.kinds.get("null", 0) + 1
            return
        kind = kind_of(value)
        self.kinds[kind] = self.kinds.get(kind, 0) + 1
        self.count += 1
        self._seen.add(value if kind in ("text", "number", "boolean") else encode_value(value))
        n = len(value) if kind == "list" else len(as_text(value))
        t = len(as_text(value).split()) if kind != "list" else len(value)
        self.length_sum += n
        self.tokens_sum += t
        if self.length_min is None or n < self.length_min:
            self.length_min = n
        if self.length_max is None or n > self.length_max:
            self.length_max = n
        if self.tokens_min is None or t < self.tokens_min:
            self.tokens_min = t
        if self.tokens_max is None or t > self.tokens_max:
            self.tokens_max = t
        if kind == "number":
            if self.number_min is None or value < self.number_min:
                self.number_min = value
            if self.number_max is None or value > self.number_max:
                self.number_max = value
            exp = value.as_tuple().exponent
            if isinstance(exp, int) and -exp > self.number_scale:
                self.number_scale = -exp

    def merge(self, other: "PathStats") -> "PathStats":
        """Combine two partial accumulators (commutative and associative)."""
        out = PathStats()
        out.count = self.count + other.count
        out.nulls = self.nulls + other.nulls
        out._seen = self._seen | other._seen
        out.distinct = len(out._seen)
        out.length_sum = self.length_sum + other.length_sum
        out.tokens_sum = self.tokens_sum + other.tokens_sum
        out.length_min = _min(self.length_min, other.length_min)
        out.length_max = _max(self.length_max, other.length_max)
        out.tokens_min = _min(self.tokens_min, other.tokens_min)
        out.tokens_max = _max(self.tokens_max, other.tokens_max)
        out.number_min = _min(self.number_min, other.number_min)
        out.number_max = _max(self.number_max, other.number_max)
        out.number_scale = max(self.number_scale, other.number_scale)
        out.kinds = dict(self.kinds)
        for k, v in other.kinds.items():
            out.kinds[k] = out.kinds.get(k, 0) + v
        return out

    def finish(self) -> "PathStats":
        self.distinct = len(self._seen)
        return self

    @property
    def length_mean(self) -> float:
        return self.length_sum / self.count if self.count else 0.0

    @property
    def tokens_mean(self) -> float:
        return self.tokens_sum / self.count if self.count else 0.0

    def null_rate(self, rows: int) -> float:
        return (rows - self.count) / rows if rows else 0.0

    @property
    def dominant_kind(self) -> str:
        kinds = {k: v for k, v in self.kinds.items() if k != "null"}
        if not kinds:
            return "text"
        return max(sorted(kinds), key=lambda k: kinds[k])

    def to_dict(self, rows: int) -> dict:
        return {
            "count": self.count,
            "null_rate": self.null_rate(rows),
            "distinct": self.distinct,
            "length": {"min": self.length_min or 0, "mean": self.length_mean, "max": self.length_max or 0},
            "tokens": {"min": self.tokens_min or 0, "mean": self.tokens_mean, "max": self.tokens_max or 0},
            "kinds": dict(sorted(self.kinds.items())),
            "number": None if self.number_min is None else {
                "min": str(self.number_min), "max": str(self.number_max), "scale": self.number_scale},
        }

    @classmethod
    def from_dict(cls, d: dict, rows: int) -> "PathStats":
        s = cls(count=d["count"], distinct=d["distinct"])
        s.nulls = rows - d["count"]
        s.length_min, s.length_max = d["length"]["min"], d["length"]["max"]
        s.length_sum = round(d["length"]["mean"] * d["count"])
        s.tokens_min, s.tokens_max = d["tokens"]["min"], d["tokens"]["max"]
        s.tokens_sum = round(d["tokens"]["mean"] * d["count"])
        s.kinds = dict(d["kinds"])
        if d.get("number"):
            s.number_min = Decimal(d["number"]["min"])
            s.number_max = Decimal(d["number"]["max"])
            s.number_scale = d["number"]["scale"]
        return s


def _min(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a if a <= b else b


def _max(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a if a >= b else b


@dataclass
class DataProfile:
    rows: int = 0
    paths: dict = field(default_factory=dict)  # path key -> PathStats
    relationships: list = field(default_factory=list)

    def stats(self, path: str) -> PathStats:
        return self.paths[path]

    def to_dict(self) -> dict:
        return {"rows": self.rows,
                "paths": {p: s.to_dict(self.rows) for p, s in self.paths.items()},
                "relationships": self.relationships}

    @classmethod
    def from_dict(cls, d: dict) -> "DataProfile":
        rows = d["rows"]
        return cls(rows, {p: PathStats.from_dict(s, rows) for p, s in d["paths"].items()},
                   list(d.get("relationships", [])))


def _docs(dataset):
    for item in dataset:
        yield item[1] if isinstance(item, tuple) else item


def profile_attributes(dataset, relationships=()) -> DataProfile:
    """Statistics for every path in a flat-document snapshot.

    Stats are over non-null values; the null rate is over all rows (rows that
    lack a path count as null).  Tokens are split on Unicode whitespace.
    """
    profile = DataProfile()
    order: dict = {}
    docs = list(_docs(dataset))
    for doc in docs:
        for key in doc:
            if key not in order:
                order[key] = PathStats()
    for doc in docs:
        for key, stats in order.items():
            stats.add(doc.get(key))
    profile.rows = len(docs)
    profile.paths = {k: s.finish() for k, s in order.items()}
    for key, s in profile.paths.items():
        if s.kinds.get("list"):
            nonempty = sum(1 for d in docs if isinstance(d.get(key), list) and d[key])
            sizes = [len(d[key]) for d in docs if isinstance(d.get(key), list)]
            nested = any(isinstance(x, dict) for d in docs if isinstance(d.get(key), list) for x in d[key])
            profile.relationships.append({
                "kind": "nesting" if nested else "list",
                "from": key,
                "frequency": nonempty / len(docs) if docs else 0.0,
                "count": {"min": min(sizes), "mean": sum(sizes) / len(sizes), "max": max(sizes)},
            })
    for rel in relationships:
        if rel.kind != "foreign-key":
            continue
        targets = {d.get(rel.to_path) for d in docs} - {None}
        refs = [d.get(rel.from_path) for d in docs if d.get(rel.from_path) is not None]
        hits = sum(1 for r in refs if r in targets)
        profile.relationships.append({
            "kind": "foreign-key", "from": rel.from_path, "to": rel.to_path,
            "frequency": hits / len(refs) if refs else 0.0, "count": {"references": len(refs)},
        })
    return profile
