"""Phase 3: from a handful of high-level parameters to a complete generation config.

The pollution budget is a five-level tree (dataset, source, table,
attribute, error class).  A node without an explicit budget inherits its
parent's; an attribute's budget is spread over its error-class leaves by
semantic-type weights.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from itertools import combinations

from . import formats
from .data import load_table
from .errors import KINDS, LEAF_CLASSES, check_class
from .exceptions import InfeasibleConfig, InvalidKind, MissingProvenance, UnknownPath
from .mapping import Mapping
from .model import EnrichedSchema
from .rng import Stream, derive_key
from .values import LIST, TEXT, same_value

SCENARIO_KINDS = ("cleaning", "integration", "linkage")
LEVELS = ("dataset", "source", "table", "attribute", "error-class")
TABLE = "records"
CONFIG_VERSION = 1


@dataclass
class HighLevelParams:
    scenario_kind: str = "cleaning"
    n_sources: int = 1
    degree_of_pollution: float = 0.2
    duplicate_rate: float = 0.1
    volume_factor: float = 1.0
    copy_intensity: float = 0.0
    heterogeneity: float = 0.0
    horizon: int = 1000
    seed: int = 0
    integration_targets: int = 2
    mapping_error_rate: float = 0.05

    def __post_init__(self):
        if self.scenario_kind not in SCENARIO_KINDS:
            raise InvalidKind(f"scenario kind must be one of {SCENARIO_KINDS}, got {self.scenario_kind!r}")
        if self.n_sources < 1:
            raise InfeasibleConfig("at least one source is required")
        if self.scenario_kind == "cleaning" and self.n_sources != 1:
            raise InfeasibleConfig("a cleaning scenario has exactly one source")
        if not 0 <= self.degree_of_pollution <= 1:
            raise InfeasibleConfig("degree_of_pollution must lie in [0, 1]")
        if not 0 <= self.duplicate_rate < 1:
            raise InfeasibleConfig("duplicate_rate must lie in [0, 1)")
        if self.volume_factor <= 0:
            raise InfeasibleConfig("volume_factor must be positive")
        for name in ("copy_intensity", "heterogeneity", "mapping_error_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise InfeasibleConfig(f"{name} must lie in [0, 1]")
        if self.horizon < 0:
            raise InfeasibleConfig("horizon must be non-negative")
        if self.scenario_kind == "integration" and self.integration_targets < 1:
            raise InfeasibleConfig("an integration scenario needs at least one target schema")

    def to_dict(self):
        return asdict(self)


@dataclass
class PollutionNode:
    name: str
    level: str
    budget: float | None = None
    children: list = field(default_factory=list)

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"unknown hierarchy level {self.level!r}")
        if self.budget is not None and not 0 <= self.budget <= 1:
            raise ValueError(f"budget of {self.name} must lie in [0, 1]")
        depth = LEVELS.index(self.level)
        for c in self.children:
            if LEVELS.index(c.level) <= depth:
                raise ValueError(f"{c.name} ({c.level}) cannot sit below {self.name} ({self.level})")

    def to_dict(self):
        d = {"name": self.name, "level": self.level}
        if self.budget is not None:
            d["budget"] = self.budget
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["level"], d.get("budget"), [cls.from_dict(c) for c in d.get("children", [])])

    def find(self, *names) -> "PollutionNode":
        node = self
        for n in names:
            node = next(c for c in node.children if c.name == n)
        return node


# -- class applicability and weights -------------------------------------------


def applicability_mask(schema: EnrichedSchema, sample_docs=()) -> dict:
    """path -> error classes that can corrupt its values."""
    attrs = {a.name: a for a in schema.schema.attributes}
    fk_paths = {r.from_path for r in schema.schema.relationships if r.kind == "foreign-key"}
    text_paths = [p for p in schema.schema.paths if attrs[p].kind == TEXT]
    by_kind: dict = {}
    for p in schema.schema.paths:
        by_kind.setdefault(attrs[p].kind, []).append(p)
    mask = {}
    for p in schema.schema.paths:
        kind = attrs[p].kind
        label = schema.semantic_types.get(p).label if p in schema.semantic_types else "unknown"
        classes = []
        for cls in LEAF_CLASSES:
            if kind not in KINDS[cls]:
                continue
            if cls == "wrong_reference" and p not in fk_paths:
                continue
            if cls in ("merged_attributes", "split_error") and len(text_paths) < 2:
                continue
            if cls == "attribute_swap" and len(by_kind.get(kind, ())) < 2:
                continue
            if cls == "format_change" and not _has_format(p, label, sample_docs):
                continue
            classes.append(cls)
        mask[p] = classes
    return mask


def _has_format(path, label, sample_docs) -> bool:
    family = formats.family_for(label)
    if family is None:
        return False
    return any(formats.alternatives(d.get(path), family) for d in sample_docs[:200] if d.get(path) is not None)


def class_weights(label: str, classes, table=None) -> dict:
    """Weights for ``classes`` at one attribute, normalized to sum to 1."""
    if table is None:
        t = load_table("class_weights")
        table = t["weights"].get(label, t["weights"]["unknown"])
    raw = {c: float(table.get(c, 0.0)) for c in classes}
    total = sum(raw.values())
    if total <= 0:
        return {c: 1.0 / len(classes) for c in classes} if classes else {}
    return {c: w / total for c, w in raw.items()}


def build_pollution_tree(schema: EnrichedSchema, sources, budget: float, mask: dict) -> PollutionNode:
    attrs = []
    for p in schema.schema.paths:
        leaves = [PollutionNode(c, "error-class") for c in mask.get(p, [])]
        if leaves:
            attrs.append((p, leaves))
    root = PollutionNode("dataset", "dataset", budget, [
        PollutionNode(s, "source", None, [
            PollutionNode(TABLE, "table", None, [PollutionNode(p, "attribute", None, copy.deepcopy(leaves))
                                                 for p, leaves in attrs])])
        for s in sources])
    return root


def expand_pollution_hierarchy(tree: PollutionNode, schema: EnrichedSchema, weights=None) -> dict:
    """(source, path, error class) -> probability.

    ``weights`` optionally maps semantic label (or path) to a class-weight
    table, overriding the shipped one.  An explicit leaf budget is taken as
    the leaf probability directly.
    """
    if tree.level != "dataset":
        raise ValueError("hierarchy root must be the dataset level")
    known = set(schema.schema.paths)
    kinds = {a.name: a.kind for a in schema.schema.attributes}
    out = {}

    def walk(node, inherited, source):
        budget = node.budget if node.budget is not None else inherited
        if node.level == "source":
            source = node.name
        if node.level == "attribute":
            if node.name not in known:
                raise UnknownPath(f"pollution hierarchy names unknown path {node.name!r}")
            classes = [check_class(c.name) for c in node.children]
            label = schema.semantic_types[node.name].label if node.name in schema.semantic_types else "unknown"
            table = None
            if weights is not None:
                table = weights.get(node.name, weights.get(label))
            if table is None and kinds.get(node.name) == LIST:
                table = load_table("class_weights")["list_weights"]
            w = class_weights(label, classes, table)
            for leaf in node.children:
                prob = leaf.budget if leaf.budget is not None else budget * w[leaf.name]
                out[(source, node.name, leaf.name)] = prob
            return
        if node.level == "error-class":
            check_class(node.name)
            return
        for c in node.children:
            walk(c, budget, source)

    walk(tree, tree.budget if tree.budget is not None else 0.0, None)
    return out


# -- profiles --------------------------------------------------------------------


@dataclass
class ErrorSourceComponent:
    id: str
    paths: list
    error_class: str
    start: int
    end: int
    rate: float
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


@dataclass
class ErrorProfile:
    duplicate_rate: float = 0.0
    leaf: dict = field(default_factory=dict)  # path -> {class: probability}
    outdated_rate: float = 0.0
    mask: dict = field(default_factory=dict)  # path -> applicable classes
    maintenance_rate: float = 0.0
    components: list = field(default_factory=list)

    def __post_init__(self):
        for p, classes in self.leaf.items():
            for c, prob in classes.items():
                if not 0 <= prob <= 1:
                    raise InfeasibleConfig(f"probability of {c} at {p} outside [0, 1]")
        for name in ("duplicate_rate", "outdated_rate", "maintenance_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise InfeasibleConfig(f"{name} must lie in [0, 1]")
        if self.duplicate_rate >= 1:
            raise InfeasibleConfig("duplicate_rate must be below 1")

    def to_dict(self):
        return {"duplicate_rate": self.duplicate_rate, "outdated_rate": self.outdated_rate,
                "maintenance_rate": self.maintenance_rate, "leaf": self.leaf, "mask": self.mask,
                "components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("duplicate_rate", 0.0), {p: dict(v) for p, v in d.get("leaf", {}).items()},
                   d.get("outdated_rate", 0.0), {p: list(v) for p, v in d.get("mask", {}).items()},
                   d.get("maintenance_rate", 0.0),
                   [ErrorSourceComponent(**c) for c in d.get("components", [])])


@dataclass
class RepresentationProfile:
    data_model: str = "relational"
    mapping: list = field(default_factory=list)
    scope: dict = field(default_factory=lambda: {"kind": "all"})

    def to_dict(self):
        return {"data_model": self.data_model, "mapping": self.mapping, "scope": self.scope}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("data_model", "relational"), list(d.get("mapping", [])), dict(d.get("scope", {"kind": "all"})))


@dataclass
class SourceProfile:
    representation: RepresentationProfile
    errors: ErrorProfile
    valid_from: int = 0
    valid_to: int | None = None

    def to_dict(self):
        return {"valid_from": self.valid_from, "valid_to": self.valid_to,
                "representation": self.representation.to_dict(), "errors": self.errors.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(RepresentationProfile.from_dict(d["representation"]), ErrorProfile.from_dict(d["errors"]),
                   int(d.get("valid_from", 0)), d.get("valid_to"))


@dataclass
class SourceHistory:
    name: str
    profiles: list  # SourceProfile, validity periods partition [0, horizon]

    def active(self, t: int) -> int:
        for i, p in enumerate(self.profiles):
            if p.valid_from <= t and (p.valid_to is None or t < p.valid_to):
                return i
        return len(self.profiles) - 1

    def to_dict(self):
        return {"name": self.name, "profiles": [p.to_dict() for p in self.profiles]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], [SourceProfile.from_dict(p) for p in d["profiles"]])


@dataclass
class CopySpec:
    origin: int
    target: int
    start: int
    end: int | None
    trigger: dict  # {"kind": "periodic", "interval": n} or {"kind": "on-change"}
    scope: list
    transform: list = field(default_factory=list)
    transform_error_rate: float = 0.0

    def __post_init__(self):
        if self.origin == self.target:
            raise InfeasibleConfig("a source cannot copy from itself")
        if not 0 <= self.transform_error_rate <= 1:
            raise InfeasibleConfig("transform_error_rate must lie in [0, 1]")

    def active(self, t: int) -> bool:
        return self.start <= t and (self.end is None or t < self.end)

    def to_dict(self):
        return asdict(self)


@dataclass
class IntegrationProfile:
    name: str
    mapping: list
    mapping_error_rate: float = 0.0
    source_mappings: dict = field(default_factory=dict)  # source name -> steps overriding ``mapping``

    def to_dict(self):
        return asdict(self)


@dataclass
class GenerationConfig:
    seed: int
    scenario_kind: str
    paths: list
    sources: list  # SourceHistory
    copies: list = field(default_factory=list)
    integration_profiles: list = field(default_factory=list)
    history: dict = field(default_factory=dict)
    pollution_tree: dict | None = None
    adaptation: dict = field(default_factory=dict)
    maintenance_interval: int = 0
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "version": CONFIG_VERSION,
            "seed": self.seed,
            "scenario_kind": self.scenario_kind,
            "params": self.params,
            "paths": self.paths,
            "history": self.history,
            "adaptation": self.adaptation,
            "maintenance_interval": self.maintenance_interval,
            "sources": [s.to_dict() for s in self.sources],
            "copies": [c.to_dict() for c in self.copies],
            "integration_profiles": [p.to_dict() for p in self.integration_profiles],
            "pollution_tree": self.pollution_tree,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["seed"]), d["scenario_kind"], list(d["paths"]),
                   [SourceHistory.from_dict(s) for s in d["sources"]],
                   [CopySpec(**c) for c in d.get("copies", [])],
                   [IntegrationProfile(**p) for p in d.get("integration_profiles", [])],
                   dict(d.get("history", {})), d.get("pollution_tree"), dict(d.get("adaptation", {})),
                   int(d.get("maintenance_interval", 0)), dict(d.get("params", {})))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, sort_keys=False) + "\n"

    @classmethod
    def loads(cls, text: str) -> "GenerationConfig":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()

    def validate(self, paths=None) -> None:
        known = set(paths or self.paths)
        n = len(self.sources)
        if self.scenario_kind not in SCENARIO_KINDS:
            raise InvalidKind(self.scenario_kind)
        for s in self.sources:
            if not s.profiles or s.profiles[0].valid_from != 0:
                raise InfeasibleConfig(f"profile history of {s.name} must start at 0")
            for a, b in zip(s.profiles, s.profiles[1:]):
                if a.valid_to != b.valid_from:
                    raise InfeasibleConfig(f"profile periods of {s.name} must be contiguous")
            if s.profiles[-1].valid_to is not None:
                raise InfeasibleConfig(f"last profile of {s.name} must be open-ended")
            for p in s.profiles:
                for path in list(p.errors.leaf) + [q for c in p.errors.components for q in c.paths]:
                    if path not in known:
                        raise UnknownPath(f"{s.name} references unknown path {path!r}")
                Mapping(p.representation.mapping, self.paths)
        for c in self.copies:
            if not (0 <= c.origin < n and 0 <= c.target < n):
                raise InfeasibleConfig(f"copy {c.origin}->{c.target} references a missing source")
            for path in c.scope:
                if path not in known:
                    raise UnknownPath(f"copy scope references unknown path {path!r}")
        if not copy_graph_acyclic(self.copies, n):
            raise InfeasibleConfig("copy graph has a cycle")
        if self.scenario_kind == "integration" and not self.integration_profiles:
            raise InfeasibleConfig("integration scenarios need an integration profile")


def copy_graph_acyclic(copies, n_sources: int) -> bool:
    """True iff the copy graph restricted to every instant is acyclic.

    Checking the union over all time is sufficient and, for the generated
    topologies, also exact.
    """
    edges = {(c.origin, c.target) for c in copies}
    indeg = [0] * n_sources
    for _, b in edges:
        indeg[b] += 1
    ready = [i for i in range(n_sources) if indeg[i] == 0]
    seen = 0
    while ready:
        a = ready.pop()
        seen += 1
        for x, b in edges:
            if x == a:
                indeg[b] -= 1
                if indeg[b] == 0:
                    ready.append(b)
    return seen == n_sources


def topological_sources(copies, n_sources: int) -> list[int]:
    edges = sorted({(c.origin, c.target) for c in copies})
    indeg = [0] * n_sources
    for _, b in edges:
        indeg[b] += 1
    order, ready = [], sorted(i for i in range(n_sources) if indeg[i] == 0)
    while ready:
        a = ready.pop(0)
        order.append(a)
        for x, b in edges:
            if x == a:
                indeg[b] -= 1
                if indeg[b] == 0:
                    ready.append(b)
                    ready.sort()
    return order


# -- derivation --------------------------------------------------------------------


def _camel(path: str) -> str:
    head, _, leaf = path.rpartition(".")
    parts = leaf.split("_")
    new = parts[0] + "".join(x[:1].upper() + x[1:] for x in parts[1:])
    return (head + "." if head else "") + new


def _dominant_format(path, family, sample_docs):
    counts: dict = {}
    for d in sample_docs[:500]:
        f = formats.detect(d.get(path), family)
        if f:
            counts[f] = counts.get(f, 0) + 1
    return max(sorted(counts), key=counts.get) if counts else None


def step_catalog(schema: EnrichedSchema, sample_docs, rng: Stream) -> list:
    """Fixed list of heterogeneity steps: format divergences, merges, nesting, renames."""
    paths = schema.schema.paths
    attrs = {a.name: a for a in schema.schema.attributes}
    label = {p: (schema.semantic_types[p].label if p in schema.semantic_types else "unknown") for p in paths}
    steps = []
    for p in paths:
        family = formats.family_for(label[p])
        if family is None:
            continue
        src = _dominant_format(p, family, sample_docs)
        if src is None:
            continue
        alts = [f for f in formats.FAMILIES[family] if f != src]
        if alts:
            steps.append({"op": "format", "path": p, "format": rng.choice(alts), "from": src})
    for lab in ("person-name", "address-part"):
        group = [p for p in paths if label[p] == lab and attrs[p].kind == TEXT]
        for a, b in zip(group, group[1:]):
            if a.rpartition(".")[0] == b.rpartition(".")[0]:
                steps.append({"op": "merge", "paths": [a, b], "separator": " ", "to": f"{a}_{b.rpartition('.')[2]}"})
                break
    contact = [p for p in paths if label[p] in ("email", "phone") and "." not in p]
    if schema.schema.model == "document" and contact:
        steps.append({"op": "nest", "paths": contact, "under": "contact"})
    for p in paths:
        new = _camel(p)
        steps.append({"op": "rename", "path": p, "to": new if new != p else p + "_"})
    return steps


def _compose(candidates, fields, limit) -> list:
    """Greedily keep catalog steps that still apply after the previous ones."""
    chosen = []
    for step in candidates:
        if len(chosen) >= limit:
            break
        try:
            Mapping(chosen + [step], fields)
        except UnknownPath:
            continue
        chosen.append(step)
    return chosen


def _scope(kind: str, index: int, n: int, coverage: float) -> dict:
    if kind == "cleaning" or n == 1 or coverage >= 1:
        return {"kind": "all"}
    buckets = 1000
    start = (index * buckets) // n
    return {"kind": "hash_bucket", "buckets": buckets, "start": start, "width": int(round(coverage * buckets))}


def _leaf_table(expanded: dict, source: str) -> dict:
    leaf: dict = {}
    for (s, p, c), prob in expanded.items():
        if s == source:
            leaf.setdefault(p, {})[c] = min(1.0, prob)
    return leaf


def derive_preconfiguration(schema: EnrichedSchema, profile, params: HighLevelParams, sample_docs=(),
                            partition_size: int = 10000) -> GenerationConfig:
    """Deterministic in (schema, profile, params, sample)."""
    if isinstance(params, dict):
        params = HighLevelParams(**params)
    rng = Stream(derive_key(params.seed, "preconfig"))
    sample_docs = list(sample_docs)
    paths = list(schema.schema.paths)
    n = params.n_sources
    names = [f"source_{i}" for i in range(n)]
    h = params.heterogeneity
    horizon = params.horizon
    degree = params.degree_of_pollution

    mask = applicability_mask(schema, sample_docs)
    tree = build_pollution_tree(schema, names, degree, mask)
    expanded = expand_pollution_hierarchy(tree, schema)
    catalog = step_catalog(schema, sample_docs, rng)
    n_steps = int(round(h * len(catalog)))
    n_periods = 1 + int(h * 2)
    bounds = [horizon * k // n_periods for k in range(n_periods)] if horizon > 0 else [0]
    labels = {p: (schema.semantic_types[p].label if p in schema.semantic_types else "unknown") for p in paths}

    sources = []
    for i, name in enumerate(names):
        order = list(catalog)
        rng.shuffle(order)
        steps = _compose(order, paths, n_steps)
        spare = [s for s in order if s not in steps]
        leaf = _leaf_table(expanded, name)
        components = []
        if degree > 0 and horizon > 0:
            target = next((p for p in paths if "format_change" in mask[p]), None)
            cls = "format_change"
            if target is None:
                target = next((p for p in paths if "typo" in mask[p]), None)
                cls = "typo"
            if target is not None:
                components.append(ErrorSourceComponent(f"{name}-c0", [target], cls, horizon // 3,
                                                       2 * horizon // 3, min(1.0, 0.5 * degree)))
        coverage = 1.0 if n == 1 else 0.8
        profiles = []
        for k, start in enumerate(bounds):
            end = bounds[k + 1] if k + 1 < len(bounds) else None
            if k > 0:
                extra = _compose(spare, Mapping(steps, paths).output_fields, 1)
                if extra:
                    steps = steps + extra
                    spare = [s for s in spare if s not in extra]
                leaf = {p: {c: min(1.0, prob * (0.5 + rng.random())) for c, prob in classes.items()}
                        for p, classes in leaf.items()}
                if n > 1:
                    coverage = min(1.0, max(0.5, coverage + (rng.random() - 0.5) * 0.2 * h))
            errors = ErrorProfile(params.duplicate_rate, leaf, min(0.95, 0.25 * degree), mask,
                                  min(1.0, 0.1 * degree), components)
            rep = RepresentationProfile(schema.schema.model, list(steps), _scope(params.scenario_kind, i, n, coverage))
            profiles.append(SourceProfile(rep, errors, start, end))
        sources.append(SourceHistory(name, profiles))

    copies = []
    pairs = n * (n - 1) // 2
    m = int(round(params.copy_intensity * pairs))
    if m:
        perm = list(range(n))
        rng.shuffle(perm)
        edges = [(perm[a], perm[b]) for a, b in combinations(range(n), 2)]
        rng.shuffle(edges)
        for origin, target in sorted(edges[:m]):
            start = rng.randint(0, horizon // 2) if horizon else 0
            trigger = ({"kind": "periodic", "interval": max(1, horizon // 10)} if rng.random() < 0.5
                       else {"kind": "on-change"})
            copies.append(CopySpec(origin, target, start, None, trigger, list(paths), [],
                                   min(1.0, 0.1 * degree)))

    integration = []
    if params.scenario_kind == "integration":
        for k in range(params.integration_targets):
            if k == 0:
                steps = []
            else:
                order = [s for s in catalog if s["op"] != "format"]
                rng.shuffle(order)
                steps = _compose(order, paths, max(1, len(order) // 2))
            integration.append(IntegrationProfile(f"target_{k}", steps, params.mapping_error_rate))

    config = GenerationConfig(
        seed=params.seed, scenario_kind=params.scenario_kind, paths=paths, sources=sources, copies=copies,
        integration_profiles=integration,
        history={"horizon": horizon, "volume_factor": params.volume_factor, "partition_size": partition_size,
                 "max_retries": 10},
        pollution_tree=tree.to_dict(),
        adaptation={"enabled": True, "target": degree, "tolerance": 0.01, "max_steps": 6,
                    "batch_size": partition_size, "min_cells": 2000},
        maintenance_interval=max(1, horizon // 10) if horizon else 0,
        params=params.to_dict(),
    )
    config.validate()
    return config


# -- measure and adaptation ------------------------------------------------------------


def pollution_counts(truth: dict | None, record: dict) -> tuple[int, int]:
    """(corrupted cells, true cells) for one record; ``truth`` None means a dead entity."""
    if truth is None:
        n = len(record)
        return n, n
    bad = 0
    for p, v in truth.items():
        if p not in record or not same_value(record[p], v):
            bad += 1
    bad += sum(1 for p in record if p not in truth)
    return bad, len(truth)


def measure_pollution(clean, polluted, alignment) -> float:
    """Corrupted cells over true cells, for records linked to entities.

    ``clean`` maps EntityId to the true flat document at emission time
    (entities missing from it are dead); ``polluted`` yields
    (record_id, doc); ``alignment`` maps record ids to EntityIds or is a
    provenance log of dicts with ``record_id`` and ``entity_id``.
    """
    truth = dict(clean) if not isinstance(clean, dict) else clean
    if isinstance(alignment, dict):
        link = alignment
    else:
        link = {}
        for e in alignment:
            if e.get("entity_id") is not None:
                link.setdefault(e["record_id"], e["entity_id"])
    bad = total = 0
    for rid, doc in polluted:
        if rid not in link:
            raise MissingProvenance(f"record {rid} has no entity link")
        b, t = pollution_counts(truth.get(link[rid]), doc)
        bad += b
        total += t
    return bad / total if total else 0.0


def scale_factor(target: float, measured: float) -> float:
    if measured <= 0:
        return 1.0 if target <= 0 else 2.0
    return min(2.0, max(0.5, target / measured))


def adapt_parameters(target: float, measured: float, config: GenerationConfig, source=None) -> GenerationConfig:
    """Rescale the pollution knobs of one source (or all) by clamp(target/measured, 0.5, 2)."""
    f = scale_factor(target, measured)
    if f == 1.0:
        return config
    out = GenerationConfig.from_dict(copy.deepcopy(config.to_dict()))
    for i, s in enumerate(out.sources):
        if source is not None and i != source and s.name != source:
            continue
        for prof in s.profiles:
            e = prof.errors
            e.leaf = {p: {c: min(1.0, prob * f) for c, prob in classes.items()} for p, classes in e.leaf.items()}
            e.outdated_rate = min(0.95, e.outdated_rate * f)
            e.maintenance_rate = min(1.0, e.maintenance_rate * f)
            for comp in e.components:
                comp.rate = min(1.0, comp.rate * f)
    return out


__all__ = [
    "HighLevelParams", "PollutionNode", "ErrorProfile", "RepresentationProfile", "SourceProfile", "SourceHistory",
    "CopySpec", "IntegrationProfile", "GenerationConfig", "ErrorSourceComponent", "derive_preconfiguration",
    "expand_pollution_hierarchy", "measure_pollution", "adapt_parameters", "applicability_mask",
    "build_pollution_tree", "class_weights", "copy_graph_acyclic", "topological_sources",
]
