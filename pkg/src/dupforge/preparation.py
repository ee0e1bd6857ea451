"""Phase 2: bring the clean input into a flat, fine-grained normal form.

Nested documents are flattened to dotted leaf paths (lists stay atomic
values), and text attributes that separate cleanly are split into
sub-attributes.  Every step is recorded so :meth:`PreparedDataset.invert`
reproduces the input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .exceptions import InconsistentInput
from .model import EnrichedSchema
from .profiling import enriched_from_dict, enriched_to_dict, profile_dataset
from .profiling.stats import DataProfile
from .profiling.temporal import ChangeModel
from .values import decode_json, encode_value, kind_of, unflatten

DEFAULT_SEPARATORS = (", ", ",", ";", " / ", " ")

# values of these types carry meaning in their punctuation; splitting them
# would destroy the format conventions used later
_ATOMIC_TYPES = {"date", "phone", "email", "identifier", "numeric-measure"}


@dataclass(frozen=True)
class SplitDecision:
    separator: str
    arity: int


def split_attribute(values, candidate_separators=DEFAULT_SEPARATORS) -> SplitDecision | None:
    """Separator and arity iff every non-null value splits the same way.

    Parts must be non-empty, so a null original is the only way to get
    null parts and the split is reversible by joining.
    """
    vals = [v for v in values if v is not None]
    if not vals or any(not isinstance(v, str) for v in vals):
        return None
    for sep in candidate_separators:
        arity = None
        for v in vals:
            parts = v.split(sep)
            if len(parts) < 2 or "" in parts or (arity is not None and len(parts) != arity):
                break
            arity = len(parts)
        else:
            return SplitDecision(sep, arity)
    return None


@dataclass
class PreparedDataset:
    snapshot: list  # [(EntityId, flat doc)]
    schema: EnrichedSchema
    split_map: dict = field(default_factory=dict)  # original path -> {"parts", "separator"}
    profile: DataProfile | None = None
    layout: dict = field(default_factory=dict)  # EntityId -> key order of input rows that deviate from input_paths
    input_paths: list = field(default_factory=list)
    input_segments: dict = field(default_factory=dict)

    @property
    def paths(self) -> list:
        return self.schema.schema.paths

    def __len__(self):
        return len(self.snapshot)

    def invert(self) -> list[dict]:
        """Input documents in their original shape and path space."""
        out = []
        for eid, doc in self.snapshot:
            out.append(unflatten(self.invert_doc(doc, self.layout.get(eid)), self.input_segments))
        return out

    def invert_doc(self, doc: dict, layout=None) -> dict:
        flat = dict(doc)
        for orig, spec in reversed(list(self.split_map.items())):
            parts = [flat.pop(p) for p in spec["parts"]]
            flat[orig] = None if all(v is None for v in parts) else spec["separator"].join(parts)
        return {p: flat[p] for p in (self.input_paths if layout is None else layout)}


def _flatten_row(doc: dict, row: int, segments: dict, out: dict, prefix=()):
    for key, value in doc.items():
        segs = prefix + (key,)
        if isinstance(value, dict) and value:
            _flatten_row(value, row, segments, out, segs)
            continue
        name = ".".join(segs)
        known = segments.setdefault(name, segs)
        if known != segs:
            raise InconsistentInput(f"path {name!r} is ambiguous in the input", [row])
        out[name] = value


def flatten_input(dataset) -> tuple[list, dict, list, dict]:
    docs, segments, paths, layout = [], {}, [], {}
    seen = set()
    for row, doc in enumerate(dataset):
        flat = {}
        _flatten_row(doc, row, segments, flat)
        for p in flat:
            if p not in seen:
                seen.add(p)
                paths.append(p)
        docs.append(flat)
    leaves = set(paths)
    bad = []
    for p in paths:
        parts = p.split(".")
        for i in range(1, len(parts)):
            if ".".join(parts[:i]) in leaves:
                bad.append(p)
    if bad:
        rows = [r for r, d in enumerate(docs) if any(p in d for p in bad)]
        raise InconsistentInput(f"paths {sorted(bad)} are both values and objects", rows)
    for row, flat in enumerate(docs):
        if len(flat) != len(paths) or list(flat) != paths:
            layout[row] = tuple(flat)
    return docs, segments, paths, layout


def _check_kinds(docs, paths):
    for p in paths:
        kinds: dict = {}
        for row, d in enumerate(docs):
            v = d.get(p)
            if v is not None:
                kinds.setdefault(kind_of(v), []).append(row)
        if len(kinds) > 1:
            major = max(kinds, key=lambda k: len(kinds[k]))
            rows = sorted(r for k, rs in kinds.items() if k != major for r in rs)
            raise InconsistentInput(f"path {p!r} mixes value kinds {sorted(kinds)}", rows)


def _part_names(path: str, arity: int, taken: set) -> list[str]:
    base = path
    while any(f"{base}_{i}" in taken for i in range(1, arity + 1)):
        base += "_"
    return [f"{base}_{i}" for i in range(1, arity + 1)]


def _split_fixpoint(docs, paths, segments, semantic, separators):
    split_map: dict = {}
    paths = list(paths)
    changed = True
    while changed:
        changed = False
        for p in list(paths):
            st = semantic.get(p)
            if st is not None and st.label in _ATOMIC_TYPES:
                continue
            decision = split_attribute([d[p] for d in docs], separators)
            if decision is None:
                continue
            names = _part_names(p, decision.arity, set(paths))
            for d in docs:
                v = d.pop(p)
                parts = [None] * decision.arity if v is None else v.split(decision.separator)
                d.update(zip(names, parts))
            i = paths.index(p)
            paths[i:i + 1] = names
            prefix = segments[p][:-1]
            for n in names:
                segments[n] = prefix + (n.rsplit(".", 1)[-1],)
                semantic[n] = st
            split_map[p] = {"parts": names, "separator": decision.separator}
            changed = True
    ordered = [{p: d[p] for p in paths} for d in docs]
    return ordered, paths, split_map


def _complete_input(dataset):
    docs, segments, paths, layout = flatten_input(dataset)
    for d in docs:
        for p in paths:
            d.setdefault(p, None)
    _check_kinds(docs, paths)
    return docs, segments, paths, layout


def _model_of(segments) -> str:
    return "document" if any(len(s) > 1 for s in segments.values()) else "relational"


def profile_input(dataset, max_lhs: int = 2):
    """(DataProfile, EnrichedSchema) of raw input documents, as used by :func:`normalize_schema`."""
    docs, segments, _, _ = _complete_input(list(dataset))
    return profile_dataset(docs, model=_model_of(segments), segments=segments, max_lhs=max_lhs)


def normalize_schema(dataset, profile: DataProfile | None = None, enriched: EnrichedSchema | None = None, *,
                     separators=DEFAULT_SEPARATORS, model: str | None = None, max_lhs: int = 2) -> PreparedDataset:
    """Flatten, type-check and split the input; EntityIds follow row order from 0.

    ``dataset`` is a list of (possibly nested) documents or a
    :class:`PreparedDataset`, in which case the result is unchanged unless
    further clean splits exist.
    """
    if isinstance(dataset, PreparedDataset):
        return _renormalize(dataset, separators, max_lhs)
    dataset = list(dataset)
    if profile is not None and profile.rows != len(dataset):
        raise InconsistentInput(f"profile covers {profile.rows} rows, dataset has {len(dataset)}")
    docs, segments, paths, layout = _complete_input(dataset)
    if model is None:
        model = _model_of(segments)
    input_paths = list(paths)
    input_segments = {p: segments[p] for p in paths}
    if enriched is None or profile is None:
        profile, enriched = profile_dataset(docs, model=model, segments=segments, max_lhs=max_lhs)
    semantic = dict(enriched.semantic_types)
    split_docs, new_paths, split_map = _split_fixpoint(docs, paths, dict(segments), semantic, separators)
    if split_map:
        segs = dict(input_segments)
        for orig, spec in split_map.items():
            prefix = segs[orig][:-1]
            for n in spec["parts"]:
                segs[n] = prefix + (n.rsplit(".", 1)[-1],)
        profile, new_enriched = profile_dataset(split_docs, model=model, segments=segs, max_lhs=max_lhs)
        new_enriched.change_model = _carry_change_model(enriched.change_model, new_enriched.change_model, split_map)
        new_enriched.update_rules = [r for r in enriched.update_rules
                                     if set(r.antecedent) | set(r.consequent) <= set(new_paths)]
        enriched = new_enriched
    snapshot = list(enumerate(split_docs))
    return PreparedDataset(snapshot, enriched, split_map, profile, layout, input_paths, input_segments)


def _carry_change_model(old: ChangeModel | None, new: ChangeModel, split_map: dict) -> ChangeModel:
    if old is None:
        return new
    rates = dict(new.update_rates)
    kinds = dict(new.kind_distribution)
    parent = {}
    for orig, spec in split_map.items():
        for n in spec["parts"]:
            parent[n] = parent.get(orig, orig)
    for p in rates:
        src = parent.get(p, p)
        if src in old.update_rates:
            rates[p] = old.update_rates[src]
            kinds[p] = dict(old.kind_distribution.get(src, kinds.get(p, {"replace": 1.0})))
    return ChangeModel(rates, kinds, old.insert_rate, old.delete_rate, list(old.inter_record_rules))


def _renormalize(prepared: PreparedDataset, separators, max_lhs) -> PreparedDataset:
    docs = [dict(d) for _, d in prepared.snapshot]
    segments = prepared.schema.schema.segment_map()
    semantic = dict(prepared.schema.semantic_types)
    split_docs, new_paths, split_map = _split_fixpoint(docs, list(prepared.paths), dict(segments), semantic, separators)
    if not split_map:
        return prepared
    merged = dict(prepared.split_map)
    merged.update(split_map)
    segs = dict(segments)
    for orig, spec in split_map.items():
        for n in spec["parts"]:
            segs[n] = segs[orig][:-1] + (n.rsplit(".", 1)[-1],)
    profile, enriched = profile_dataset(split_docs, model=prepared.schema.schema.model, segments=segs, max_lhs=max_lhs)
    enriched.change_model = _carry_change_model(prepared.schema.change_model, enriched.change_model, split_map)
    eids = [eid for eid, _ in prepared.snapshot]
    return PreparedDataset(list(zip(eids, split_docs)), enriched, merged, profile, dict(prepared.layout),
                           list(prepared.input_paths), dict(prepared.input_segments))


# -- files ---------------------------------------------------------------------


def prepared_lines(prepared: PreparedDataset):
    for eid, doc in prepared.snapshot:
        layout = prepared.layout.get(eid)
        extra = f',"layout":{json.dumps(list(layout), ensure_ascii=False)}' if layout is not None else ""
        yield f'{{"entity_id":{eid},"record":{encode_value(doc)}{extra}}}\n'


def write_prepared(prepared: PreparedDataset, data_path, schema_path) -> None:
    with open(data_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(prepared_lines(prepared))
    extra = {
        "split_map": prepared.split_map,
        "input_paths": prepared.input_paths,
        "input_segments": {p: list(s) for p, s in prepared.input_segments.items()},
    }
    with open(schema_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(enriched_to_dict(prepared.schema, prepared.profile, extra), fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def read_prepared(data_path, schema_path) -> PreparedDataset:
    with open(schema_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    enriched, profile = enriched_from_dict(meta)
    snapshot, layout = [], {}
    with open(data_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = decode_json(line)
            eid = int(d["entity_id"])
            snapshot.append((eid, d["record"]))
            if "layout" in d:
                layout[eid] = tuple(d["layout"])
    return PreparedDataset(snapshot, enriched, meta.get("split_map", {}), profile, layout,
                           list(meta.get("input_paths", enriched.schema.paths)),
                           {p: tuple(s) for p, s in meta.get("input_segments", {}).items()})
