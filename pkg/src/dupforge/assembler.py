"""Phase 6: gold standard, integration into target schemas and scenario packaging."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from .exceptions import DanglingRecord, InvalidKind
from .mapping import Mapping
from .model import DataHistory
from .preconfig import SCENARIO_KINDS, IntegrationProfile
from .rng import Stream, derive_key
from .values import csv_cell, csv_line, encode_value, kind_of, unflatten


@dataclass
class DuplicateClustering:
    clusters: dict = field(default_factory=dict)  # EntityId -> [(source, record_id), ...]

    def add(self, entity, source, rid) -> None:
        self.clusters.setdefault(entity, []).append((source, rid))

    def record_ids(self) -> list:
        return [rid for members in self.clusters.values() for _, rid in members]

    def cluster_of(self) -> dict:
        return {rid: eid for eid, members in self.clusters.items() for _, rid in members}

    def pairs(self):
        for eid, members in self.clusters.items():
            for (_, a), (_, b) in combinations(members, 2):
                yield (a, b) if a < b else (b, a)

    def is_partition_of(self, record_ids) -> bool:
        ids = self.record_ids()
        return len(ids) == len(set(ids)) and set(ids) == set(record_ids) and all(self.clusters.values())


@dataclass
class GoldenRecord:
    entity_id: int
    doc: dict


@dataclass
class IntegratedDataset:
    profile: str
    fields: list
    rows: list = field(default_factory=list)  # (source, record_id, doc)
    swaps: list = field(default_factory=list)  # (record_id, field_a, field_b)


@dataclass
class Scenario:
    kind: str
    sources: list
    gold: tuple
    integrated: IntegratedDataset | None = None
    manifest: dict = field(default_factory=dict)


def build_gold_standard(provenance, history: DataHistory, horizon: int):
    """Cluster the records alive at the end of the log by their entity link."""
    live: dict = {}
    for e in provenance:
        key = (e["source"], e["record_id"])
        if e["op"] in ("create", "copy") and e["path"] is None:
            if e.get("entity_id") is None:
                raise DanglingRecord(f"record {e['record_id']} in {e['source']} has no entity link")
            live[key] = e["entity_id"]
        elif e["op"] == "delete":
            live.pop(key, None)
    clustering = DuplicateClustering()
    for (source, rid), eid in live.items():
        if eid not in history.entities:
            raise DanglingRecord(f"record {rid} links to unknown entity {eid}")
        clustering.add(eid, source, rid)
    golden = [GoldenRecord(eid, golden_doc(history.entities[eid], horizon)) for eid in sorted(clustering.clusters)]
    return clustering, golden


def golden_doc(eh, horizon: int) -> dict:
    """True values at ``horizon``; entities deleted earlier keep their last alive state."""
    return eh.truth_doc(horizon)


def integrate_record(doc: dict, mapping: Mapping, rate: float, rng) -> tuple[dict, tuple | None]:
    """Map one canonical record into a target schema, maybe swapping one value pair."""
    out = mapping.apply(doc)
    if rate <= 0 or rng.random() >= rate:
        return out, None
    fields = mapping.output_fields
    filled = [f for f in fields if out.get(f) is not None]
    a = rng.choice(filled or fields)
    kind = kind_of(out.get(a))
    others = [f for f in fields if f != a]
    b = rng.choice([f for f in others if kind_of(out.get(f)) == kind] or others)
    out[a], out[b] = out.get(b), out.get(a)
    return out, (a, b)


def integration_rng(seed: int, profile: str, rid: str) -> Stream:
    return Stream(derive_key(seed, "integrate", profile, rid))


def apply_integration_profile(sources, profile: IntegrationProfile, paths, seed: int = 0) -> IntegratedDataset:
    """``sources`` is a list of (name, [(record_id, canonical doc), ...])."""
    mappings = {}
    default = Mapping(profile.mapping, paths)
    result = IntegratedDataset(profile.name, list(default.output_fields))
    for name, records in sources:
        m = mappings.get(name)
        if m is None:
            steps = profile.source_mappings.get(name, profile.mapping)
            m = mappings[name] = Mapping(steps, paths)
            if m.output_fields != result.fields:
                result.fields += [f for f in m.output_fields if f not in result.fields]
        for rid, doc in records:
            out, swap = integrate_record(doc, m, profile.mapping_error_rate, integration_rng(seed, profile.name, rid))
            result.rows.append((name, rid, {f: out.get(f) for f in result.fields}))
            if swap:
                result.swaps.append((rid,) + swap)
    return result


def assemble(kind: str, sources, profiles, gold, manifest=None) -> list:
    """One scenario per integration profile, or exactly one for cleaning and linkage.

    For integration, ``profiles`` may hold IntegratedDataset objects (already
    applied) or IntegrationProfile objects (recorded by name only).
    """
    if kind not in SCENARIO_KINDS:
        raise InvalidKind(f"scenario kind must be one of {SCENARIO_KINDS}, got {kind!r}")
    base = dict(manifest or {})
    names = [s if isinstance(s, str) else s[0] for s in sources]
    if kind == "cleaning" and len(names) != 1:
        raise InvalidKind("a cleaning scenario has exactly one source")
    if kind != "integration":
        return [Scenario(kind, names, gold, None, dict(base, kind=kind))]
    if not profiles:
        raise InvalidKind("an integration scenario needs at least one integration profile")
    out = []
    for p in profiles:
        integrated = p if isinstance(p, IntegratedDataset) else None
        name = p.profile if integrated is not None else p.name
        out.append(Scenario(kind, names, gold, integrated, dict(base, kind=kind, target=name)))
    return out


# -- serialization ----------------------------------------------------------------------


def export_header(fields) -> str:
    return csv_line(["record_id"] + list(fields))


def export_line(rid: str, doc: dict, fields, data_model: str, segments=None) -> str:
    """One exported record: a CSV row (relational) or a JSON line (document)."""
    if data_model == "relational":
        return csv_line([rid] + [csv_cell(doc.get(f)) for f in fields])
    return encode_value(dict({"record_id": rid}, **unflatten({f: doc.get(f) for f in fields}, segments))) + "\n"


def cluster_line(rid: str, eid: int, source: str) -> str:
    return f'{{"record_id":"{rid}","cluster_id":{eid},"source":"{source}"}}\n'


def pair_lines(rids) -> list:
    return [f"{a},{b}\n" if a < b else f"{b},{a}\n" for a, b in combinations(rids, 2)]


def golden_line(eid: int, doc: dict, segments=None) -> str:
    return f'{{"cluster_id":{eid},"record":{encode_value(unflatten(doc, segments))}}}\n'


def integrated_header(fields) -> str:
    return csv_line(["source", "record_id"] + list(fields))


def integrated_line(source: str, rid: str, doc: dict, fields, data_model: str, segments=None) -> str:
    if data_model == "relational":
        return csv_line([source, rid] + [csv_cell(doc.get(f)) for f in fields])
    body = unflatten({f: doc.get(f) for f in fields}, segments)
    return encode_value(dict({"source": source, "record_id": rid}, **body)) + "\n"


def swap_line(rid: str, a: str, b: str) -> str:
    return f'{{"record_id":"{rid}","swapped":[{encode_value(a)},{encode_value(b)}]}}\n'


__all__ = [
    "DuplicateClustering", "GoldenRecord", "IntegratedDataset", "Scenario", "build_gold_standard",
    "apply_integration_profile", "assemble", "integrate_record", "golden_doc", "export_line", "export_header",
    "cluster_line", "pair_lines", "golden_line", "integrated_header", "integrated_line", "swap_line",
]
