"""Phase 1: data profile, constraints, semantic types, temporal characteristics."""

from __future__ import annotations

import json

from ..model import (Attribute, EnrichedSchema, FunctionalDependency, Relationship, Schema, SemanticType,
                     TemporalUnique, Unique, constraint_from_dict)
from .constraints import discover_constraints
from .semantic import classify_semantic_type
from .stats import DataProfile, PathStats, profile_attributes
from .temporal import (ChangeModel, UpdateRule, UpdateTransaction, change_model_from_history,
                       default_change_model, extract_update_transactions, mine_update_dependencies)

DEFAULT_MIN_SUPPORT = 0.1
DEFAULT_MIN_CONFIDENCE = 0.7

__all__ = [
    "DataProfile", "PathStats", "profile_attributes", "classify_semantic_type", "discover_constraints",
    "ChangeModel", "UpdateRule", "UpdateTransaction", "extract_update_transactions",
    "mine_update_dependencies", "profile_dataset", "enriched_to_dict", "enriched_from_dict",
]

SAMPLE_SIZE = 2000


def profile_dataset(docs, *, model="relational", segments=None, relationships=(), max_lhs=2,
                    temporal_keys=True, history=None, window=1,
                    min_support=DEFAULT_MIN_SUPPORT, min_confidence=DEFAULT_MIN_CONFIDENCE):
    """Profile a flat snapshot and build the enriched schema.

    With ``temporal_keys`` every single-column Unique on an identifier or
    email column is also declared TemporalUnique.  If an observed
    ``history`` is given, the change model and update rules are mined from
    it; otherwise defaults per semantic type are used.
    """
    docs = [d[1] if isinstance(d, tuple) else d for d in docs]
    profile = profile_attributes(docs, relationships)
    semantic = {}
    attributes = []
    for path, stats in profile.paths.items():
        sample = [d.get(path) for d in docs[:SAMPLE_SIZE]]
        semantic[path] = classify_semantic_type(path, sample)
        attributes.append(Attribute(path, semantic[path].label, stats.dominant_kind, stats.nulls > 0,
                                    tuple(segments[path]) if segments and path in segments else (path,)))
    schema = Schema(model, attributes, list(relationships) + [
        Relationship("nesting", r["from"], r["from"]) for r in profile.relationships if r["kind"] == "nesting"])
    constraints = discover_constraints(docs, max_lhs)
    if temporal_keys:
        for c in list(constraints):
            if isinstance(c, Unique) and len(c.paths) == 1 and semantic[c.paths[0]].label in ("identifier", "email"):
                constraints.append(TemporalUnique(c.paths))
    constants = {c.rhs[0] for c in constraints if isinstance(c, FunctionalDependency) and not c.lhs}
    if history is not None:
        change = change_model_from_history(history)
        rules = mine_update_dependencies(extract_update_transactions(history), window, min_support, min_confidence)
    else:
        change = default_change_model(profile.paths, semantic, constants)
        rules = []
    enriched = EnrichedSchema(schema, constraints, semantic, change, rules)
    return profile, enriched


def enriched_to_dict(enriched: EnrichedSchema, profile: DataProfile | None = None, extra=None) -> dict:
    out = {
        "schema": enriched.schema.to_dict(),
        "constraints": [c.to_dict() for c in enriched.constraints],
        "semantic_types": {p: s.to_dict() for p, s in enriched.semantic_types.items()},
        "change_model": enriched.change_model.to_dict() if enriched.change_model else None,
        "update_rules": [r.to_dict() for r in enriched.update_rules],
    }
    if profile is not None:
        out["profile"] = profile.to_dict()
    if extra:
        out.update(extra)
    return out


def enriched_from_dict(d: dict) -> tuple[EnrichedSchema, DataProfile | None]:
    enriched = EnrichedSchema(
        Schema.from_dict(d["schema"]),
        [constraint_from_dict(c) for c in d.get("constraints", [])],
        {p: SemanticType(s["label"], s["confidence"]) for p, s in d.get("semantic_types", {}).items()},
        ChangeModel.from_dict(d["change_model"]) if d.get("change_model") else None,
        [UpdateRule.from_dict(r) for r in d.get("update_rules", [])],
    )
    profile = DataProfile.from_dict(d["profile"]) if d.get("profile") else None
    return enriched, profile


def dumps_enriched(enriched, profile=None, extra=None) -> str:
    return json.dumps(enriched_to_dict(enriched, profile, extra), indent=2, ensure_ascii=False) + "\n"
