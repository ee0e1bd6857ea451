from decimal import Decimal

import pytest

from dupforge.assembler import (DuplicateClustering, apply_integration_profile, assemble, build_gold_standard,
                                integrate_record, pair_lines)
from dupforge.engine import simulate
from dupforge.exceptions import DanglingRecord, InvalidKind
from dupforge.history import generate_history
from dupforge.mapping import Mapping
from dupforge.model import DataHistory, EntityHistory, VersionedValue, snapshot_at
from dupforge.preconfig import (CopySpec, ErrorProfile, GenerationConfig, IntegrationProfile, RepresentationProfile,
                                SourceHistory, SourceProfile)
from dupforge.rng import Stream

from conftest import context, make_config


def source(name, errors=None):
    return SourceHistory(name, [SourceProfile(RepresentationProfile(), errors or ErrorProfile())])


@pytest.fixture(scope="module")
def people_history(people_prepared):
    s = people_prepared.schema
    return generate_history(people_prepared, s.change_model, s.update_rules, s.constraints, 1000, 1.5, 3)


def run(prepared, history, cfg):
    ctx = context(prepared)
    return simulate(history, cfg, kinds=ctx.kinds, semantic=ctx.semantic, pools=ctx.pools)


def emitted(states):
    return [rid for st in states for rid in st.records]


def test_single_clean_source_gives_singletons(people_prepared, people_history):
    cfg = GenerationConfig(0, "cleaning", people_prepared.paths, [source("s0")], history={"horizon": 1000})
    states, entries = run(people_prepared, people_history, cfg)
    clustering, golden = build_gold_standard(entries, people_history, 1000)
    assert clustering.is_partition_of(emitted(states))
    assert all(len(m) == 1 for m in clustering.clusters.values())
    assert list(clustering.pairs()) == []


def test_copy_joins_the_original_cluster():
    h = DataHistory(["a", "b"], horizon=10)
    h.add(EntityHistory(7, 0, None, {"a": [VersionedValue("x", 0, None)], "b": [VersionedValue("y", 0, None)]}))
    copy = CopySpec(0, 1, 5, None, {"kind": "periodic", "interval": 100}, ["a", "b"])
    cfg = GenerationConfig(0, "linkage", ["a", "b"], [source("s0"), source("s1")], [copy], history={"horizon": 10})
    states, entries = simulate(h, cfg)
    clustering, golden = build_gold_standard(entries, h, 10)
    assert list(clustering.clusters) == [7]
    members = clustering.clusters[7]
    assert len(members) == 3
    assert sorted(s for s, _ in members) == ["s0", "s1", "s1"]
    assert len(list(clustering.pairs())) == 3
    assert [g.doc for g in golden] == [{"a": "x", "b": "y"}]


def test_golden_records_are_the_horizon_truth(people_prepared, people_history):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=3, copy_intensity=1.0, seed=3)
    states, entries = run(people_prepared, people_history, cfg)
    clustering, golden = build_gold_standard(entries, people_history, 1000)
    snap = dict(snapshot_at(people_history, 1000))
    assert [g.entity_id for g in golden] == sorted(clustering.clusters)
    for g in golden:
        eh = people_history.entities[g.entity_id]
        if g.entity_id in snap:
            assert g.doc == snap[g.entity_id]
        else:
            assert g.doc == eh.doc_at(eh.deleted_at - 1)


def test_gold_is_a_partition_of_every_emitted_record(people_prepared, people_history):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=4, copy_intensity=1.0, duplicate_rate=0.3,
                      seed=8)
    states, entries = run(people_prepared, people_history, cfg)
    clustering, _ = build_gold_standard(entries, people_history, 1000)
    assert clustering.is_partition_of(emitted(states))
    by_rid = {rid: rec.entity for st in states for rid, rec in st.records.items()}
    assert clustering.cluster_of() == by_rid


def test_unlinked_record_is_rejected(people_history):
    entries = [{"source": "s0", "record_id": "r", "entity_id": None, "op": "create", "path": None, "post": {}}]
    with pytest.raises(DanglingRecord):
        build_gold_standard(entries, people_history, 1000)
    entries[0]["entity_id"] = 10**9
    with pytest.raises(DanglingRecord):
        build_gold_standard(entries, people_history, 1000)


def test_partition_check_catches_overlap():
    c = DuplicateClustering()
    c.add(1, "s", "r1")
    c.add(2, "s", "r1")
    assert not c.is_partition_of(["r1"])
    c = DuplicateClustering()
    c.add(1, "s", "r1")
    assert not c.is_partition_of(["r1", "r2"])


def test_pairs_are_ordered():
    assert pair_lines(["b", "a", "c"]) == ["a,b\n", "b,c\n", "a,c\n"]


# -- integration ---------------------------------------------------------------------------


SOURCES = [("s0", [("r1", {"a": "1", "b": "2"}), ("r2", {"a": "3", "b": None})]),
           ("s1", [("r3", {"a": "5", "b": "6"})])]


def test_identity_integration_concatenates():
    out = apply_integration_profile(SOURCES, IntegrationProfile("t", []), ["a", "b"])
    assert out.fields == ["a", "b"]
    assert out.rows == [(name, rid, doc) for name, recs in SOURCES for rid, doc in recs]
    assert out.swaps == []


def test_rename_integration():
    out = apply_integration_profile(SOURCES, IntegrationProfile("t", [{"op": "rename", "path": "a", "to": "x"}]),
                                    ["a", "b"])
    assert out.fields == ["x", "b"]
    assert [d["x"] for _, _, d in out.rows] == ["1", "3", "5"]


def test_per_source_mappings_share_the_target():
    prof = IntegrationProfile("t", [], source_mappings={"s1": [{"op": "rename", "path": "a", "to": "x"}]})
    out = apply_integration_profile(SOURCES, prof, ["a", "b"])
    assert out.fields == ["a", "b", "x"]
    assert out.rows[2][2] == {"a": None, "b": "6", "x": "5"}


def test_mapping_error_rate_over_ten_thousand_records():
    recs = [(f"r{i}", {"a": f"a{i}", "b": f"b{i}", "c": f"c{i}"}) for i in range(10000)]
    out = apply_integration_profile([("s0", recs)], IntegrationProfile("t", [], 0.1), ["a", "b", "c"], seed=4)
    assert len(out.swaps) / 10000 == pytest.approx(0.1, abs=0.01)
    swapped = {rid: (x, y) for rid, x, y in out.swaps}
    for (_, rid, doc), (_, orig) in zip(out.rows, recs):
        if rid in swapped:
            x, y = swapped[rid]
            assert doc[x] == orig[y] and doc[y] == orig[x]
            assert sum(doc[f] != orig[f] for f in doc) == 2
        else:
            assert doc == orig


def test_swap_prefers_same_kind():
    m = Mapping([], ["a", "b", "n", "k"])
    for seed in range(50):
        _, (x, y) = integrate_record({"a": "x", "b": "y", "n": Decimal(1), "k": Decimal(2)}, m, 1.0, Stream(seed))
        assert {x, y} in ({"a", "b"}, {"n", "k"})


def test_integration_is_deterministic():
    prof = IntegrationProfile("t", [], 0.5)
    assert apply_integration_profile(SOURCES, prof, ["a", "b"], seed=1) == \
        apply_integration_profile(SOURCES, prof, ["a", "b"], seed=1)


# -- assembly -------------------------------------------------------------------------------


def test_cleaning_gives_one_scenario():
    gold = (DuplicateClustering(), [])
    out = assemble("cleaning", ["s0"], [], gold)
    assert len(out) == 1 and out[0].integrated is None and out[0].gold is gold


def test_integration_gives_one_scenario_per_profile():
    gold = (DuplicateClustering(), [])
    profiles = [apply_integration_profile(SOURCES, IntegrationProfile(n, []), ["a", "b"]) for n in ("t0", "t1")]
    out = assemble("integration", ["s0", "s1"], profiles, gold)
    assert [s.manifest["target"] for s in out] == ["t0", "t1"]
    assert all(s.sources == ["s0", "s1"] and s.gold is gold for s in out)


def test_assemble_rejects_bad_kinds():
    gold = (DuplicateClustering(), [])
    with pytest.raises(InvalidKind):
        assemble("merging", ["s0"], [], gold)
    with pytest.raises(InvalidKind):
        assemble("integration", ["s0", "s1"], [], gold)
