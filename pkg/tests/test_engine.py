from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dupforge.engine import Simulator, make_outdated, replay, simulate
from dupforge.exceptions import InfeasibleConfig, NoHistory
from dupforge.history import generate_history
from dupforge.mapping import Mapping
from dupforge.model import DataHistory, EntityHistory, VersionedValue, snapshot_at
from dupforge.preconfig import (CopySpec, ErrorProfile, GenerationConfig, RepresentationProfile, SourceHistory,
                                SourceProfile)
from dupforge.values import encode_value

from conftest import context, make_config

TOY_PATHS = ["a", "b", "c", "d", "e"]


def toy_history(n, paths=TOY_PATHS, horizon=100):
    h = DataHistory(list(paths), horizon=horizon)
    for eid in range(n):
        h.add(EntityHistory(eid, 0, None, {p: [VersionedValue(f"{p}value{eid}", 0, None)] for p in paths}))
    return h


def source(name, errors=None, **rep):
    return SourceHistory(name, [SourceProfile(RepresentationProfile(**rep), errors or ErrorProfile())])


def config(paths, sources, horizon, copies=(), seed=0, maintenance_interval=0):
    cfg = GenerationConfig(seed, "linkage" if len(sources) > 1 else "cleaning", list(paths), list(sources),
                           list(copies), history={"horizon": horizon}, maintenance_interval=maintenance_interval)
    cfg.validate()
    return cfg


def stores(states):
    return {st.name: {rid: rec.doc for rid, rec in st.records.items()} for st in states}


def by_entity(state):
    out = {}
    for rec in state.records.values():
        out.setdefault(rec.entity, []).append(rec.doc)
    return out


@pytest.fixture(scope="module")
def people_history(people_prepared):
    s = people_prepared.schema
    return generate_history(people_prepared, s.change_model, s.update_rules, s.constraints, 1000, 1.5, 3)


def run(prepared, history, cfg):
    ctx = context(prepared)
    return simulate(history, cfg, kinds=ctx.kinds, semantic=ctx.semantic, pools=ctx.pools)


# -- pass-through and world reactions ------------------------------------------------------


def test_error_free_source_equals_horizon_snapshot(people_prepared, people_history):
    cfg = config(people_prepared.paths, [source("s0")], 1000)
    states, entries = run(people_prepared, people_history, cfg)
    got = sorted((rec.entity, encode_value(rec.doc)) for rec in states[0].records.values())
    want = [(eid, encode_value(doc)) for eid, doc in snapshot_at(people_history, 1000)]
    assert got == want
    assert not [e for e in entries if e["op"] == "error"]


def test_missing_every_event_freezes_the_initial_load(people_prepared, people_history):
    cfg = config(people_prepared.paths, [source("s0", ErrorProfile(outdated_rate=1.0))], 1000)
    states, _ = run(people_prepared, people_history, cfg)
    got = {eid: docs for eid, docs in by_entity(states[0]).items()}
    want = {eid: [doc] for eid, doc in snapshot_at(people_history, 0)}
    assert got == want
    changed = sum(1 for eid, doc in snapshot_at(people_history, 1000) if eid in want and want[eid][0] != doc)
    assert changed > 0


def test_duplicate_rate_over_ten_thousand_inserts():
    h = toy_history(10000)
    cfg = config(TOY_PATHS, [source("s0", ErrorProfile(duplicate_rate=0.2))], 100)
    states, entries = simulate(h, cfg)
    counts = by_entity(states[0])
    assert len(counts) == 10000
    frac = sum(1 for docs in counts.values() if len(docs) >= 2) / 10000
    assert frac == pytest.approx(0.2, abs=0.02)
    extra = [e for e in entries if e["op"] == "create" and e["class"] == "duplicate_record"]
    assert len(extra) == sum(len(d) - 1 for d in counts.values())


def test_records_link_to_one_entity_and_ids_are_unique(people_prepared, people_history):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=3, copy_intensity=1.0, seed=4)
    states, entries = run(people_prepared, people_history, cfg)
    ids = [rid for st in states for rid in st.records]
    assert len(ids) == len(set(ids))
    for st in states:
        for rec in st.records.values():
            assert rec.entity in people_history.entities


# -- copies ----------------------------------------------------------------------------


def test_copied_cells_equal_origin_at_copy_time(people_prepared, people_history):
    noisy = ErrorProfile(leaf={p: {"typo": 0.2} for p in people_prepared.paths})
    copy = CopySpec(0, 1, 0, None, {"kind": "periodic", "interval": 50}, list(people_prepared.paths))
    cfg = config(people_prepared.paths, [source("s0", noisy), source("s1")], 1000, [copy])
    states, entries = run(people_prepared, people_history, cfg)
    live = {"s0": {}, "s1": {}}
    inherited = 0
    checked = 0
    for e in entries:
        store = live[e["source"]]
        if e["op"] in ("create", "copy") and e["path"] is None:
            store[e["record_id"]] = dict(e["post"])
            if e["origin"]:
                origin = live[e["origin"]["source"]][e["origin"]["record_id"]]
                assert encode_value(origin) == encode_value(e["post"])
                checked += 1
        elif e["op"] == "copy":
            origin = live[e["origin"]["source"]][e["origin"]["record_id"]]
            assert encode_value(origin[e["path"]]) == encode_value(e["post"])
            store[e["record_id"]][e["path"]] = e["post"]
            checked += 1
        elif e["op"] in ("set", "error"):
            store[e["record_id"]][e["path"]] = e["post"]
        elif e["op"] == "delete":
            del store[e["record_id"]]
    assert checked > 0
    # errors made in s0 reach s1 unchanged
    s0_errors = {(e["entity_id"], e["path"], encode_value(e["post"])) for e in entries
                 if e["source"] == "s0" and e["op"] == "error"}
    for rec in states[1].records.values():
        for p, v in rec.doc.items():
            if (rec.entity, p, encode_value(v)) in s0_errors:
                inherited += 1
    assert inherited > 0


def test_transform_error_rate():
    h = toy_history(2000)
    copy = CopySpec(0, 1, 0, None, {"kind": "periodic", "interval": 1000}, TOY_PATHS, transform_error_rate=0.1)
    cfg = config(TOY_PATHS, [source("s0"), source("s1")], 100, [copy])
    states, entries = simulate(h, cfg)
    copied = sum(len(e["post"]) for e in entries if e["op"] == "copy" and e["path"] is None)
    assert copied == 10000
    corrupted = {(e["record_id"], e["path"]) for e in entries if e["source"] == "s1" and e["op"] == "error"}
    assert len(corrupted) / copied == pytest.approx(0.1, abs=0.01)


def test_copy_transform_formats_values(people_prepared, people_history):
    dates = [p for p, s in people_prepared.schema.semantic_types.items() if s.label == "date"]
    assert dates
    p = dates[0]
    step = {"op": "format", "path": p, "format": "date:dmy_dot", "from": "date:iso"}
    copy = CopySpec(0, 1, 0, None, {"kind": "periodic", "interval": 500}, [p], [step])
    cfg = config(people_prepared.paths, [source("s0"), source("s1")], 1000, [copy])
    states, _ = run(people_prepared, people_history, cfg)
    values = [r.doc[p] for r in states[1].records.values() if r.origin and r.doc[p] is not None]
    assert values and all(v.count(".") == 2 for v in values)


def test_copy_transforms_must_be_format_steps(people_prepared):
    copy = CopySpec(0, 1, 0, None, {"kind": "on-change"}, ["id"], [{"op": "rename", "path": "id", "to": "x"}])
    cfg = config(people_prepared.paths, [source("s0"), source("s1")], 10, [copy])
    with pytest.raises(InfeasibleConfig):
        Simulator(cfg)


# -- outdated values ---------------------------------------------------------------------


class FixedDraw:
    def __init__(self, r):
        self.r = r

    def random(self):
        return self.r


def test_outdated_interval_lookup():
    eh = EntityHistory(0, 0, None, {"a": [VersionedValue("v1", 0, 5), VersionedValue("v2", 5, None)]})
    assert make_outdated(eh, "a", 10, FixedDraw(0.3)) == "v1"
    assert make_outdated(eh, "a", 10, FixedDraw(0.5)) == "v2"


def test_outdated_without_history():
    eh = EntityHistory(0, 0, None, {"a": [VersionedValue("v1", 0, None)]})
    with pytest.raises(NoHistory):
        make_outdated(eh, "a", 10, FixedDraw(0.3))


def test_outdated_cells_are_historical_versions(people_prepared, people_history):
    errs = ErrorProfile(leaf={p: {"outdated": 0.3} for p in people_prepared.paths}, maintenance_rate=0.2)
    cfg = config(people_prepared.paths, [source("s0", errs)], 1000, maintenance_interval=100)
    _, entries = run(people_prepared, people_history, cfg)
    outdated = [e for e in entries if e["class"] == "outdated" and e["op"] == "error"]
    assert len(outdated) > 50
    for e in outdated:
        versions = {encode_value(v.value) for v in people_history.entities[e["entity_id"]].versions[e["path"]]}
        assert encode_value(e["post"]) in versions
    noops = [e for e in entries if e["class"] == "outdated" and e["op"] == "noop"]
    assert all(e["pre"] == e["post"] for e in noops)


# -- profile changes -------------------------------------------------------------------


def two_profiles(first, second, at=500):
    a = SourceProfile(first, ErrorProfile(), 0, at)
    b = SourceProfile(second, ErrorProfile(), at, None)
    return SourceHistory("s0", [a, b])


def test_identical_profile_change_is_silent(people_prepared, people_history):
    single = config(people_prepared.paths, [source("s0")], 1000)
    split = config(people_prepared.paths, [two_profiles(RepresentationProfile(), RepresentationProfile())], 1000)
    assert run(people_prepared, people_history, single)[1] == run(people_prepared, people_history, split)[1]


def test_scope_shrink_removes_records(people_prepared, people_history):
    empty = {"kind": "hash_bucket", "buckets": 10, "start": 0, "width": 0}
    cfg = config(people_prepared.paths, [two_profiles(RepresentationProfile(), RepresentationProfile(scope=empty))],
                 1000)
    states, entries = run(people_prepared, people_history, cfg)
    assert states[0].records == {}
    assert any(e["op"] == "delete" and e["at"] == 500 for e in entries)
    assert not any(e["op"] == "create" and e["at"] >= 500 for e in entries)


def test_scope_growth_backfills(people_prepared, people_history):
    empty = {"kind": "hash_bucket", "buckets": 10, "start": 0, "width": 0}
    cfg = config(people_prepared.paths, [two_profiles(RepresentationProfile(scope=empty), RepresentationProfile())],
                 1000)
    states, entries = run(people_prepared, people_history, cfg)
    assert not any(e["op"] == "create" and e["at"] < 500 for e in entries)
    alive = {eid for eid, _ in snapshot_at(people_history, 1000)}
    assert set(by_entity(states[0])) == alive


def test_rename_migrates_a_three_record_store():
    h = toy_history(3, ["a", "b"], horizon=20)
    rename = [{"op": "rename", "path": "a", "to": "x"}]
    cfg = config(["a", "b"], [two_profiles(RepresentationProfile(), RepresentationProfile(mapping=rename), at=10)], 20)
    states, entries = simulate(h, cfg)
    migrations = [e for e in entries if e["op"] == "migrate"]
    assert len(migrations) == 3 and {(e["pre"], e["post"], e["at"]) for e in migrations} == {(0, 1, 10)}
    assert len(states[0].records) == 3
    before, after = Mapping([], ["a", "b"]), Mapping(rename, ["a", "b"])
    for rec in states[0].records.values():
        old, new = before.apply(rec.doc), after.apply(rec.doc)
        assert "a" in old and "x" not in old
        assert "x" in new and "a" not in new and new["x"] == old["a"]


# -- provenance and determinism -----------------------------------------------------------


def test_provenance_replays_every_store(people_prepared, people_history):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=3, copy_intensity=1.0, heterogeneity=0.5,
                      seed=2)
    states, entries = run(people_prepared, people_history, cfg)
    rebuilt = replay(entries)
    want = stores(states)
    for name in want:
        assert {r: encode_value(d) for r, d in rebuilt.get(name, {}).items()} == \
            {r: encode_value(d) for r, d in want[name].items()}


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 0.6))
def test_provenance_complete_for_any_seed(people_prepared, people_history, seed, dup):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=2, copy_intensity=1.0, duplicate_rate=dup,
                      seed=seed)
    states, entries = run(people_prepared, people_history, cfg)
    rebuilt = replay(entries)
    for name, store in stores(states).items():
        assert {r: encode_value(d) for r, d in rebuilt.get(name, {}).items()} == \
            {r: encode_value(d) for r, d in store.items()}


def test_double_run_is_identical(people_prepared, people_history):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=3, copy_intensity=0.7, seed=5)
    assert run(people_prepared, people_history, cfg)[1] == run(people_prepared, people_history, cfg)[1]


def test_entity_grouping_does_not_change_output(people_prepared, people_history):
    cfg = make_config(people_prepared, scenario_kind="linkage", n_sources=3, copy_intensity=0.7, seed=5)
    ctx = context(people_prepared)
    whole = Simulator(cfg, kinds=ctx.kinds, semantic=ctx.semantic, pools=ctx.pools).run(people_history)
    ehs = list(people_history)
    pieces = []
    for i in range(0, len(ehs), 37):
        part = Simulator(cfg, kinds=ctx.kinds, semantic=ctx.semantic, pools=ctx.pools).run(ehs[i:i + 37])
        pieces.extend(part.lines())
    assert list(whole.lines()) == pieces


def test_numeric_values_survive(people_prepared, people_history):
    cfg = config(people_prepared.paths, [source("s0")], 1000)
    states, _ = run(people_prepared, people_history, cfg)
    nums = [v for r in states[0].records.values() for v in r.doc.values() if isinstance(v, Decimal)]
    assert nums
