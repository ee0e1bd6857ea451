"""End-to-end acceptance criteria; each test prints one PASS/FAIL line.

The lines are also collected into an "acceptance criteria" section of the
pytest terminal summary.
"""

import json
import os
import subprocess
import sys
import time
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dupforge import datasets
from dupforge.assembler import apply_integration_profile
from dupforge.engine import simulate
from dupforge.errors import inject_error
from dupforge.history import generate_history
from dupforge.model import DataHistory, EntityHistory, FunctionalDependency, TemporalUnique, Unique, \
    VersionedValue, read_history, validate_history
from dupforge.preconfig import (ErrorProfile, GenerationConfig, IntegrationProfile, RepresentationProfile,
                                SourceHistory, SourceProfile, measure_pollution)
from dupforge.preparation import normalize_schema, read_prepared
from dupforge.profiling.temporal import UpdateRule, extract_update_transactions, mine_update_dependencies
from dupforge.rng import Stream
from dupforge.values import decode_json, encode_value, read_csv, read_jsonl

from conftest import ACCEPTANCE, run_cli, tree_bytes
from oracles import brute_rules, levenshtein


@pytest.fixture
def verdict(request):
    """Record the outcome of one criterion; an unexpected error counts as FAIL."""
    state = {}

    def record(n, title, ok, detail=""):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        state["n"] = n
        ACCEPTANCE[n] = line
        print(line)
        assert ok, line

    yield record
    if "n" not in state:
        n = int(request.node.name.split("_")[1])
        ACCEPTANCE[n] = f"criterion {n:2d}: FAIL  {request.node.name} raised before reaching a verdict"
        print(ACCEPTANCE[n])


# -- shared runs ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    datasets.write_people_csv(root / "people10k.csv", 10000, seed=7)
    return root


LINKAGE = ["--scenario", "linkage", "--sources", "3", "--copy-intensity", "1.0", "--heterogeneity", "0.5",
           "--pollution", "0.2", "--duplicates", "0.1", "--seed", "1", "--partition-size", "2500"]


def timed_cli(*args):
    t = time.perf_counter()
    res = run_cli(*args)
    assert res.returncode == 0, res.stderr
    return time.perf_counter() - t


@pytest.fixture(scope="module")
def linkage_run(work):
    out = work / "linkage_a"
    secs = timed_cli("all", "--input", str(work / "people10k.csv"), *LINKAGE, "--workers", "1", "--out-dir", str(out))
    return out, secs


def read_clusters(out):
    with open(out / "gold" / "clusters.jsonl") as fh:
        return [json.loads(line) for line in fh]


def emitted_ids(out):
    ids = []
    for name in sorted(os.listdir(out / "sources")):
        path = out / "sources" / name
        if name.endswith(".csv"):
            ids += [r["record_id"] for r in read_csv(path)[1]]
        elif name.endswith(".jsonl"):
            ids += [r["record_id"] for r in read_jsonl(path)]
    return ids


def is_partition(out) -> bool:
    cl = read_clusters(out)
    rids = [c["record_id"] for c in cl]
    return len(rids) == len(set(rids)) and sorted(rids) == sorted(emitted_ids(out))


# -- 1 -----------------------------------------------------------------------------------


def test_1_determinism(work, linkage_run, verdict):
    out_a, secs_a = linkage_run
    secs_b = timed_cli("all", "--input", str(work / "people10k.csv"), *LINKAGE, "--workers", "1",
                       "--out-dir", str(work / "linkage_b"))
    secs_c = timed_cli("all", "--input", str(work / "people10k.csv"), *LINKAGE, "--workers", "8",
                       "--out-dir", str(work / "linkage_w8"))
    a = tree_bytes(out_a)
    same = a == tree_bytes(work / "linkage_b")
    workers = a == tree_bytes(work / "linkage_w8")
    fast = max(secs_a, secs_b, secs_c) < 120
    verdict(1, "determinism", same and workers and fast and "provenance.jsonl" in a,
            f"rerun identical={same}, workers 1 vs 8 identical={workers}, slowest run {max(secs_a, secs_b, secs_c):.0f}s")


# -- 2 -----------------------------------------------------------------------------------


def test_2_gold_partition(work, linkage_run, verdict):
    people = str(work / "people10k.csv")
    zero = work / "zero"
    timed_cli("all", "--input", people, "--pollution", "0", "--duplicates", "0", "--seed", "1", "--out-dir", str(zero))
    integ = work / "integration"
    timed_cli("all", "--input", people, "--scenario", "integration", "--sources", "2", "--seed", "2",
              "--out-dir", str(integ))
    parts = {"linkage": is_partition(linkage_run[0]), "zero": is_partition(zero), "integration": is_partition(integ)}
    cl = read_clusters(zero)
    singletons = len({c["cluster_id"] for c in cl}) == len(cl)
    # integrated rows carry the same record ids as the source exports
    _, rows = read_csv(integ / "scenarios" / "target_0" / "integrated.csv")
    integrated_ok = sorted(r["record_id"] for r in rows) == sorted(c["record_id"] for c in read_clusters(integ))
    verdict(2, "gold-standard partition", all(parts.values()) and singletons and integrated_ok,
            f"partitions={parts}, zero-knob singletons={singletons}, integrated ids covered={integrated_ok}")


# -- 3 -----------------------------------------------------------------------------------


def file_pollution(out) -> float:
    """Pollution measured from the exported files alone."""
    cluster = {c["record_id"]: c["cluster_id"] for c in read_clusters(out)}
    with open(out / "gold" / "golden_records.jsonl") as fh:
        gold = {d["cluster_id"]: d["record"] for d in map(decode_json, fh)}
    _, rows = read_csv(out / "sources" / "source_0.csv")
    return measure_pollution(gold, [(r.pop("record_id"), r) for r in rows], cluster)


def test_3_pollution_fidelity(work, verdict):
    out = work / "pollution"
    secs = timed_cli("all", "--input", str(work / "people10k.csv"), "--pollution", "0.2", "--seed", "3",
                     "--out-dir", str(out))
    report = json.loads((out / "pollution_report.json").read_text())
    internal = report["sources"]["source_0"]["measured_pollution"]
    external = file_pollution(out)
    ok = 0.17 <= internal <= 0.23 and 0.17 <= external <= 0.23 and secs < 120
    verdict(3, "pollution fidelity", ok, f"reported {internal:.4f}, from files {external:.4f}, {secs:.0f}s")


# -- 4 -----------------------------------------------------------------------------------


FIM_DATASETS = []


@settings(max_examples=48, deadline=None)
@given(st.lists(st.sets(st.sampled_from("ABCDEF"), min_size=1, max_size=6), max_size=12))
def check_fim(tx):
    FIM_DATASETS.append(len(tx))
    for w in range(1, 5):
        # thresholds only filter, so the oracle enumerates once per window
        everything = brute_rules(tx, w, 0.0, 0.0)
        for s in range(11):
            for c in range(11):
                got = {(frozenset(r.antecedent), frozenset(r.consequent), r.support, r.confidence)
                       for r in mine_update_dependencies(tx, w, s / 10, c / 10)}
                want = {r for r in everything if r[2] >= s / 10 and r[3] >= c / 10}
                assert got == want, (tx, w, s, c)


def test_4_fim_oracle(verdict):
    t = time.perf_counter()
    FIM_DATASETS.clear()
    error = None
    try:
        check_fim()
    except AssertionError as exc:
        error = str(exc)[:200]
    secs = time.perf_counter() - t
    n = len(FIM_DATASETS)
    verdict(4, "windowed FIM oracle equivalence", error is None and secs < 60,
            error or f"{n} datasets x 4 windows x 121 threshold pairs, {secs:.0f}s")


# -- 5 -----------------------------------------------------------------------------------


def test_5_history_validity(verdict):
    bad = []
    kinds = set()
    for seed in range(20):
        for name, rows in (("people", datasets.people(300, seed=100 + seed)),
                           ("customers", datasets.customers(200, seed=200 + seed))):
            prep = normalize_schema(rows)
            s = prep.schema
            kinds |= {type(c).__name__ for c in s.constraints}
            h = generate_history(prep, s.change_model, s.update_rules, s.constraints, 1000, 1.5, seed)
            v = validate_history(h, s)
            if v:
                bad.append((name, seed, len(v)))
    want = {Unique.__name__, FunctionalDependency.__name__, TemporalUnique.__name__}
    verdict(5, "history validity", not bad and want <= kinds,
            f"40 histories over 20 seeds, constraint kinds {sorted(kinds)}, failing {bad}")


# -- 6 -----------------------------------------------------------------------------------


def test_6_outdated_and_copies(linkage_run, verdict):
    out = linkage_run[0]
    prepared = read_prepared(out / "prepared.jsonl", out / "prepared_schema.json")
    with open(out / "history.jsonl") as fh:
        history = read_history(fh, prepared.paths)
    with open(out / "provenance.jsonl") as fh:
        entries = [decode_json(line) for line in fh]
    outdated = [e for e in entries if e["op"] == "error" and e["class"] == "outdated"]
    members = sum(1 for e in outdated if encode_value(e["post"]) in
                  {encode_value(v.value) for v in history.entities[e["entity_id"]].versions[e["path"]]})
    # walk the log in order; every copied value must equal the origin's current value
    live: dict = {}
    copies = mismatched = 0
    for e in entries:
        store = live.setdefault(e["source"], {})
        if e["op"] in ("create", "copy") and e["path"] is None:
            store[e["record_id"]] = dict(e["post"])
            if e["origin"] is not None:
                origin = live[e["origin"]["source"]][e["origin"]["record_id"]]
                copies += 1
                mismatched += encode_value(origin) != encode_value(e["post"])
        elif e["op"] == "copy":
            origin = live[e["origin"]["source"]][e["origin"]["record_id"]]
            copies += 1
            mismatched += encode_value(origin[e["path"]]) != encode_value(e["post"])
            store[e["record_id"]][e["path"]] = e["post"]
        elif e["op"] in ("set", "error"):
            store[e["record_id"]][e["path"]] = e["post"]
        elif e["op"] == "delete":
            del store[e["record_id"]]
    ok = outdated and members == len(outdated) and copies and not mismatched
    verdict(6, "outdated membership and copy equality", bool(ok),
            f"{members}/{len(outdated)} outdated cells historical, {copies - mismatched}/{copies} copies equal")


# -- 7 -----------------------------------------------------------------------------------


def test_7_error_class_contracts(verdict):
    rng = Stream(7)
    texts = [v for r in datasets.people(2000, seed=1) for v in r.values() if isinstance(v, str) and v]
    typo_ok = 0
    for i in range(10000):
        v = texts[i % len(texts)]
        typo_ok += levenshtein(v, inject_error(v, "typo", rng=rng)) == 1
    perm_ok = n_lists = 0
    for i in range(2000):
        items = [rng.choice(["a", "b", "c", Decimal(1), True]) for _ in range(2 + i % 5)]
        if len({encode_value(x) for x in items}) < 2:
            continue
        n_lists += 1
        before = list(map(encode_value, items))
        after = list(map(encode_value, inject_error(items, "list_order", rng=rng)))
        perm_ok += sorted(after) == sorted(before) and after != before
    values = ["x", Decimal("2.5"), False, ["a"], {"k": "v"}, None, ""]
    missing_ok = all(inject_error(v, "missing", rng=rng) is None for v in values)
    verdict(7, "error-class contracts", typo_ok == 10000 and perm_ok == n_lists and missing_ok,
            f"typo {typo_ok}/10000 at distance 1, list order {perm_ok}/{n_lists} permutations, missing null={missing_ok}")


# -- 8 -----------------------------------------------------------------------------------


def test_8_rate_fidelity(verdict):
    paths = ["a", "b", "c", "d", "e"]
    h = DataHistory(paths, horizon=100)
    for eid in range(10000):
        h.add(EntityHistory(eid, 0, None, {p: [VersionedValue(f"{p}{eid}", 0, None)] for p in paths}))
    prof = SourceProfile(RepresentationProfile(), ErrorProfile(duplicate_rate=0.2))
    cfg = GenerationConfig(11, "cleaning", paths, [SourceHistory("s0", [prof])], history={"horizon": 100})
    states, _ = simulate(h, cfg)
    per_entity: dict = {}
    for rec in states[0].records.values():
        per_entity[rec.entity] = per_entity.get(rec.entity, 0) + 1
    dup = sum(1 for c in per_entity.values() if c >= 2) / len(per_entity)
    recs = [(f"r{i}", {p: f"{p}{i}" for p in paths}) for i in range(10000)]
    integrated = apply_integration_profile([("s0", recs)], IntegrationProfile("t", [], 0.1), paths, seed=11)
    swapped = len(integrated.swaps) / 10000
    verdict(8, "rate fidelity", abs(dup - 0.2) <= 0.02 and abs(swapped - 0.1) <= 0.01,
            f"multi-record entities {dup:.4f}, swapped records {swapped:.4f}")


# -- 9 -----------------------------------------------------------------------------------


# ru_maxrss survives fork+exec and would report the pytest parent's peak; VmHWM resets on exec
PROBE = """
import json, resource, sys, time
from dupforge.cli import main
t = time.perf_counter()
rc = main(sys.argv[1:])
peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
try:
    with open("/proc/self/status") as fh:
        peak = next(int(line.split()[1]) for line in fh if line.startswith("VmHWM:"))
except (OSError, StopIteration):
    pass
print(json.dumps({"rc": rc, "secs": time.perf_counter() - t, "peak_kb": peak}))
"""


def scale_run(work, name, volume_factor):
    out = work / name
    res = subprocess.run([sys.executable, "-c", PROBE, "all", "--input", str(work / "people10k.csv"),
                          "--scenario", "cleaning", "--seed", "1", "--volume-factor", str(volume_factor),
                          "--out-dir", str(out)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    stats = json.loads(res.stdout.strip().splitlines()[-1])
    stats["records"] = json.loads((out / "pollution_report.json").read_text())["emitted_records"]
    return stats


@pytest.mark.slow
def test_9_scalability(work, verdict):
    # about 11.2k emitted records per unit of volume factor on the 10k people input
    r100 = scale_run(work, "scale_100k", 8.95)
    r200 = scale_run(work, "scale_200k", 17.9)
    r1m = scale_run(work, "scale_1m", 89.5)
    ratio_t = r200["secs"] / r100["secs"]
    ratio_m = r1m["peak_kb"] / r100["peak_kb"]
    ok = r1m["records"] >= 1_000_000 and ratio_t <= 2.5 and ratio_m < 2 and r1m["secs"] <= 15 * 60
    verdict(9, "scalability", ok,
            f"{r100['records']} records {r100['secs']:.0f}s, {r200['records']} records {r200['secs']:.0f}s "
            f"(x{ratio_t:.2f}), {r1m['records']} records {r1m['secs']:.0f}s; peak memory "
            f"{r100['peak_kb'] // 1024}MB -> {r1m['peak_kb'] // 1024}MB (x{ratio_m:.2f})")


# -- 10 -----------------------------------------------------------------------------------


def test_10_rule_round_trip(verdict):
    prep = normalize_schema(datasets.people(1000, seed=3))
    s = prep.schema
    rule = UpdateRule(("street",), ("salary",), 1, 0.0, 1.0)
    h = generate_history(prep, s.change_model, [rule], s.constraints, 1000, 1.0, 5)
    rules = mine_update_dependencies(extract_update_transactions(h), 1, 0.0, 0.0)
    found = [r for r in rules if r.antecedent == ("street",) and r.consequent == ("salary",)]
    conf = found[0].confidence if found else 0.0
    verdict(10, "rule round-trip", conf >= 0.95, f"window 1, re-mined confidence {conf:.4f}")
