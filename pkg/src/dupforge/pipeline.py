"""Streaming orchestration of phases 4 to 6 over fixed-size entity partitions.

History is generated sequentially (fresh-value counters are global) and
handed out in partitions of consecutive entities.  Leading partitions are
pilots: they run one after another in the main process, each starting from
the config its predecessor converged to, until one is within tolerance
without any adaptation step.  That config is the starting point of every
remaining partition, which is simulated, adapted and formatted on its own,
in any worker, and written in partition order.  The output therefore does
not depend on the worker count.
"""

from __future__ import annotations

import json
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import assembler as asm
from .exceptions import DanglingRecord
from .engine import Simulator, measure_states, provenance_line
from .history import HistoryGenerator
from .mapping import Mapping
from .model import history_lines, iter_history_file
from .preconfig import GenerationConfig, adapt_parameters
from .values import decode_json

POOL_SIZE = 1000


@dataclass
class RunContext:
    """Everything a worker needs besides the config and its partition."""

    paths: list
    model: str
    kinds: dict
    semantic: dict
    segments: dict
    pools: dict = field(default_factory=dict)

    @classmethod
    def from_prepared(cls, prepared) -> "RunContext":
        schema = prepared.schema.schema
        kinds = {a.name: a.kind for a in schema.attributes}
        semantic = {p: s.label for p, s in prepared.schema.semantic_types.items()}
        pools = {}
        for p in schema.paths:
            seen, pool = set(), []
            for _, d in prepared.snapshot:
                v = d.get(p)
                if v is None or isinstance(v, (list, dict)) or v in seen:
                    continue
                seen.add(v)
                pool.append(v)
                if len(pool) >= POOL_SIZE:
                    break
            pools[p] = pool
        return cls(list(schema.paths), schema.model, kinds, semantic, schema.segment_map(), pools)


# -- history -----------------------------------------------------------------------------


def history_generator(prepared, config: GenerationConfig) -> HistoryGenerator:
    h = config.history
    enriched = prepared.schema
    return HistoryGenerator(prepared, enriched.change_model, enriched.update_rules, enriched.constraints,
                            int(h.get("horizon", 0)), float(h.get("volume_factor", 1.0)), config.seed,
                            max_retries=int(h.get("max_retries", 10)))


def history_partitions(gen: HistoryGenerator, size: int, fh=None):
    """Partitions of the generated history, optionally written to ``fh`` on the way."""
    for part in gen.partitions(size):
        if fh is not None:
            for eh in part:
                fh.writelines(history_lines(eh, gen.paths))
        yield part


def read_history_partitions(fh, size: int):
    batch = []
    for eh in iter_history_file(fh):
        batch.append(eh)
        if len(batch) >= size:
            yield batch
            batch = []
    if batch:
        yield batch


# -- formatting ---------------------------------------------------------------------------


class Exporter:
    """Turns final per-entity records into export, gold and integration lines."""

    def __init__(self, config: GenerationConfig, ctx: RunContext):
        self.config = config
        self.ctx = ctx
        self.names = [s.name for s in config.sources]
        horizon = int(config.history.get("horizon", 0))
        self.source_maps = []
        self.source_models = []
        for s in config.sources:
            prof = s.profiles[s.active(horizon)]
            self.source_maps.append(Mapping(prof.representation.mapping, config.paths))
            self.source_models.append(prof.representation.data_model)
        self.integration = []
        for p in config.integration_profiles:
            maps = [Mapping(p.source_mappings.get(n, p.mapping), config.paths) for n in self.names]
            fields = []
            for m in maps:
                fields += [f for f in m.output_fields if f not in fields]
            self.integration.append((p, maps, fields))

    def source_ext(self, i: int) -> str:
        return "csv" if self.source_models[i] == "relational" else "jsonl"

    def integrated_ext(self) -> str:
        return "csv" if self.ctx.model == "relational" else "jsonl"

    def source_header(self, i: int) -> str:
        return asm.export_header(self.source_maps[i].output_fields) if self.source_ext(i) == "csv" else ""

    def integrated_header(self, k: int) -> str:
        return asm.integrated_header(self.integration[k][2]) if self.integrated_ext() == "csv" else ""

    def source_lines(self, i: int, records, out: list) -> None:
        m = self.source_maps[i]
        model = self.source_models[i]
        for rid, doc in records:
            out.append(asm.export_line(rid, m.apply(doc), m.output_fields, model))

    def assembly_lines(self, eh, by_source, buf: dict) -> None:
        """Gold and integration lines for one entity; ``by_source`` lists (rid, doc) per source index."""
        eid = eh.entity_id
        rids = []
        for i, records in enumerate(by_source):
            for rid, _ in records:
                buf["clusters"].append(asm.cluster_line(rid, eid, self.names[i]))
                rids.append(rid)
        if not rids:
            return
        buf["pairs"].extend(asm.pair_lines(rids))
        buf["golden"].append(asm.golden_line(eid, asm.golden_doc(eh, int(self.config.history.get("horizon", 0))),
                                             self.ctx.segments))
        model = self.ctx.model
        seed = self.config.seed
        for k, (prof, maps, fields) in enumerate(self.integration):
            rows, swaps = buf[f"int:{k}"], buf[f"swap:{k}"]
            for i, records in enumerate(by_source):
                for rid, doc in records:
                    out, swap = asm.integrate_record(doc, maps[i], prof.mapping_error_rate,
                                                     asm.integration_rng(seed, prof.name, rid))
                    rows.append(asm.integrated_line(self.names[i], rid, out, fields, model))
                    if swap:
                        swaps.append(asm.swap_line(rid, *swap))

    def new_buffer(self, sources=True, assembly=True) -> dict:
        buf = {}
        if sources:
            buf["prov"] = []
            for i in range(len(self.names)):
                buf[f"src:{i}"] = []
        if assembly:
            buf.update(clusters=[], pairs=[], golden=[])
            for k in range(len(self.integration)):
                buf[f"int:{k}"] = []
                buf[f"swap:{k}"] = []
        return buf


# -- partitions -----------------------------------------------------------------------------


def simulate_partition(histories, config: GenerationConfig, ctx: RunContext, adapt: bool = True):
    """Simulate one partition, re-running with rescaled knobs until every source is within tolerance.

    Returns (result, config used, per-source (bad, total) cells, adaptation steps).
    """
    a = config.adaptation or {}
    target = float(a.get("target", 0.0))
    tol = float(a.get("tolerance", 0.01))
    max_steps = int(a.get("max_steps", 6))
    min_cells = int(a.get("min_cells", 2000))
    adapt = adapt and bool(a.get("enabled", False))
    horizon = int(config.history.get("horizon", 0))
    steps = 0
    while True:
        sim = Simulator(config, kinds=ctx.kinds, semantic=ctx.semantic, pools=ctx.pools)
        res = sim.run(histories)
        counts = measure_states(res.states, histories, horizon)
        if not adapt or steps >= max_steps:
            return res, config, counts, steps
        new = config
        for i, (bad, total) in enumerate(counts):
            if total < min_cells:
                continue
            measured = bad / total
            if abs(measured - target) > tol:
                new = adapt_parameters(target, measured, new, source=i)
        if new is config:
            return res, config, counts, steps
        config = new
        steps += 1


def process_partition(index: int, histories, config_dict: dict, ctx: RunContext, adapt: bool = True,
                      sources: bool = True, assembly: bool = True) -> dict:
    config = GenerationConfig.from_dict(config_dict)
    res, used, counts, steps = simulate_partition(histories, config, ctx, adapt)
    exp = Exporter(used, ctx)
    buf = exp.new_buffer(sources, assembly)
    names = res.names
    if sources:
        buf["prov"] = [provenance_line(e, names) for e in res.log]
    multi = [0] * len(names)
    for eh in histories:
        by_source = []
        for i, st in enumerate(res.states):
            recs = st.entity_records(eh.entity_id)
            pairs = [(r.rid, r.doc) for r in recs]
            by_source.append(pairs)
            if sum(1 for r in recs if r.origin is None) >= 2:
                multi[i] += 1
            if sources:
                exp.source_lines(i, pairs, buf[f"src:{i}"])
        if assembly:
            exp.assembly_lines(eh, by_source, buf)
    records = [len(st.records) for st in res.states]
    out = {k: "".join(v) for k, v in buf.items()}
    out["stats"] = {"index": index, "entities": len(histories), "counts": counts, "records": records,
                    "multi_record_entities": multi, "adaptation_steps": steps,
                    "swaps": [out.get(f"swap:{k}", "").count("\n") for k in range(len(exp.integration))]}
    out["config"] = used.to_dict()
    return out


def _worker(args):
    return process_partition(*args)


# -- output files ------------------------------------------------------------------------------


class OutputFiles:
    def __init__(self, out_dir: str, exporter: Exporter, sources: bool = True, assembly: bool = True):
        self.handles = {}
        self.paths = []
        exp = exporter
        if sources:
            os.makedirs(os.path.join(out_dir, "sources"), exist_ok=True)
            self._open("prov", os.path.join(out_dir, "provenance.jsonl"))
            for i, name in enumerate(exp.names):
                self._open(f"src:{i}", os.path.join(out_dir, "sources", f"{name}.{exp.source_ext(i)}"),
                           exp.source_header(i))
        if assembly:
            os.makedirs(os.path.join(out_dir, "gold"), exist_ok=True)
            self._open("clusters", os.path.join(out_dir, "gold", "clusters.jsonl"))
            self._open("pairs", os.path.join(out_dir, "gold", "pairs.csv"), "record_id_a,record_id_b\n")
            self._open("golden", os.path.join(out_dir, "gold", "golden_records.jsonl"))
            for k, (prof, _, _) in enumerate(exp.integration):
                d = os.path.join(out_dir, "scenarios", prof.name)
                os.makedirs(d, exist_ok=True)
                self._open(f"int:{k}", os.path.join(d, f"integrated.{exp.integrated_ext()}"), exp.integrated_header(k))
                self._open(f"swap:{k}", os.path.join(d, "swaps.jsonl"))

    def _open(self, key, path, header=""):
        fh = open(path, "w", encoding="utf-8", newline="")
        if header:
            fh.write(header)
        self.handles[key] = fh
        self.paths.append(path)

    def write(self, out: dict) -> None:
        for key, fh in self.handles.items():
            text = out.get(key)
            if text:
                fh.write(text)

    def close(self):
        for fh in self.handles.values():
            fh.close()


@dataclass
class RunStats:
    partitions: list = field(default_factory=list)
    pilot_config: dict | None = None

    def add(self, stats: dict):
        self.partitions.append(stats)

    def summary(self, names) -> dict:
        n = len(names)
        bad = [sum(p["counts"][i][0] for p in self.partitions) for i in range(n)]
        total = [sum(p["counts"][i][1] for p in self.partitions) for i in range(n)]
        records = [sum(p["records"][i] for p in self.partitions) for i in range(n)]
        multi = [sum(p["multi_record_entities"][i] for p in self.partitions) for i in range(n)]
        swaps = [sum(x) for x in zip(*[p["swaps"] for p in self.partitions])] if self.partitions else []
        return {
            "entities": sum(p["entities"] for p in self.partitions),
            "partitions": len(self.partitions),
            "adaptation_steps": [p["adaptation_steps"] for p in self.partitions],
            "sources": {name: {"records": records[i], "corrupted_cells": bad[i], "cells": total[i],
                               "measured_pollution": round(bad[i] / total[i], 6) if total[i] else 0.0,
                               "multi_record_entities": multi[i]}
                        for i, name in enumerate(names)},
            "emitted_records": sum(records),
            "swapped_records": swaps,
        }


def run_partitions(partitions, config: GenerationConfig, ctx: RunContext, out_dir: str, *, workers: int = 1,
                   sources: bool = True, assembly: bool = True) -> tuple[RunStats, list]:
    """Simulate and write every partition; returns stats and the list of written files."""
    exporter = Exporter(config, ctx)
    files = OutputFiles(out_dir, exporter, sources, assembly)
    stats = RunStats()
    adapt = bool((config.adaptation or {}).get("enabled", False))
    it = iter(partitions)
    try:
        pilot = config.to_dict()
        i = 0
        for part in it:
            out = process_partition(i, part, pilot, ctx, adapt, sources, assembly)
            pilot = out.pop("config")
            steps = out["stats"]["adaptation_steps"]
            stats.add(out.pop("stats"))
            files.write(out)
            i += 1
            if steps == 0:
                break
        stats.pilot_config = pilot
        if workers <= 1:
            for i, part in enumerate(it, i):
                out = process_partition(i, part, pilot, ctx, adapt, sources, assembly)
                out.pop("config")
                stats.add(out.pop("stats"))
                files.write(out)
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                pending = deque()
                for i, part in enumerate(it, i):
                    pending.append(pool.submit(_worker, (i, part, pilot, ctx, adapt, sources, assembly)))
                    if len(pending) >= 2 * workers:
                        _drain_one(pending, stats, files)
                while pending:
                    _drain_one(pending, stats, files)
    finally:
        files.close()
    return stats, files.paths


def _drain_one(pending, stats, files):
    out = pending.popleft().result()
    out.pop("config")
    stats.add(out.pop("stats"))
    files.write(out)


# -- standalone assembly from phase files ---------------------------------------------------


def provenance_groups(fh):
    """(entity_id, [entry, ...]) for consecutive provenance lines of one entity."""
    eid, group = None, []
    for line in fh:
        if not line.strip():
            continue
        e = decode_json(line)
        e["entity_id"] = int(e["entity_id"])
        if e["entity_id"] != eid and group:
            yield eid, group
            group = []
        eid = e["entity_id"]
        group.append(e)
    if group:
        yield eid, group


def _replay_entity(entries, names) -> list:
    index = {n: i for i, n in enumerate(names)}
    stores = [dict() for _ in names]
    for e in entries:
        store = stores[index[e["source"]]]
        op = e["op"]
        if op in ("create", "copy") and e["path"] is None:
            store[e["record_id"]] = dict(e["post"])
        elif op in ("set", "error", "copy"):
            store[e["record_id"]][e["path"]] = e["post"]
        elif op == "delete":
            del store[e["record_id"]]
    return [list(s.items()) for s in stores]


def assemble_from_files(history_fh, provenance_fh, config: GenerationConfig, ctx: RunContext, out_dir: str,
                        chunk: int = 10000) -> tuple[dict, list]:
    """Gold standard and integrated datasets from history.jsonl and provenance.jsonl."""
    exporter = Exporter(config, ctx)
    files = OutputFiles(out_dir, exporter, sources=False, assembly=True)
    groups = provenance_groups(provenance_fh)
    pending = next(groups, None)
    swaps = [0] * len(exporter.integration)
    try:
        buf = exporter.new_buffer(sources=False)
        n = 0
        for eh in iter_history_file(history_fh):
            entries = []
            if pending is not None and pending[0] == eh.entity_id:
                entries = pending[1]
                pending = next(groups, None)
            exporter.assembly_lines(eh, _replay_entity(entries, exporter.names), buf)
            n += 1
            if n % chunk == 0:
                for k in range(len(swaps)):
                    swaps[k] += len(buf[f"swap:{k}"])
                files.write({k: "".join(v) for k, v in buf.items()})
                buf = exporter.new_buffer(sources=False)
        for k in range(len(swaps)):
            swaps[k] += len(buf[f"swap:{k}"])
        files.write({k: "".join(v) for k, v in buf.items()})
        if pending is not None:
            raise DanglingRecord(f"provenance references entity {pending[0]} missing from the history")
    finally:
        files.close()
    return {"swapped_records": swaps}, files.paths


def write_scenarios(out_dir: str, config: GenerationConfig, exporter: Exporter, manifest: dict) -> list:
    """One manifest per scenario; integration scenarios share sources and gold standard."""
    sources = [f"sources/{n}.{exporter.source_ext(i)}" for i, n in enumerate(exporter.names)]
    gold = {"clusters": "gold/clusters.jsonl", "pairs": "gold/pairs.csv", "golden_records": "gold/golden_records.jsonl"}
    profiles = [p for p, _, _ in exporter.integration]
    scenarios = asm.assemble(config.scenario_kind, [(n, None) for n in exporter.names], profiles, gold, manifest)
    written = []
    for k, sc in enumerate(scenarios):
        name = sc.manifest.get("target", f"scenario_{k}")
        d = os.path.join(out_dir, "scenarios", name)
        os.makedirs(d, exist_ok=True)
        body = dict(sc.manifest, sources=sources, gold=gold,
                    source_schemas={n: {"data_model": exporter.source_models[i],
                                        "fields": exporter.source_maps[i].output_fields}
                                    for i, n in enumerate(exporter.names)})
        if sc.kind == "integration":
            _, _, fields = exporter.integration[k]
            body["integrated"] = f"scenarios/{name}/integrated.{exporter.integrated_ext()}"
            body["swaps"] = f"scenarios/{name}/swaps.jsonl"
            body["target_fields"] = fields
        path = os.path.join(d, "manifest.json")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(body, fh, indent=2, ensure_ascii=False)
            fh.write("\n")
        written.append(path)
    src_manifest = os.path.join(out_dir, "sources", "manifest.json")
    os.makedirs(os.path.dirname(src_manifest), exist_ok=True)
    with open(src_manifest, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"config_hash": manifest.get("config_hash"),
                   "sources": [{"name": n, "file": sources[i], "data_model": exporter.source_models[i],
                                "schema_version": config.sources[i].active(int(config.history.get("horizon", 0))),
                                "fields": exporter.source_maps[i].output_fields}
                               for i, n in enumerate(exporter.names)]}, fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    written.append(src_manifest)
    return written
