"""Phase 5: event-based pollution of simulated data sources.

Every entity is simulated on its own: its world events (insert, updates,
delete), the profile changes of every source, periodic copy events and the
maintenance sweeps are merged into one stream ordered by (tick, phase,
source order) and replayed.  Sources only ever exchange records of the same
entity, so entities are independent and can be processed in any grouping
without changing the outcome.

Records are kept in the prepared (canonical) path space; each source's
representation mapping is applied only when records are exported.
"""

from __future__ import annotations

import math
from decimal import Decimal
from dataclasses import dataclass, field

from .errors import RECORD_CLASSES, inject_error, inject_record_error
from .exceptions import InapplicableClass, InfeasibleConfig, NoHistory
from .formats import family_for
from .mapping import Mapping
from .model import DataHistory, EntityHistory
from .preconfig import GenerationConfig, pollution_counts, topological_sources
from .rng import Stream, derive_key, mix64, scramble64
from .values import BOOLEAN, NUMBER, TEXT, encode_value, kind_of, same_value

WORLD, PROFILE, COPY, MAINTENANCE = 0, 1, 2, 3
# transformation errors draw from value-level classes only
_TRANSFORM_CLASSES = ("typo", "phonetic", "format_change", "missing")


@dataclass
class Record:
    rid: str
    entity: int
    doc: dict
    origin: tuple | None = None  # (source index, record id) for copied records
    spec: int = -1  # copy spec index for copied records


@dataclass
class SourceState:
    index: int
    name: str
    profile: int = 0
    records: dict = field(default_factory=dict)  # rid -> Record
    by_entity: dict = field(default_factory=dict)  # eid -> [rid, ...] in creation order

    def add(self, rec: Record) -> None:
        if rec.rid in self.records:
            raise ValueError(f"duplicate record id {rec.rid}")
        self.records[rec.rid] = rec
        self.by_entity.setdefault(rec.entity, []).append(rec.rid)

    def remove(self, rid: str) -> Record:
        rec = self.records.pop(rid)
        rids = self.by_entity[rec.entity]
        rids.remove(rid)
        if not rids:
            del self.by_entity[rec.entity]
        return rec

    def entity_records(self, eid: int, own: bool | None = None) -> list:
        out = [self.records[r] for r in self.by_entity.get(eid, ())]
        if own is None:
            return out
        return [r for r in out if (r.origin is None) == own]


# -- compiled configuration -----------------------------------------------------------


class _Profile:
    """One SourceProfile with its probabilities laid out for fast sampling."""

    def __init__(self, sp, paths):
        e = sp.errors
        self.dup = e.duplicate_rate
        self.miss = e.outdated_rate
        self.maint = e.maintenance_rate
        self.scope = sp.representation.scope or {"kind": "all"}
        self.steps = sp.representation.mapping
        self.data_model = sp.representation.data_model
        self.mask = e.mask
        self.cells = []  # (path, total probability, [(cumulative probability, class)])
        for p in paths:
            classes = e.leaf.get(p, {})
            acc, cum = 0.0, []
            for c in sorted(classes):
                if classes[c] > 0:
                    acc += classes[c]
                    cum.append((acc, c))
            if cum:
                self.cells.append((p, acc, cum))
        self.components = list(e.components)


def _pick(cum, r):
    for bound, cls in cum:
        if r < bound:
            return cls
    return cum[-1][1]


def _skip_positions(n: int, rate: float, rng: Stream):
    """Indices in [0, n) each selected independently with probability ``rate``."""
    if rate <= 0 or n == 0:
        return
    if rate >= 1:
        yield from range(n)
        return
    lq = math.log1p(-rate)
    i = -1
    while True:
        i += 1 + int(math.log(1.0 - rng.random()) / lq)
        if i >= n:
            return
        yield i


def in_scope(scope: dict, eid: int, doc: dict | None, key: int) -> bool:
    kind = scope.get("kind", "all")
    if kind == "all":
        return True
    if kind == "hash_bucket":
        n = int(scope["buckets"])
        b = mix64((eid ^ key) & 0xFFFFFFFFFFFFFFFF) % n
        return (b - int(scope.get("start", 0))) % n < int(scope["width"])
    if kind == "range":
        if doc is None:
            return False
        v = doc.get(scope["path"])
        if v is None:
            return False
        lo, hi = scope.get("min"), scope.get("max")
        if kind_of(v) == NUMBER:
            lo = None if lo is None else Decimal(str(lo))
            hi = None if hi is None else Decimal(str(hi))
        elif not isinstance(v, str):
            return False
        return (lo is None or v >= lo) and (hi is None or v <= hi)
    raise InfeasibleConfig(f"unknown scope kind {kind!r}")


def make_outdated(eh: EntityHistory, path: str, t: int, rng):
    """A past instance of (entity, path): value at t' drawn uniformly from [created, t)."""
    versions = eh.versions[path]
    if len(versions) == 1 or t <= eh.created_at:
        raise NoHistory(f"entity {eh.entity_id} has no past value for {path} before t={t}")
    t2 = eh.created_at + int(rng.random() * (t - eh.created_at))
    return eh.value_at(path, t2)


def _infer_kinds(histories, paths) -> dict:
    kinds = {}
    for eh in histories:
        for p in paths:
            if p not in kinds:
                for v in eh.versions[p]:
                    if v.value is not None:
                        kinds[p] = kind_of(v.value)
                        break
        if len(kinds) == len(paths):
            break
    return {p: kinds.get(p, TEXT) for p in paths}


# -- simulator ------------------------------------------------------------------------


class Simulator:
    """Replays entity histories through the sources of one GenerationConfig.

    ``kinds`` and ``semantic`` map paths to value kind and semantic label;
    ``pools`` maps paths to candidate values for wrong references.
    """

    def __init__(self, config: GenerationConfig, *, kinds=None, semantic=None, pools=None):
        self.config = config
        self.seed = config.seed
        self.paths = list(config.paths)
        self.horizon = int(config.history.get("horizon", 0))
        self.names = [s.name for s in config.sources]
        self.n = len(config.sources)
        self.order = topological_sources(config.copies, self.n)
        self.profiles = [[_Profile(sp, self.paths) for sp in s.profiles] for s in config.sources]
        self.bounds = [[sp.valid_from for sp in s.profiles] for s in config.sources]
        self.copies = list(config.copies)
        for c in self.copies:
            if any(step["op"] != "format" for step in c.transform):
                raise InfeasibleConfig("copy transforms may only contain format steps")
        self.transforms = [Mapping(c.transform, self.paths) if c.transform else None for c in self.copies]
        self.on_change = {}
        for j, c in enumerate(self.copies):
            if c.trigger.get("kind") == "on-change":
                self.on_change.setdefault(c.origin, []).append(j)
        self.maint_interval = int(config.maintenance_interval or 0)
        self.kinds = dict(kinds) if kinds else None
        self.semantic = dict(semantic or {})
        self.pools = dict(pools or {})
        self.scope_key = derive_key(self.seed, "scope")
        self.id_key = derive_key(self.seed, "record-id")
        self._partners = None

    # setup --------------------------------------------------------------------------

    def _prepare(self, histories):
        if self.kinds is None:
            self.kinds = _infer_kinds(histories, self.paths)
        if self._partners is None:
            text = [p for p in self.paths if self.kinds[p] == TEXT]
            self._partners = {}
            for p in self.paths:
                same = [q for q in self.paths if q != p and self.kinds[q] == self.kinds[p]
                        and self.kinds[q] in (TEXT, NUMBER, BOOLEAN)]
                label = self.semantic.get(p, "unknown")
                close = [q for q in same if self.semantic.get(q, "unknown") == label]
                same = close or same
                if p in text:
                    # same semantic type first (first/last name, street/city), then schema order
                    i = text.index(p)
                    ring = text[i + 1:] + text[:i]
                    nxt = [q for q in ring if self.semantic.get(q, "unknown") == label] + \
                        [q for q in ring if self.semantic.get(q, "unknown") != label]
                else:
                    nxt = []
                self._partners[p] = {"attribute_swap": same, "merged_attributes": nxt, "split_error": nxt}

    def profile_at(self, s: int, t: int) -> int:
        b = self.bounds[s]
        k = 0
        while k + 1 < len(b) and b[k + 1] <= t:
            k += 1
        return k

    # running ------------------------------------------------------------------------

    def run(self, histories) -> "SimulationResult":
        histories = list(histories)
        self._prepare(histories)
        states = [SourceState(i, name) for i, name in enumerate(self.names)]
        for st in states:
            st.profile = self.profile_at(st.index, self.horizon)
        log: list = []
        for eh in histories:
            self.simulate_entity(eh, states, log)
        return SimulationResult(states, log, self.names)

    def simulate_entity(self, eh: EntityHistory, states, log) -> None:
        ctx = _EntityRun(self, eh, states, log)
        for t, phase, sub in self._events(eh, ctx.changes):
            if phase == WORLD:
                ctx.world_event(t)
            elif phase == PROFILE:
                ctx.apply_profile_change_event(sub, t)
            elif phase == COPY:
                ctx.execute_copy_event(sub % 100000, t)
            else:
                ctx.maintenance(t)

    def _events(self, eh: EntityHistory, changes: dict) -> list:
        H = self.horizon
        c = eh.created_at
        ev = {(c, WORLD, 0)}
        for t in changes:
            ev.add((t, WORLD, 0))
        if eh.deleted_at is not None and eh.deleted_at <= H:
            ev.add((eh.deleted_at, WORLD, 0))
        for rank, s in enumerate(self.order):
            for start in self.bounds[s][1:]:
                if c <= start <= H:
                    ev.add((start, PROFILE, rank * 1000 + s))
        for j, spec in enumerate(self.copies):
            if spec.trigger.get("kind") != "periodic":
                continue
            step = max(1, int(spec.trigger.get("interval", 1)))
            first = spec.start if spec.start >= c else spec.start + -(-(c - spec.start) // step) * step
            end = H + 1 if spec.end is None else min(spec.end, H + 1)
            rank = self.order.index(spec.origin)
            for t in range(first, end, step):
                ev.add((t, COPY, rank * 100000 + j))
        if self.maint_interval > 0:
            m = max(1, -(-c // self.maint_interval)) * self.maint_interval
            for t in range(m, H + 1, self.maint_interval):
                ev.add((t, MAINTENANCE, 0))
        return sorted(ev)


class _EntityRun:
    """Mutable state of one entity's replay; owns the provenance sequence counter."""

    def __init__(self, sim: Simulator, eh: EntityHistory, states, log):
        self.sim = sim
        self.eh = eh
        self.eid = eh.entity_id
        self.states = states
        self.log = log
        self.seq = 0
        self.counters = [0] * sim.n
        self.rngs = [Stream(derive_key(sim.seed, "sim", s, self.eid)) for s in range(sim.n)]
        self.copy_rngs = {}
        # world truth is tracked incrementally: events arrive in time order
        self.changes = {}
        for p, vs in eh.versions.items():
            for v in vs[1:]:
                self.changes.setdefault(v.valid_from, {})[p] = v.value
        self.cur = {p: vs[0].value for p, vs in eh.versions.items()}

    # provenance -----------------------------------------------------------------------

    def emit(self, s, rid, at, op, path=None, pre=None, post=None, cls=None, origin=None):
        self.log.append((s, rid, self.eid, at, self.seq, op, path, pre, post, cls, origin))
        self.seq += 1

    def new_rid(self, s: int) -> str:
        k = self.counters[s]
        self.counters[s] = k + 1
        if k >= 1 << 14 or s >= 1 << 10:
            raise ValueError("record id space exhausted")
        return f"{scramble64((self.eid << 24) | (s << 14) | k, self.sim.id_key):016x}"

    # truth ----------------------------------------------------------------------------

    def truth(self, t: int) -> dict | None:
        """True document at the current event tick ``t``."""
        if not self.eh.alive_at(t):
            return None
        return self.cur

    # error injection ---------------------------------------------------------------------

    def corrupt(self, s, rec, path, cls, t, rng, params=None) -> bool:
        """Apply one error class to one cell; logs and returns whether anything changed."""
        doc = rec.doc
        try:
            if cls == "outdated":
                try:
                    new = make_outdated(self.eh, path, t, rng)
                except NoHistory:
                    self.emit(s, rec.rid, t, "noop", path, doc.get(path), doc.get(path), cls)
                    return False
                changes = [] if same_value(new, doc.get(path)) else [(path, doc.get(path), new)]
                if changes:
                    doc[path] = new
            elif cls in RECORD_CLASSES:
                changes = inject_record_error(doc, cls, path, self.sim._partners[path][cls], rng)
            else:
                value = doc.get(path)
                p = dict(params or {})
                if cls == "format_change" and "family" not in p:
                    fam = family_for(self.sim.semantic.get(path, "unknown"))
                    if fam:
                        p["family"] = fam
                if cls == "wrong_reference":
                    p["pool"] = self.sim.pools.get(path, ())
                new = inject_error(value, cls, p, rng)
                changes = [] if same_value(new, value) else [(path, value, new)]
                if changes:
                    doc[path] = new
        except (InapplicableClass, ValueError):
            return False
        for q, pre, post in changes:
            self.emit(s, rec.rid, t, "error", q, pre, post, cls)
        return bool(changes)

    def cell_errors(self, s, prof: _Profile, rec, paths, t, rng) -> None:
        """Immediate errors on freshly written cells (all cells on insert)."""
        for p, total, cum in prof.cells:
            if paths is not None and p not in paths:
                continue
            r = rng.random()
            if r < total:
                self.corrupt(s, rec, p, _pick(cum, r), t, rng)
        for comp in prof.components:
            if not comp.start <= t < comp.end:
                continue
            for p in comp.paths:
                if (paths is None or p in paths) and rng.random() < comp.rate:
                    self.corrupt(s, rec, p, comp.error_class, t, rng, comp.params)

    # world events ------------------------------------------------------------------------

    def world_event(self, t: int) -> None:
        sim = self.sim
        eh = self.eh
        if t == eh.created_at:
            kind, changed = "insert", None
        elif eh.deleted_at is not None and t == eh.deleted_at:
            kind, changed = "delete", None
        else:
            kind = "update"
            delta = self.changes[t]
            self.cur.update(delta)
            changed = [p for p in sim.paths if p in delta]
        for s in sim.order:
            st = self.states[s]
            touched = self.react_to_world_event(st, kind, changed, t)
            if touched:
                for j in sim.on_change.get(s, ()):
                    if sim.copies[j].active(t):
                        self.execute_copy_event(j, t)

    def react_to_world_event(self, st: SourceState, kind: str, changed, t: int) -> bool:
        """One source's reaction to a world event; returns whether it mutated anything."""
        s = st.index
        prof = self.sim.profiles[s][self.sim.profile_at(s, t)]
        rng = self.rngs[s]
        if kind == "insert":
            truth = self.truth(t)
            if not in_scope(prof.scope, self.eid, truth, self.sim.scope_key):
                return False
            # the initial load is never missed
            if t > 0 and rng.random() < prof.miss:
                return False
            n = 1
            if rng.random() < prof.dup:
                n += 1
                while rng.random() < 0.5:
                    n += 1
            for i in range(n):
                self.create(st, prof, truth, t, rng, "duplicate_record" if i else None)
            return True
        own = st.entity_records(self.eid, own=True)
        mutated = False
        if kind == "delete":
            for rec in own:
                if rng.random() < prof.miss:
                    continue
                st.remove(rec.rid)
                self.emit(s, rec.rid, t, "delete")
                mutated = True
            return mutated
        truth = self.truth(t)
        for rec in own:
            if rng.random() < prof.miss:
                continue
            written = []
            for p in changed:
                if not same_value(rec.doc.get(p), truth[p]):
                    self.emit(s, rec.rid, t, "set", p, rec.doc.get(p), truth[p])
                    rec.doc[p] = truth[p]
                    written.append(p)
            if written:
                mutated = True
                self.cell_errors(s, prof, rec, set(written), t, rng)
        return mutated

    def create(self, st, prof, truth, t, rng, cls=None) -> Record:
        rec = Record(self.new_rid(st.index), self.eid, dict(truth))
        st.add(rec)
        self.emit(st.index, rec.rid, t, "create", post=dict(rec.doc), cls=cls)
        self.cell_errors(st.index, prof, rec, None, t, rng)
        return rec

    # copies ------------------------------------------------------------------------------

    def execute_copy_event(self, j: int, t: int) -> None:
        sim = self.sim
        spec = sim.copies[j]
        origin, target = self.states[spec.origin], self.states[spec.target]
        rng = self.copy_rngs.get(j)
        if rng is None:
            rng = self.copy_rngs[j] = Stream(derive_key(sim.seed, "copy", j, self.eid))
        live = {}
        for rec in origin.entity_records(self.eid):
            live[rec.rid] = rec
        existing = {r.origin[1]: r for r in target.entity_records(self.eid, own=False) if r.spec == j}
        prof = sim.profiles[spec.target][sim.profile_at(spec.target, t)]
        tr = sim.transforms[j]
        for orid, orec in live.items():
            values = {p: orec.doc.get(p) for p in spec.scope}
            if tr is not None:
                values = {p: v for p, v in tr.apply(values).items() if p in values}
            trec = existing.get(orid)
            if trec is None:
                doc = {p: values.get(p) for p in sim.paths}
                trec = Record(self.new_rid(spec.target), self.eid, doc, (spec.origin, orid), j)
                target.add(trec)
                self.emit(spec.target, trec.rid, t, "copy", post=dict(doc), origin=(spec.origin, orid))
                moved = list(spec.scope)
            else:
                moved = []
                for p in spec.scope:
                    if not same_value(trec.doc.get(p), values[p]):
                        self.emit(spec.target, trec.rid, t, "copy", p, trec.doc.get(p), values[p],
                                  origin=(spec.origin, orid))
                        trec.doc[p] = values[p]
                        moved.append(p)
            if spec.transform_error_rate > 0:
                for p in moved:
                    if rng.random() < spec.transform_error_rate:
                        self.transform_error(spec.target, prof, trec, p, t, rng)
        for orid, trec in existing.items():
            if orid not in live:
                target.remove(trec.rid)
                self.emit(spec.target, trec.rid, t, "delete", origin=(spec.origin, orid))

    def transform_error(self, s, prof, rec, path, t, rng) -> bool:
        allowed = prof.mask.get(path)
        classes = [c for c in _TRANSFORM_CLASSES if allowed is None or c in allowed or c == "missing"]
        rng.shuffle(classes)
        for cls in classes:
            if self.corrupt(s, rec, path, cls, t, rng):
                return True
        return False

    # profile changes ------------------------------------------------------------------------

    def apply_profile_change_event(self, sub: int, t: int) -> None:
        sim = self.sim
        s = sub % 1000
        st = self.states[s]
        k = sim.profile_at(s, t)
        old, new = sim.profiles[s][k - 1], sim.profiles[s][k]
        rng = self.rngs[s]
        eh = self.eh
        alive = eh.alive_at(t)
        # after a deletion the tracked document is the last alive state
        doc = self.cur
        was = in_scope(old.scope, self.eid, doc, sim.scope_key)
        now = in_scope(new.scope, self.eid, doc, sim.scope_key)
        own = st.entity_records(self.eid, own=True)
        if was and not now:
            for rec in own:
                st.remove(rec.rid)
                self.emit(s, rec.rid, t, "delete", cls=None)
            own = []
        elif now and not was and alive and not own:
            self.create(st, new, doc, t, rng)
        if old.steps != new.steps:
            for rec in st.entity_records(self.eid):
                self.emit(s, rec.rid, t, "migrate", pre=k - 1, post=k)

    # maintenance ------------------------------------------------------------------------------

    def maintenance(self, t: int) -> None:
        sim = self.sim
        for s in sim.order:
            st = self.states[s]
            recs = st.entity_records(self.eid)
            if not recs:
                continue
            prof = sim.profiles[s][sim.profile_at(s, t)]
            if prof.maint <= 0 or not prof.cells:
                continue
            rng = self.rngs[s]
            n = len(prof.cells)
            for rec in recs:
                for i in _skip_positions(n, prof.maint, rng):
                    p, total, cum = prof.cells[i]
                    self.corrupt(s, rec, p, _pick(cum, rng.random() * total), t, rng)


# -- results ------------------------------------------------------------------------------


class SimulationResult:
    def __init__(self, states, log, names):
        self.states = states
        self.log = log
        self.names = names

    def entries(self):
        for e in self.log:
            yield entry_dict(e, self.names)

    def lines(self):
        for e in self.log:
            yield provenance_line(e, self.names)


def entry_dict(e, names) -> dict:
    s, rid, eid, at, seq, op, path, pre, post, cls, origin = e
    return {"source": names[s], "record_id": rid, "entity_id": eid, "at": at, "seq": seq, "op": op,
            "path": path, "pre": pre, "post": post, "class": cls,
            "origin": None if origin is None else {"source": names[origin[0]], "record_id": origin[1]}}


def provenance_line(e, names) -> str:
    s, rid, eid, at, seq, op, path, pre, post, cls, origin = e
    org = "null" if origin is None else f'{{"source":"{names[origin[0]]}","record_id":"{origin[1]}"}}'
    return (f'{{"source":"{names[s]}","record_id":"{rid}","entity_id":{eid},"at":{at},"seq":{seq},'
            f'"op":"{op}","path":{encode_value(path)},"pre":{encode_value(pre)},"post":{encode_value(post)},'
            f'"class":{encode_value(cls)},"origin":{org}}}\n')


def replay(entries, n_sources: int | None = None) -> dict:
    """Rebuild {source: {record_id: doc}} from provenance entries alone."""
    out: dict = {}
    for e in entries:
        store = out.setdefault(e["source"], {})
        op = e["op"]
        if op in ("create", "copy") and e["path"] is None:
            store[e["record_id"]] = dict(e["post"])
        elif op in ("set", "error", "copy"):
            doc = store[e["record_id"]]
            if not same_value(doc.get(e["path"]), e["pre"]):
                raise ValueError(f"provenance pre-value mismatch at {e}")
            doc[e["path"]] = e["post"]
        elif op == "delete":
            del store[e["record_id"]]
    return out


def measure_states(states, histories, horizon: int) -> list:
    """Per source (corrupted cells, true cells) over the records alive at ``horizon``."""
    by_id = {eh.entity_id: eh for eh in histories}
    out = []
    for st in states:
        bad = total = 0
        truth_cache: dict = {}
        for rec in st.records.values():
            if rec.entity not in truth_cache:
                eh = by_id[rec.entity]
                truth_cache[rec.entity] = eh.doc_at(horizon) if eh.alive_at(horizon) else None
            b, n = pollution_counts(truth_cache[rec.entity], rec.doc)
            bad += b
            total += n
        out.append((bad, total))
    return out


def simulate(history: DataHistory, config: GenerationConfig, *, kinds=None, semantic=None, pools=None):
    """(states, provenance entries) for a whole history held in memory."""
    sim = Simulator(config, kinds=kinds, semantic=semantic, pools=pools)
    res = sim.run(list(history))
    return res.states, list(res.entries())


__all__ = [
    "Record", "SourceState", "Simulator", "SimulationResult", "simulate", "make_outdated", "in_scope",
    "entry_dict", "provenance_line", "replay", "measure_states",
]
