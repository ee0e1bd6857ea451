"""Phase 4: synthesize a constraint-valid data history from the prepared snapshot.

Constraint handling is by construction rather than by search:

* single-column Unique / TemporalUnique paths receive fresh values that
  no entity has ever held (auto-increment for numbers, unused calendar
  days for dates, a keyed permutation of the dominant character shape for
  other text);
* every composite Unique set gets an *anchor* member that is refreshed
  whenever any member changes, which keeps the tuple fresh as well;
* FD paths are grouped into connected components and always take their
  values jointly from one input row, so every FD of the (valid) input
  keeps holding.

The fresh-value counters are the only state shared between entities.  They
are advanced in entity order, so the history is identical no matter how
the entity range is later partitioned.
"""

from __future__ import annotations

import bisect
import datetime
import heapq
import math
from decimal import Decimal

from . import formats
from .exceptions import ConstraintDeadlock, ExhaustedRetries
from .model import DataHistory, EntityHistory, FunctionalDependency, TemporalUnique, Unique, VersionedValue
from .profiling.stats import PathStats
from .rng import Stream, derive_key
from .values import BOOLEAN, LIST, NUMBER, TEXT, kind_of

POOL_SIZE = 5000
_CLASSES = {"a": "abcdefghijklmnopqrstuvwxyz", "A": "ABCDEFGHIJKLMNOPQRSTUVWXYZ", "9": "0123456789"}


def _shape_key(s: str) -> tuple:
    return tuple("a" if "a" <= ch <= "z" else "A" if "A" <= ch <= "Z" else "9" if "0" <= ch <= "9" else "=" + ch
                  for ch in s)


class NumberFresh:
    """max + (k + 1) * step at the observed scale."""

    def __init__(self, values):
        nums = [v for v in values if isinstance(v, Decimal)]
        scale = 0
        for v in nums:
            exp = v.as_tuple().exponent
            if isinstance(exp, int):
                scale = max(scale, -exp)
        self.step = Decimal(1).scaleb(-scale)
        self.base = max(nums) if nums else Decimal(0)
        self.base = self.base.quantize(self.step)

    def value(self, k: int):
        return self.base + (k + 1) * self.step

    def capacity(self):
        return math.inf


class _Permuted:
    """Keyed affine permutation of [0, C) that skips the indices of observed values."""

    def _setup(self, cap: int, key: int, observed_idx) -> None:
        self.C = cap
        self.a = (key % cap) | 1 if cap > 1 else 1
        while math.gcd(self.a, cap) != 1:
            self.a = (self.a + 2) % cap or 1
        self.b = (key >> 17) % cap
        a_inv = pow(self.a, -1, cap) if cap > 1 else 0
        self.excluded = sorted({((i - self.b) * a_inv) % cap if cap > 1 else 0 for i in observed_idx})

    def capacity(self):
        return self.C - len(self.excluded)

    def value(self, k: int):
        if k >= self.capacity():
            raise ConstraintDeadlock("fresh key space exhausted")
        pos = k
        while True:
            nxt = k + bisect.bisect_right(self.excluded, pos)
            if nxt == pos:
                break
            pos = nxt
        return self._render((self.a * pos + self.b) % self.C)


class TextFresh(_Permuted):
    """k-th value of a keyed permutation over the dominant shape, skipping input values."""

    def __init__(self, values, needed: int, key: int):
        texts = [v for v in values if isinstance(v, str)]
        counts: dict = {}
        for s in texts:
            k = _shape_key(s)
            counts[k] = counts.get(k, 0) + 1
        if not counts:
            raise ConstraintDeadlock("no text values to derive fresh keys from")
        shape = max(sorted(counts), key=counts.get)
        members = [s for s in texts if _shape_key(s) == shape]
        observed = [sorted({s[i] for s in members}) for i in range(len(shape))]
        full = [_CLASSES[c] if c in _CLASSES else c[1] for c in shape]
        levels = [
            observed,
            [list(full[i]) if len(observed[i]) > 1 else observed[i] for i in range(len(shape))],
            [list(f) for f in full],
        ]
        need = len(texts) + needed + 1
        for alphabets in levels:
            cap = 1
            for a in alphabets:
                cap *= len(a)
            if cap >= need:
                break
        self.alphabets = alphabets
        index_of = [{ch: i for i, ch in enumerate(a)} for a in alphabets]
        seen = []
        for s in set(texts):
            if len(s) != len(alphabets):
                continue
            idx = 0
            for ch, lookup in zip(s, index_of):
                j = lookup.get(ch)
                if j is None:
                    break
                idx = idx * len(lookup) + j
            else:
                seen.append(idx)
        self._setup(cap, key, seen)

    def _render(self, idx: int) -> str:
        chars = []
        for alpha in reversed(self.alphabets):
            idx, r = divmod(idx, len(alpha))
            chars.append(alpha[r])
        return "".join(reversed(chars))


class DateFresh(_Permuted):
    """Unused calendar dates in the observed format, drawn from a window around the observed range.

    The window grows symmetrically until it holds enough unused days.
    """

    def __init__(self, values, needed: int, key: int):
        texts = [v for v in values if isinstance(v, str)]
        fmts = {formats.detect(v, "date") for v in texts}
        if not texts or len(fmts) != 1 or None in fmts:
            raise ConstraintDeadlock("values are not dates in one format")
        self.fmt = fmts.pop()
        days = {datetime.date(*formats._parse(v, self.fmt)).toordinal() for v in texts}
        lo, hi = min(days), max(days)
        first, last = datetime.date(1, 1, 1).toordinal(), datetime.date(9999, 12, 31).toordinal()
        need = needed + 1
        span = max(1, hi - lo)
        while hi - lo + 1 - len(days) < need:
            if lo == first and hi == last:
                raise ConstraintDeadlock("date space exhausted")
            lo, hi = max(first, lo - span), min(last, hi + span)
            span *= 2
        self.lo = lo
        self._setup(hi - lo + 1, key, [d - lo for d in days])

    def _render(self, idx: int) -> str:
        d = datetime.date.fromordinal(self.lo + idx)
        return formats.convert(d.isoformat(), self.fmt, "date:iso")


# -- value synthesis ----------------------------------------------------------------


def _date_shift(value: str, rng):
    fmt = formats.detect(value, "date")
    if fmt is None:
        return None
    y, m, d = formats._parse(value, fmt)
    base = datetime.date(y, m, d)
    for _ in range(4):
        delta = rng.randint(1, 365) * (1 if rng.random() < 0.5 else -1)
        try:
            new = base + datetime.timedelta(days=delta)
        except OverflowError:
            continue
        if 1 <= new.year <= 9999:
            return formats._render((new.year, new.month, new.day), fmt)
    return None


def _digit_edit(text: str, rng, edits: int = 1):
    spots = [i for i, ch in enumerate(text) if ch.isdigit()]
    if not spots:
        return None
    chars = list(text)
    for _ in range(edits):
        i = rng.choice(spots)
        chars[i] = rng.choice([d for d in "0123456789" if d != chars[i]])
    return "".join(chars)


def _char_edit(text: str, rng):
    if not text:
        return None
    i = rng.randrange(len(text))
    ch = text[i]
    if ch.isdigit():
        pool = "0123456789"
    elif ch.isalpha():
        pool = "abcdefghijklmnopqrstuvwxyz"
    else:
        return None
    new = rng.choice([c for c in pool if c != ch.lower()])
    return text[:i] + (new.upper() if ch.isupper() else new) + text[i + 1:]


def _number_in_range(stats: PathStats, current, rng, kind):
    lo, hi = stats.number_min, stats.number_max
    if lo is None or lo == hi:
        return None
    step = Decimal(1).scaleb(-stats.number_scale)
    n = int((hi - lo) / step)
    if kind == "correct" and isinstance(current, Decimal):
        j = int((current - lo) / step) + (1 if rng.random() < 0.5 else -1)
        j = min(max(j, 0), n)
    else:
        j = rng.randint(0, n)
    return (lo + j * step).quantize(step)


def synthesize_update(current, path, change_model, profile, t, rng, *, pool=(), semantic="unknown",
                      max_retries: int = 10, fresh=None):
    """A new value for ``path`` that differs from ``current``.

    The value keeps the path's kind and observed length (text) or range
    (numbers).  ``fresh`` is a callable for constraint-bound paths; when
    given it supplies the value directly.
    """
    if fresh is not None:
        return fresh()
    stats = profile.paths[path] if hasattr(profile, "paths") else profile[path]
    kind = stats.dominant_kind
    dist = (change_model.kind_distribution.get(path) if change_model else None) or {"replace": 1.0}
    lmin, lmax = stats.length_min or 0, stats.length_max or 0
    for _ in range(max_retries):
        how = rng.weighted(list(dist), list(dist.values()))
        new = None
        if kind == BOOLEAN:
            new = (not current) if isinstance(current, bool) else bool(rng.random() < 0.5)
        elif kind == NUMBER:
            new = _number_in_range(stats, current, rng, how)
        elif kind == LIST:
            if how == "append" and isinstance(current, list) and pool:
                other = rng.choice(pool)
                if isinstance(other, list) and other:
                    new = current + [rng.choice(other)]
            if new is None and pool:
                new = rng.choice(pool)
            if isinstance(new, list) and stats.length_max is not None and len(new) > stats.length_max:
                new = None
        else:
            cur = current if isinstance(current, str) else None
            if semantic == "date" and cur is not None:
                new = _date_shift(cur, rng)
            elif semantic in ("identifier", "phone") and cur is not None and any(ch.isdigit() for ch in cur):
                new = _digit_edit(cur, rng, 1 if how == "correct" else rng.randint(1, 3))
            elif how == "correct" and cur is not None:
                new = _char_edit(cur, rng)
            elif how == "append" and cur is not None and pool:
                other = rng.choice(pool)
                words = other.split() if isinstance(other, str) else []
                if words:
                    new = cur + " " + rng.choice(words)
            if new is None and pool:
                new = rng.choice(pool)
            if isinstance(new, str) and not lmin <= len(new) <= lmax:
                new = None
        if new is None or new == current and kind_of(new) == kind_of(current):
            continue
        return new
    raise ExhaustedRetries(f"no admissible update for {path} at t={t}")


# -- generator -------------------------------------------------------------------------


def _differs(a, b) -> bool:
    return a != b or kind_of(a) != kind_of(b)


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        self.parent[self.find(a)] = self.find(b)


# anchors receive synthetic fresh values, so prefer columns where those look least odd
_ANCHOR_PREFERENCE = ("identifier", "numeric-measure", "free-text", "unknown", "address-part", "email", "phone",
                      "person-name", "date")


class HistoryGenerator:
    """Streams entity histories in EntityId order.

    Initial entities are the prepared rows (ids 0..N-1, created at t=0);
    ``round(max(0, volume_factor - 1) * N)`` more are inserted at uniform
    times in [1, horizon].
    """

    def __init__(self, prepared, change_model, rules, constraints, horizon: int, volume_factor: float, seed: int,
                 *, max_retries: int = 10, profile=None, semantic_types=None):
        if hasattr(prepared, "snapshot"):
            snapshot = prepared.snapshot
            profile = profile or prepared.profile
            semantic_types = semantic_types or prepared.schema.semantic_types
            self.paths = list(prepared.paths)
        else:
            snapshot = list(prepared)
            self.paths = list(snapshot[0][1]) if snapshot else []
        self.rows = [doc for _, doc in snapshot]
        self._row_of = {eid: i for i, (eid, _) in enumerate(snapshot)}
        self.initial_ids = [eid for eid, _ in snapshot]
        self.n0 = len(self.rows)
        self.horizon = int(horizon)
        self.seed = seed
        self.change_model = change_model
        self.rules = list(rules or [])
        self.max_retries = max_retries
        if profile is None:
            from .profiling.stats import profile_attributes
            profile = profile_attributes(self.rows)
        self.stats = profile.paths
        self.semantic = {p: (semantic_types[p].label if semantic_types and p in semantic_types else "unknown")
                         for p in self.paths}
        self.diagnostics: list = []
        self.n_inserts = int(round(max(0.0, volume_factor - 1.0) * self.n0)) if self.horizon > 0 else 0
        self.n_entities = self.n0 + self.n_inserts
        self.next_id = (max(self.initial_ids) + 1) if self.initial_ids else 0
        self._compile(list(constraints or []))
        self._pools = {}
        for p in self.paths:
            seen, pool = set(), []
            for d in self.rows:
                v = d.get(p)
                if v is None:
                    continue
                key = v if not isinstance(v, (list, dict)) else repr(v)
                if key not in seen:
                    seen.add(key)
                    pool.append(v)
                    if len(pool) >= POOL_SIZE:
                        break
            self._pools[p] = pool
        self._generated = 0

    # constraints ------------------------------------------------------------------

    def _compile(self, constraints):
        uniques = [tuple(c.paths) for c in constraints if isinstance(c, (Unique, TemporalUnique))]
        unique_sets = [set(u) for u in uniques]
        single = {u[0] for u in uniques if len(u) == 1}
        fds = [c for c in constraints if isinstance(c, FunctionalDependency)]
        self.frozen = set()
        uf = _UnionFind()
        fd_paths = set()
        for fd in fds:
            if not fd.lhs:
                self.frozen.update(fd.rhs)
                continue
            if any(u <= set(fd.lhs) for u in unique_sets):
                continue  # implied by a key
            members = list(fd.lhs) + list(fd.rhs)
            fd_paths.update(members)
            for m in members[1:]:
                uf.union(members[0], m)
        groups: dict = {}
        for p in self.paths:
            if p in fd_paths:
                groups.setdefault(uf.find(p), []).append(p)
        self.components = [g for g in groups.values()]
        self.comp_of = {p: i for i, g in enumerate(self.components) for p in g}
        self.inserts_blocked = False
        for g in self.components:
            if any(p in single for p in g):
                self.frozen.update(g)
                self.inserts_blocked = True
                self.diagnostics.append({"kind": "ConstraintDeadlock", "paths": g,
                                         "detail": "functional dependency component contains a key"})
        self.key_paths = {p for p in self.paths if p in single}
        self.fresh_paths = [p for p in self.paths if p in single]
        self.anchor_of_set = {}
        for u in uniques:
            if len(u) == 1 or any(p in single for p in u):
                continue
            cands = [p for p in u if p not in self.comp_of and p not in self.frozen and self._freshable(p)]
            if not cands:
                self.frozen.update(u)
                self.inserts_blocked = True
                self.diagnostics.append({"kind": "ConstraintDeadlock", "paths": list(u),
                                         "detail": "no anchor path outside functional dependencies"})
                continue
            anchor = min(cands, key=lambda p: (_ANCHOR_PREFERENCE.index(self.semantic.get(p, "unknown"))
                                               if self.semantic.get(p, "unknown") in _ANCHOR_PREFERENCE else 99,
                                               self.paths.index(p)))
            self.anchor_of_set[u] = anchor
            if anchor not in self.fresh_paths:
                self.fresh_paths.append(anchor)
        # component members move together, so one frozen member freezes the whole component
        for g in self.components:
            if any(p in self.frozen for p in g):
                self.frozen.update(g)
        self.sets_with = {}
        for u in self.anchor_of_set:
            for p in u:
                self.sets_with.setdefault(p, []).append(u)
        # members that can secure a composite key by taking a fresh value on update
        securing = [p for u in self.anchor_of_set for p in u
                    if p not in self.comp_of and p not in self.frozen and p not in self.fresh_paths and self._freshable(p)]
        self._fresh = {}
        self._fresh_next = {}
        for p in self.fresh_paths + list(dict.fromkeys(securing)):
            values = [d.get(p) for d in self.rows]
            rate = self.change_model.update_rates.get(p, 0.0) if self.change_model else 0.0
            needed = self.n_inserts + int(self.n_entities * rate * self.horizon / 1000.0 * 3) + 1000
            needed += int(self.n_entities * 0.5 * self.horizon / 1000.0 * 3) if p in self.anchor_of_set.values() else 0
            kinds = {kind_of(v) for v in values if v is not None}
            try:
                if kinds <= {NUMBER}:
                    self._fresh[p] = NumberFresh(values)
                elif kinds <= {TEXT}:
                    key = derive_key(self.seed, "fresh", p)
                    try:
                        self._fresh[p] = DateFresh(values, needed, key)
                    except ConstraintDeadlock:
                        self._fresh[p] = TextFresh(values, needed, key)
                else:
                    raise ConstraintDeadlock(f"no fresh-value scheme for {p}")
            except ConstraintDeadlock as exc:
                if p not in self.fresh_paths:
                    continue
                self.frozen.add(p)
                self.inserts_blocked = True
                self.diagnostics.append({"kind": "ConstraintDeadlock", "paths": [p], "detail": str(exc)})
                continue
            self._fresh_next[p] = 0
        if self.inserts_blocked and self.n_inserts:
            self.diagnostics.append({"kind": "ConstraintDeadlock", "paths": [],
                                     "detail": f"{self.n_inserts} inserts skipped"})
            self.n_inserts = 0
            self.n_entities = self.n0

    def _freshable(self, path) -> bool:
        kinds = {kind_of(d.get(path)) for d in self.rows if d.get(path) is not None}
        return bool(kinds) and (kinds <= {NUMBER} or kinds <= {TEXT})

    def fresh_value(self, path):
        k = self._fresh_next[path]
        v = self._fresh[path].value(k)
        self._fresh_next[path] = k + 1
        return v

    # entities ------------------------------------------------------------------------

    def entity_ids(self):
        return list(self.initial_ids) + list(range(self.next_id, self.next_id + self.n_inserts))

    def _insert_doc(self, rng: Stream, held: set) -> dict:
        doc = {p: self.rows[rng.randrange(self.n0)].get(p) for p in self.paths}
        for comp in self.components:
            donor = self.rows[rng.randrange(self.n0)]
            for q in comp:
                doc[q] = donor.get(q)
        for p in self.fresh_paths:
            if p in self._fresh:
                doc[p] = self.fresh_value(p)
                held.add(p)
        return doc

    def _donor(self, doc, comp, p, rng):
        """An input row that differs on ``p`` and, among a few draws, on the fewest other component paths."""
        best, best_n = None, None
        for _ in range(self.max_retries):
            donor = self.rows[rng.randrange(self.n0)]
            if not _differs(donor.get(p), doc.get(p)):
                continue
            n = sum(1 for q in comp if _differs(donor.get(q), doc.get(q)))
            if best is None or n < best_n:
                best, best_n = donor, n
                if n == 1:
                    break
        if best is None:
            raise ExhaustedRetries(f"no input row with a different value for {p}")
        return best

    def _transaction(self, eid, doc, paths, t, rng, held) -> dict:
        """New values for one update; ``held`` tracks paths whose value came from a fresh generator."""
        new = {}
        fresh = set()
        for p in self.paths:
            if p not in paths or p in new or p in self.frozen:
                continue
            try:
                if p in self.comp_of:
                    donor = self._donor(doc, self.components[self.comp_of[p]], p, rng)
                    for q in self.components[self.comp_of[p]]:
                        v = donor.get(q)
                        if _differs(v, doc.get(q)):
                            new[q] = v
                elif p in self.key_paths and p in self._fresh:
                    new[p] = self.fresh_value(p)
                    fresh.add(p)
                else:
                    new[p] = synthesize_update(doc.get(p), p, self.change_model, self.stats, t, rng,
                                               pool=self._pools[p], semantic=self.semantic[p],
                                               max_retries=self.max_retries)
            except (ExhaustedRetries, ConstraintDeadlock) as exc:
                self.diagnostics.append({"kind": type(exc).__name__, "entity": eid, "path": p, "at": t,
                                         "detail": str(exc)})
        # a composite key stays unique while one member holds a fresh value; otherwise the
        # updated member (or, failing that, the anchor) takes one
        for q in list(new):
            for u in self.sets_with.get(q, ()):
                if any(m in fresh or (m in held and m not in new) for m in u):
                    continue
                m = next((m for m in u if m in new and m in self._fresh), None)
                if m is None:
                    m = self.anchor_of_set[u]
                    if m not in self._fresh:
                        continue
                new[m] = self.fresh_value(m)
                fresh.add(m)
        for q in new:
            if q in fresh:
                held.add(q)
            else:
                held.discard(q)
        return new

    def generate_entity(self, eid: int) -> EntityHistory:
        rng = Stream(derive_key(self.seed, "entity", eid))
        held: set = set()
        if eid in self._row_of:
            created = 0
            doc = dict(self.rows[self._row_of[eid]])
        else:
            created = 1 + rng.randrange(self.horizon)
            doc = self._insert_doc(rng, held)
        deleted = None
        cm = self.change_model
        if cm is not None and cm.delete_rate > 0 and self.horizon > 0:
            d = created + 1 + int(rng.expovariate(cm.delete_rate / 1000.0))
            if d <= self.horizon:
                deleted = d
        last = (deleted - 1) if deleted is not None else self.horizon
        events: dict = {}
        if cm is not None and last > created:
            span = last - created
            for p in self.paths:
                rate = cm.update_rates.get(p, 0.0)
                if rate <= 0 or p in self.frozen:
                    continue
                for _ in range(rng.poisson(rate * span / 1000.0)):
                    events.setdefault(created + 1 + rng.randrange(span), set()).add(p)
        versions = {p: [VersionedValue(doc.get(p), created, None)] for p in self.paths}
        heap = sorted(events)
        rule_events: dict = {}
        while heap:
            t = heapq.heappop(heap)
            base = events.pop(t, None)
            extra = rule_events.pop(t, None)
            if base is None and extra is None:
                continue
            paths = set(base or ()) | set(extra or ())
            changes = self._transaction(eid, doc, paths, t, rng, held)
            # every actual change triggers rules, coupled ones included; consequents do not cascade
            triggers = set(changes) - (set(extra or ()) - set(base or ()))
            if self.rules and triggers:
                now = set()
                for rule in self.rules:
                    for t2, cons in apply_update_rule(rule, triggers, t, rng, last).items():
                        if t2 == t:
                            now.update(cons)
                        else:
                            rule_events.setdefault(t2, set()).update(cons)
                            heapq.heappush(heap, t2)
                now -= set(changes)
                if now:
                    changes.update(self._transaction(eid, dict(doc, **changes), now, t, rng, held))
            for p, v in changes.items():
                vs = versions[p]
                prev = vs[-1]
                vs[-1] = VersionedValue(prev.value, prev.valid_from, t)
                vs.append(VersionedValue(v, t, None))
                doc[p] = v
        if deleted is not None:
            for p, vs in versions.items():
                prev = vs[-1]
                vs[-1] = VersionedValue(prev.value, prev.valid_from, deleted)
        self._generated += 1
        return EntityHistory(eid, created, deleted, versions)

    def __iter__(self):
        for eid in self.entity_ids():
            yield self.generate_entity(eid)

    def partitions(self, size: int):
        """Yield lists of EntityHistory over consecutive entity-id ranges of ``size``."""
        batch = []
        for eh in self:
            batch.append(eh)
            if len(batch) >= size:
                yield batch
                batch = []
        if batch:
            yield batch


def generate_history(prepared, change_model, rules, constraints, horizon: int, volume_factor: float = 1.0,
                     seed: int = 0, **kwargs) -> DataHistory:
    gen = HistoryGenerator(prepared, change_model, rules, constraints, horizon, volume_factor, seed, **kwargs)
    history = DataHistory(list(gen.paths), horizon=gen.horizon)
    for eh in gen:
        history.add(eh)
    history.diagnostics = gen.diagnostics
    return history


def apply_update_rule(rule, trigger_paths, t: int, rng, last: int | None = None) -> dict:
    """Consequent updates emitted by one rule firing: {tick: set(paths)}."""
    if not set(rule.antecedent) <= set(trigger_paths):
        return {}
    if rng.random() >= rule.confidence:
        return {}
    lag = rng.randrange(max(1, rule.window))
    if last is not None and t + lag > last:
        return {}
    return {t + lag: set(rule.consequent)}
