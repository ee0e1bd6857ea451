"""Temporal characteristics: update transactions, windowed itemset mining, change model."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations

from ..data import load_table
from ..model import DataHistory
from ..values import as_text

UPDATE_KINDS = ("replace", "append", "correct")


@dataclass(frozen=True)
class UpdateTransaction:
    at: int
    entity: int
    items: frozenset

    def __post_init__(self):
        if not self.items:
            raise ValueError("transaction must contain at least one item")


@dataclass(frozen=True)
class UpdateRule:
    antecedent: tuple
    consequent: tuple
    window: int
    support: float
    confidence: float

    def __post_init__(self):
        if set(self.antecedent) & set(self.consequent):
            raise ValueError("antecedent and consequent must be disjoint")

    def to_dict(self):
        return {"antecedent": list(self.antecedent), "consequent": list(self.consequent),
                "window": self.window, "support": self.support, "confidence": self.confidence}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["antecedent"]), tuple(d["consequent"]), int(d["window"]),
                   float(d.get("support", 0.0)), float(d["confidence"]))


def extract_update_transactions(history: DataHistory) -> list[UpdateTransaction]:
    """One transaction per (entity, tick) where a version begins after creation."""
    out = []
    for eh in history:
        by_tick = defaultdict(set)
        for path, versions in eh.versions.items():
            for v in versions:
                if v.valid_from != eh.created_at:
                    by_tick[v.valid_from].add(path)
        for t, items in by_tick.items():
            out.append(UpdateTransaction(t, eh.entity_id, frozenset(items)))
    out.sort(key=lambda tr: (tr.at, tr.entity))
    return out


def window_masks(transactions, window: int) -> tuple[dict, int]:
    """Per item, a bitmask over windows whose union contains the item.

    Window ``s`` covers transactions ``[s, s + window)``; there are
    ``max(1, n - window + 1)`` windows.
    """
    n = len(transactions)
    if n == 0:
        return {}, 0
    n_windows = max(1, n - window + 1)
    occurrences: dict = defaultdict(int)
    for i, tr in enumerate(transactions):
        items = tr.items if isinstance(tr, UpdateTransaction) else tr
        for item in items:
            occurrences[item] |= 1 << i
    full = (1 << n_windows) - 1
    masks = {}
    for item, m in occurrences.items():
        w = m
        for k in range(1, window):
            w |= m >> k
        masks[item] = w & full
    return masks, n_windows


def frequent_itemsets(transactions, window: int, min_support: float) -> tuple[dict, int]:
    """Apriori over window unions; returns itemset(tuple) -> window count.

    Itemsets that never occur are not frequent, even at ``min_support`` 0.
    """
    masks, n_windows = window_masks(transactions, window)
    if not n_windows:
        return {}, 0
    counts: dict = {}
    level = {}
    for item in sorted(masks):
        c = masks[item].bit_count()
        if c and c / n_windows >= min_support:
            level[(item,)] = masks[item]
            counts[(item,)] = c
    while level:
        keys = sorted(level)
        nxt = {}
        for i, a in enumerate(keys):
            for b in keys[i + 1:]:
                if a[:-1] != b[:-1]:
                    break
                cand = a + (b[-1],)
                if any(sub not in level for sub in combinations(cand, len(cand) - 1)):
                    continue
                m = level[a] & masks[b[-1]]
                c = m.bit_count()
                if c and c / n_windows >= min_support:
                    nxt[cand] = m
                    counts[cand] = c
        level = nxt
    return counts, n_windows


def mine_update_dependencies(transactions, window: int = 1, min_support: float = 0.1,
                             min_confidence: float = 0.7) -> list[UpdateRule]:
    """Association rules ``update of A -> update of B`` under sliding-window support.

    Support of X is the fraction of windows of ``window`` consecutive
    transactions whose union contains X; confidence is
    ``count(A u B) / count(A)``.  ``window=1`` is plain per-transaction mining.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if not transactions:
        return []
    counts, n_windows = frequent_itemsets(transactions, window, min_support)
    found = []
    for itemset, c in counts.items():
        k = len(itemset)
        if k < 2:
            continue
        for r in range(1, k):
            for ante in combinations(itemset, r):
                conf = c / counts[ante]
                if conf >= min_confidence:
                    cons = tuple(x for x in itemset if x not in ante)
                    found.append((k, ante, cons, c / n_windows, conf))
    found.sort(key=lambda f: f[:3])
    # antecedent and consequent partition the itemset, so validation is skipped
    return [_rule(ante, cons, window, sup, conf) for _, ante, cons, sup, conf in found]


def _rule(ante, cons, window, sup, conf):
    rule = object.__new__(UpdateRule)
    object.__setattr__(rule, "__dict__", {"antecedent": ante, "consequent": cons, "window": window,
                                          "support": sup, "confidence": conf})
    return rule


# -- change model ----------------------------------------------------------------


@dataclass
class ChangeModel:
    """Rates are per entity per 1000 ticks."""

    update_rates: dict = field(default_factory=dict)
    kind_distribution: dict = field(default_factory=dict)
    insert_rate: float = 0.0
    delete_rate: float = 0.0
    inter_record_rules: list = field(default_factory=list)  # user supplied only

    def __post_init__(self):
        for p, r in self.update_rates.items():
            if r < 0:
                raise ValueError(f"negative update rate for {p}")
        for p, dist in self.kind_distribution.items():
            if abs(sum(dist.values()) - 1.0) > 1e-9:
                raise ValueError(f"update kind distribution for {p} must sum to 1")
        if self.insert_rate < 0 or self.delete_rate < 0:
            raise ValueError("rates must be non-negative")

    def to_dict(self):
        return {"update_rates": dict(self.update_rates), "kind_distribution": dict(self.kind_distribution),
                "insert_rate": self.insert_rate, "delete_rate": self.delete_rate,
                "inter_record_rules": list(self.inter_record_rules)}

    @classmethod
    def from_dict(cls, d):
        return cls(dict(d.get("update_rates", {})), {k: dict(v) for k, v in d.get("kind_distribution", {}).items()},
                   float(d.get("insert_rate", 0.0)), float(d.get("delete_rate", 0.0)),
                   list(d.get("inter_record_rules", [])))


def _bounded_distance(a: str, b: str, cap: int = 2) -> int:
    if abs(len(a) - len(b)) > cap:
        return cap + 1
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        if min(cur) > cap:
            return cap + 1
        prev = cur
    return prev[-1]


def classify_update(old, new) -> str:
    if isinstance(old, list) and isinstance(new, list) and len(new) > len(old) and new[:len(old)] == old:
        return "append"
    a, b = as_text(old), as_text(new)
    if old is not None and len(b) > len(a) and b.startswith(a):
        return "append"
    if old is not None and new is not None and _bounded_distance(a, b) <= 2:
        return "correct"
    return "replace"


def default_change_model(paths, semantic_types: dict, constant_paths=()) -> ChangeModel:
    table = load_table("change_defaults")
    rates = {}
    kinds = {}
    for p in paths:
        st = semantic_types.get(p)
        label = st.label if st is not None else "unknown"
        rates[p] = 0.0 if p in constant_paths else float(table["update_rates"].get(label, table["update_rates"]["unknown"]))
        kinds[p] = dict(table["kinds"])
    return ChangeModel(rates, kinds, float(table["insert_rate"]), float(table["delete_rate"]))


def change_model_from_history(history: DataHistory) -> ChangeModel:
    """Empirical rates and update-kind mix from an observed history."""
    horizon = history.horizon
    exposure = 0
    updates = defaultdict(int)
    kinds = defaultdict(lambda: dict.fromkeys(UPDATE_KINDS, 0))
    initial = inserts = deletes = 0
    for eh in history:
        end = eh.deleted_at if eh.deleted_at is not None else horizon
        exposure += max(0, end - eh.created_at)
        if eh.created_at == 0:
            initial += 1
        else:
            inserts += 1
        if eh.deleted_at is not None:
            deletes += 1
        for p, versions in eh.versions.items():
            for prev, v in zip(versions, versions[1:]):
                updates[p] += 1
                kinds[p][classify_update(prev.value, v.value)] += 1
    scale = 1000.0 / exposure if exposure else 0.0
    rates = {p: updates.get(p, 0) * scale for p in history.paths}
    dist = {}
    for p in history.paths:
        total = sum(kinds[p].values()) if p in kinds else 0
        dist[p] = ({k: c / total for k, c in kinds[p].items()} if total
                   else {"replace": 1.0, "append": 0.0, "correct": 0.0})
    insert_rate = inserts / initial * 1000.0 / horizon if initial and horizon else 0.0
    return ChangeModel(rates, dist, insert_rate, deletes * scale)
