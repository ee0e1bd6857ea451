"""Exact, bounded discovery of unique column combinations and minimal FDs."""

from __future__ import annotations

from itertools import combinations

import numpy as np

from ..model import FunctionalDependency, Unique
from ..values import encode_value


def _factorize(column: list) -> tuple[np.ndarray, int]:
    codes = np.empty(len(column), dtype=np.int64)
    index: dict = {}
    for i, v in enumerate(column):
        if type(v) is not str:
            # keep True, 1 and Decimal(1) apart
            v = (type(v).__name__, encode_value(v) if isinstance(v, (list, dict)) else v)
        codes[i] = index.setdefault(v, len(index))
    return codes, len(index)


def _combine(a: np.ndarray, a_card: int, b: np.ndarray, b_card: int) -> tuple[np.ndarray, int]:
    if a_card * b_card < (1 << 62):
        combined = a * b_card + b
    else:
        combined = np.unique(a, return_inverse=True)[1].astype(np.int64) * b_card + b
    uniq, inverse = np.unique(combined, return_inverse=True)
    return inverse.astype(np.int64).ravel(), len(uniq)


class _Partitions:
    """Distinct-count oracle with caching for column sets."""

    def __init__(self, columns: dict):
        self.single = {p: _factorize(vals) for p, vals in columns.items()}
        self.cache: dict = {}

    def codes(self, cols: tuple) -> tuple[np.ndarray, int]:
        if len(cols) == 1:
            return self.single[cols[0]]
        codes, card = self.codes(cols[:-1])
        c2, k2 = self.single[cols[-1]]
        return _combine(codes, card, c2, k2)

    def distinct(self, cols: tuple) -> int:
        if not cols:
            return 1
        if cols not in self.cache:
            self.cache[cols] = self.codes(cols)[1]
        return self.cache[cols]


def discover_constraints(dataset, max_lhs: int = 2) -> list:
    """Minimal Unique sets (no nulls) and minimal exact FDs with |lhs| <= max_lhs.

    The empty lhs is allowed: a constant column ``c`` yields ``{} -> c``.
    An empty dataset carries no evidence and yields nothing.
    """
    if max_lhs < 1:
        raise ValueError("max_lhs must be >= 1")
    docs = [item[1] if isinstance(item, tuple) else item for item in dataset]
    if not docs:
        return []
    paths = []
    for d in docs:
        for k in d:
            if k not in paths:
                paths.append(k)
    columns = {p: [d.get(p) for d in docs] for p in paths}
    has_null = {p: any(v is None for v in col) for p, col in columns.items()}
    n = len(docs)
    parts = _Partitions(columns)

    out = []
    uniques: list[set] = []
    for size in range(1, max_lhs + 1):
        for cols in combinations(paths, size):
            if any(has_null[c] for c in cols):
                continue
            if any(u <= set(cols) for u in uniques):
                continue
            if parts.distinct(cols) == n:
                uniques.append(set(cols))
                out.append(Unique(tuple(cols)))

    # fds[rhs] -> list of minimal lhs sets found so far
    found: dict = {p: [] for p in paths}
    for size in range(0, max_lhs + 1):
        for lhs in combinations(paths, size):
            lhs_set = set(lhs)
            d_lhs = parts.distinct(lhs)
            for rhs in paths:
                if rhs in lhs_set:
                    continue
                if any(prev <= lhs_set for prev in found[rhs]):
                    continue
                both = tuple(sorted(lhs + (rhs,), key=paths.index))
                if parts.distinct(both) == d_lhs:
                    found[rhs].append(lhs_set)
                    out.append(FunctionalDependency(tuple(lhs), (rhs,)))
    return out
