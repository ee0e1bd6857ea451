"""Error classes and their injection functions."""

from __future__ import annotations

from decimal import Decimal
from enum import Enum

from . import formats
from .data import load_table
from .exceptions import InapplicableClass, UnknownErrorClass
from .values import BOOLEAN, LIST, NUMBER, TEXT, encode_value, kind_of


class ErrorClass(str, Enum):
    TYPO = "typo"
    PHONETIC = "phonetic"
    FORMAT_CHANGE = "format_change"
    MISSING = "missing"
    ATTRIBUTE_SWAP = "attribute_swap"
    OUTDATED = "outdated"
    MERGED_ATTRIBUTES = "merged_attributes"
    SPLIT_ERROR = "split_error"
    LIST_ORDER = "list_order"
    WRONG_REFERENCE = "wrong_reference"
    DUPLICATE_RECORD = "duplicate_record"


# classes that can be leaves of the pollution hierarchy (duplicates have their own rate)
LEAF_CLASSES = tuple(c.value for c in ErrorClass if c is not ErrorClass.DUPLICATE_RECORD)
RECORD_CLASSES = ("attribute_swap", "merged_attributes", "split_error")

KINDS = {
    "typo": {TEXT, NUMBER},
    "phonetic": {TEXT},
    "format_change": {TEXT, NUMBER},
    "missing": {TEXT, NUMBER, BOOLEAN, LIST},
    "attribute_swap": {TEXT, NUMBER, BOOLEAN},
    "outdated": {TEXT, NUMBER, BOOLEAN, LIST},
    "merged_attributes": {TEXT},
    "split_error": {TEXT},
    "list_order": {LIST},
    "wrong_reference": {TEXT, NUMBER},
}

TYPO_VARIANTS = ("insert", "delete", "substitute", "transpose")
# transposition is an edit of distance 2 under plain Levenshtein, so random
# typos use only the three single-character edits
_RANDOM_TYPO = ("insert", "delete", "substitute", "substitute")
_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def check_class(name) -> str:
    value = name.value if isinstance(name, ErrorClass) else name
    if value not in KINDS and value != ErrorClass.DUPLICATE_RECORD.value:
        raise UnknownErrorClass(f"unknown error class {name!r}")
    return value


def applicable_kinds(name) -> set:
    return KINDS[check_class(name)]


def _neighbors() -> dict:
    return load_table("keyboard_qwerty")["neighbors"]


def _rules() -> list:
    return [tuple(r) for r in load_table("phonetic_rules")["rules"]]


def _case_like(template: str, ch: str) -> str:
    return ch.upper() if template.isupper() else ch


def _near(ch: str, rng) -> str:
    adj = _neighbors().get(ch.lower(), "")
    if adj:
        return _case_like(ch, rng.choice(adj))
    pool = [c for c in _LETTERS if c != ch.lower()]
    return _case_like(ch, rng.choice(pool))


def typo(text: str, rng, variant: str | None = None, position: int | None = None) -> str:
    """One keyboard-adjacency weighted edit.  Random variants keep Levenshtein distance 1."""
    if variant is None:
        variant = rng.choice(_RANDOM_TYPO) if len(text) > 1 else ("insert" if not text else rng.choice(("insert", "substitute")))
    if variant not in TYPO_VARIANTS:
        raise ValueError(f"unknown typo variant {variant!r}")
    n = len(text)
    if variant == "insert":
        i = rng.randint(0, n) if position is None else position
        anchor = text[i - 1] if i > 0 else (text[0] if text else "a")
        return text[:i] + _near(anchor, rng) + text[i:]
    if n == 0:
        raise InapplicableClass("cannot edit an empty string")
    if variant == "delete":
        i = rng.randrange(n) if position is None else position
        return text[:i] + text[i + 1:]
    if variant == "substitute":
        i = rng.randrange(n) if position is None else position
        return text[:i] + _near(text[i], rng) + text[i + 1:]
    # transpose
    if position is None:
        spots = [i for i in range(n - 1) if text[i] != text[i + 1]]
        if not spots:
            raise InapplicableClass("no transposable pair")
        position = rng.choice(spots)
    i = position
    if i + 1 >= n or text[i] == text[i + 1]:
        raise InapplicableClass("transposition would not change the value")
    return text[:i] + text[i + 1] + text[i] + text[i + 2:]


def _number_typo(value: Decimal, rng) -> Decimal:
    text = str(value)
    digits = [i for i, ch in enumerate(text) if ch.isdigit()]
    options = []
    for i in digits:
        adj = [c for c in _neighbors().get(text[i], "") if c.isdigit()]
        leading = i == 0 or (i == 1 and text[0] == "-")
        if leading:
            adj = [c for c in adj if c != "0"]
        if adj:
            options.append((i, adj))
    if not options:
        raise InapplicableClass("number has no editable digit")
    i, adj = rng.choice(options)
    return Decimal(text[:i] + rng.choice(adj) + text[i + 1:])


def phonetic(text: str, rng, rule=None) -> str:
    low = text.lower()
    if rule is not None:
        pat, rep = rule
        i = low.find(pat)
        if i < 0:
            raise InapplicableClass(f"rule {pat}->{rep} does not match")
        hits = [(i, pat, rep)]
    else:
        hits = []
        for pat, rep in _rules():
            start = low.find(pat)
            while start >= 0:
                hits.append((start, pat, rep))
                start = low.find(pat, start + 1)
        if not hits:
            raise InapplicableClass("no phonetic rule matches")
    i, pat, rep = rng.choice(hits)
    if text[i:i + 1].isupper():
        rep = rep[:1].upper() + rep[1:]
    return text[:i] + rep + text[i + len(pat):]


def inject_error(value, error_class, params=None, rng=None):
    """Corrupt one value.  Record-level and history-based classes are not handled here."""
    cls = check_class(error_class)
    params = params or {}
    kind = kind_of(value)
    if cls in RECORD_CLASSES or cls == "outdated" or cls == "duplicate_record":
        raise InapplicableClass(f"{cls} is not a value-level error class")
    if cls == "missing":
        return None
    if kind not in KINDS[cls]:
        raise InapplicableClass(f"{cls} does not apply to {kind} values")
    if cls == "typo":
        if kind == NUMBER:
            return _number_typo(value, rng)
        return typo(value, rng, params.get("variant"), params.get("position"))
    if cls == "phonetic":
        return phonetic(value, rng, params.get("rule"))
    if cls == "format_change":
        families = [params["family"]] if params.get("family") else list(formats.FAMILIES)
        for family in families:
            if params.get("format"):
                if formats.detect(value, family) not in (None, params["format"]):
                    return formats.convert(value, params["format"])
                continue
            alts = formats.alternatives(value, family)
            if alts:
                return formats.convert(value, rng.choice(alts))
        raise InapplicableClass("value has no alternative format")
    if cls == "list_order":
        spots = [i for i in range(len(value) - 1) if encode_value(value[i]) != encode_value(value[i + 1])]
        if not spots:
            raise InapplicableClass("list has no distinct adjacent elements")
        i = rng.choice(spots) if params.get("position") is None else params["position"]
        out = list(value)
        out[i], out[i + 1] = out[i + 1], out[i]
        return out
    if cls == "wrong_reference":
        pool = [v for v in params.get("pool", ()) if v is not None and v != value]
        if not pool:
            raise InapplicableClass("no alternative reference available")
        return rng.choice(pool)
    raise InapplicableClass(cls)


def inject_record_error(doc: dict, error_class, path: str, partners, rng) -> list:
    """Apply a record-level class in place; returns [(path, pre, post), ...]."""
    cls = check_class(error_class)
    v = doc.get(path)
    if cls == "attribute_swap":
        kind = kind_of(v)
        cands = [q for q in partners if q != path and doc.get(q) is not None
                 and kind_of(doc[q]) == kind and doc[q] != v]
        if v is None or not cands:
            raise InapplicableClass("no swappable partner")
        q = rng.choice(cands)
        doc[path], doc[q] = doc[q], v
        return [(path, v, doc[path]), (q, doc[path], v)]
    if cls in ("merged_attributes", "split_error"):
        if not isinstance(v, str):
            raise InapplicableClass(f"{cls} needs a text value")
        cands = [q for q in partners if q != path and (doc.get(q) is None or isinstance(doc.get(q), str))]
        if not cands:
            raise InapplicableClass("no text partner")
        q = cands[0]
        w = doc.get(q)
        if cls == "merged_attributes":
            if w is None:
                raise InapplicableClass("partner is empty")
            doc[path], doc[q] = f"{v} {w}", None
        else:
            head, sep, tail = v.rpartition(" ")
            if not sep or not head:
                raise InapplicableClass("value has a single token")
            doc[path], doc[q] = head, tail if w is None else f"{tail} {w}"
        return [(path, v, doc[path]), (q, w, doc[q])]
    raise InapplicableClass(f"{cls} is not a record-level class")
