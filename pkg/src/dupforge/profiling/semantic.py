"""Pattern/dictionary heuristics for semantic column types."""

from __future__ import annotations

import re
from decimal import Decimal

from ..model import SemanticType, path_key

LABELS = ("person-name", "email", "phone", "date", "address-part", "identifier",
          "numeric-measure", "free-text", "unknown")

_EMAIL = re.compile(r"^[^@\s]+@[^@\s]+\.[A-Za-z]{2,}$")
_PHONE = re.compile(r"^\+?[\d\s\-().]{7,20}$")
_DATE = re.compile(r"^(\d{4}-\d{2}-\d{2}|\d{1,2}[./]\d{1,2}[./]\d{4}|\d{8})$")
_NAME = re.compile(r"^[A-Z][a-z'\-]+(?: [A-Z][a-z'\-]+){0,2}$")
_STREET = re.compile(r"^\d+[A-Za-z]?\s+\S+.*$")
_IDENT = re.compile(r"^[A-Za-z]{0,4}[-_]?\d{2,}[A-Za-z]?$")
_ALPHA = re.compile(r"^[A-Za-z][A-Za-z .'\-]*$")

_NAME_HINTS = {
    "person-name": ("name", "first", "last", "surname", "given", "middle"),
    "email": ("mail",),
    "phone": ("phone", "tel", "mobile", "fax"),
    "date": ("date", "birth", "dob", "day"),
    "address-part": ("street", "city", "zip", "postcode", "postal", "address", "country",
                     "state", "town", "region"),
    "identifier": ("id", "key", "code", "number", "no", "ssn", "account"),
}

# tie-break precedence among labels with equal match fractions
_PRIORITY = ("email", "date", "phone", "identifier", "person-name", "address-part",
             "numeric-measure", "free-text")


def _hinted(path: str, label: str) -> bool:
    name = path.rsplit(".", 1)[-1].lower()
    tokens = [t for t in re.split(r"[^a-z]+", name) if t]
    for hint in _NAME_HINTS.get(label, ()):
        if hint in tokens or (len(hint) > 3 and hint in name):
            return True
    return False


def _digits(s: str) -> int:
    return sum(ch.isdigit() for ch in s)


def _matches(value, path: str) -> set:
    labels = set()
    if isinstance(value, Decimal):
        if value == value.to_integral_value() and value.as_tuple().exponent >= 0 and _hinted(path, "identifier"):
            labels.add("identifier")
        elif _hinted(path, "address-part"):
            labels.add("address-part")
        else:
            labels.add("numeric-measure")
        return labels
    if not isinstance(value, str):
        return labels
    s = value.strip()
    if not s:
        return labels
    if _EMAIL.match(s):
        labels.add("email")
    if _DATE.match(s):
        labels.add("date")
    if _PHONE.match(s) and _digits(s) >= 7 and not _DATE.match(s):
        labels.add("phone")
    if _IDENT.match(s):
        labels.add("identifier")
    if _NAME.match(s):
        labels.add("person-name")
    if _STREET.match(s) or (_hinted(path, "address-part") and (_ALPHA.match(s) or s.isdigit())):
        labels.add("address-part")
    if len(s.split()) >= 4:
        labels.add("free-text")
    return labels


def classify_semantic_type(path, values) -> SemanticType:
    """Label a column from a sample of its values.

    Confidence is the fraction of the non-null sample matching the winning
    label's pattern.  Attribute-name hints break ties among labels matching
    at least half of the sample.  Below 50% agreement the label is unknown.
    """
    key = path_key(path)
    sample = [v for v in values if v is not None]
    if not sample:
        return SemanticType("unknown", 0.0)
    counts: dict = {}
    for v in sample:
        for label in _matches(v, key):
            counts[label] = counts.get(label, 0) + 1
    if not counts:
        return SemanticType("unknown", 1.0)
    n = len(sample)
    best = max(counts.values())
    strong = [lab for lab, c in counts.items() if c / n >= 0.5]
    hinted = [lab for lab in strong if _hinted(key, lab)]
    if hinted:
        label = max(hinted, key=lambda lab: (counts[lab], -_PRIORITY.index(lab)))
    else:
        winners = [lab for lab, c in counts.items() if c == best]
        label = min(winners, key=_PRIORITY.index)
    conf = counts[label] / n
    if conf < 0.5:
        return SemanticType("unknown", 1.0 - conf)
    return SemanticType(label, conf)
