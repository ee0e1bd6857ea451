"""Lossless value format conventions.

A format id is ``family:variant``.  ``detect`` is strict, so for any value
it recognizes, converting to another variant and back reproduces it exactly.
"""

from __future__ import annotations

import datetime
import re
from decimal import Decimal

_DATE = {
    "date:iso": re.compile(r"^(\d{4})-(\d{2})-(\d{2})$"),
    "date:dmy_dot": re.compile(r"^(\d{2})\.(\d{2})\.(\d{4})$"),
    "date:mdy_slash": re.compile(r"^(\d{2})/(\d{2})/(\d{4})$"),
    "date:compact": re.compile(r"^(\d{4})(\d{2})(\d{2})$"),
}
_PHONE = {
    "phone:plain": re.compile(r"^(\d{10,15})$"),
    "phone:dashed": re.compile(r"^(\d{3})-(\d{3})-(\d{4,9})$"),
    "phone:dotted": re.compile(r"^(\d{3})\.(\d{3})\.(\d{4,9})$"),
    "phone:spaced": re.compile(r"^(\d{3}) (\d{3}) (\d{4,9})$"),
    "phone:paren": re.compile(r"^\((\d{3})\) (\d{3})-(\d{4,9})$"),
}
_COMMA_NUMBER = re.compile(r"^-?\d+,\d+$")
_FIRST_LAST = re.compile(r"^([^\s,]+) ([^\s,]+)$")
_LAST_FIRST = re.compile(r"^([^\s,]+), ([^\s,]+)$")

FAMILIES = {
    "date": tuple(_DATE),
    "phone": tuple(_PHONE),
    "number": ("number:point", "number:comma"),
    "name": ("name:first_last", "name:last_first"),
}

_BY_SEMANTIC = {"date": "date", "phone": "phone", "numeric-measure": "number", "person-name": "name"}


def family_for(semantic_label: str) -> str | None:
    return _BY_SEMANTIC.get(semantic_label)


def _parse(value, fmt):
    """Canonical components of ``value`` in format ``fmt`` (None if it does not match)."""
    family = fmt.split(":", 1)[0]
    if family == "date":
        if not isinstance(value, str):
            return None
        m = _DATE[fmt].match(value)
        if not m:
            return None
        a, b, c = (int(x) for x in m.groups())
        y, mo, d = {"date:iso": (a, b, c), "date:compact": (a, b, c),
                    "date:dmy_dot": (c, b, a), "date:mdy_slash": (c, a, b)}[fmt]
        try:
            datetime.date(y, mo, d)
        except ValueError:
            return None
        return (y, mo, d)
    if family == "phone":
        if not isinstance(value, str):
            return None
        m = _PHONE[fmt].match(value)
        return "".join(m.groups()) if m else None
    if family == "number":
        if fmt == "number:point":
            if isinstance(value, Decimal) and value.is_finite() and "E" not in str(value) and "." in str(value):
                return str(value)
            return None
        if isinstance(value, str) and _COMMA_NUMBER.match(value):
            return value.replace(",", ".")
        return None
    if family == "name":
        if not isinstance(value, str):
            return None
        if fmt == "name:first_last":
            m = _FIRST_LAST.match(value)
            return m.groups() if m else None
        m = _LAST_FIRST.match(value)
        return (m.group(2), m.group(1)) if m else None
    return None


def _render(parts, fmt):
    if fmt.startswith("date:"):
        y, mo, d = parts
        return {"date:iso": f"{y:04d}-{mo:02d}-{d:02d}", "date:compact": f"{y:04d}{mo:02d}{d:02d}",
                "date:dmy_dot": f"{d:02d}.{mo:02d}.{y:04d}", "date:mdy_slash": f"{mo:02d}/{d:02d}/{y:04d}"}[fmt]
    if fmt.startswith("phone:"):
        digits = parts
        if fmt == "phone:plain":
            return digits if 10 <= len(digits) <= 15 else None
        if not 10 <= len(digits) <= 15:
            return None
        a, b, c = digits[:3], digits[3:6], digits[6:]
        return {"phone:dashed": f"{a}-{b}-{c}", "phone:dotted": f"{a}.{b}.{c}",
                "phone:spaced": f"{a} {b} {c}", "phone:paren": f"({a}) {b}-{c}"}[fmt]
    if fmt == "number:point":
        return Decimal(parts)
    if fmt == "number:comma":
        return parts.replace(".", ",")
    if fmt == "name:first_last":
        return f"{parts[0]} {parts[1]}"
    if fmt == "name:last_first":
        return f"{parts[1]}, {parts[0]}"
    return None


def detect(value, family: str) -> str | None:
    for fmt in FAMILIES.get(family, ()):
        if _parse(value, fmt) is not None:
            return fmt
    return None


def convert(value, to_fmt: str, from_fmt: str | None = None):
    """Re-render ``value`` in ``to_fmt``; raises ValueError if not losslessly convertible."""
    family = to_fmt.split(":", 1)[0]
    src = from_fmt or detect(value, family)
    if src is None:
        raise ValueError(f"value {value!r} not in a known {family} format")
    parts = _parse(value, src)
    if parts is None:
        raise ValueError(f"value {value!r} is not in format {src}")
    out = _render(parts, to_fmt)
    if out is None:
        raise ValueError(f"value {value!r} cannot be rendered as {to_fmt}")
    return out


def alternatives(value, family: str) -> list[str]:
    """Other formats ``value`` can be losslessly re-rendered in."""
    src = detect(value, family)
    if src is None:
        return []
    parts = _parse(value, src)
    return [f for f in FAMILIES[family] if f != src and _render(parts, f) is not None]
