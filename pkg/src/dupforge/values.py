"""Value representation and (de)serialization.

Values are plain Python objects: ``None`` (null), ``str``, ``Decimal``,
``bool``, ``list`` and ``dict`` (ordered document).  Numbers are always
``Decimal`` so serialized output is byte-identical across platforms.
"""

from __future__ import annotations

import csv
import io
import json
from decimal import Decimal, InvalidOperation

from .exceptions import InconsistentInput

NULL = "null"
TEXT = "text"
NUMBER = "number"
BOOLEAN = "boolean"
LIST = "list"
DOCUMENT = "document"

_dumps_str = json.JSONEncoder(ensure_ascii=False).encode


def kind_of(value) -> str:
    if value is None:
        return NULL
    if value is True or value is False:
        return BOOLEAN
    if isinstance(value, str):
        return TEXT
    if isinstance(value, Decimal):
        return NUMBER
    if isinstance(value, list):
        return LIST
    if isinstance(value, dict):
        return DOCUMENT
    raise TypeError(f"unsupported value type {type(value).__name__}")


def encode_value(value) -> str:
    """Serialize one value as compact JSON text (Decimals as JSON numbers)."""
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, str):
        return _dumps_str(value)
    if isinstance(value, Decimal):
        if not value.is_finite():
            raise ValueError(f"non-finite number {value}")
        return str(value)
    if isinstance(value, list):
        return "[" + ",".join(encode_value(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ",".join(_dumps_str(k) + ":" + encode_value(v) for k, v in value.items()) + "}"
    if isinstance(value, int):
        return str(value)
    raise TypeError(f"unsupported value type {type(value).__name__}")


def decode_json(text: str):
    return json.loads(text, parse_float=Decimal, parse_int=Decimal)


def to_plain(value):
    """Convert a decoded JSON object that used Decimal for ints back to ints at the top level."""
    return int(value) if isinstance(value, Decimal) else value


def same_value(a, b) -> bool:
    """Exact equality: type, value and (for numbers) textual scale."""
    if a is None or b is None:
        return a is b
    if type(a) is not type(b):
        return False
    if isinstance(a, Decimal):
        return str(a) == str(b)
    return a == b


def as_text(value) -> str:
    """Text form used for length/token statistics and text-level errors."""
    if isinstance(value, str):
        return value
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, Decimal):
        return str(value)
    if value is None:
        return ""
    return encode_value(value)


def parse_number(text: str):
    """Decimal for ``text`` iff it round-trips exactly, else ``None``."""
    try:
        d = Decimal(text)
    except (InvalidOperation, ValueError):
        return None
    if not d.is_finite() or str(d) != text:
        return None
    return d


def flatten(doc: dict, prefix: str = "", out: dict | None = None) -> dict:
    """Flatten nested documents into dotted leaf keys; lists stay atomic."""
    if out is None:
        out = {}
    for key, value in doc.items():
        name = prefix + key
        if isinstance(value, dict) and value:
            flatten(value, name + ".", out)
        else:
            out[name] = value
    return out


def unflatten(flat: dict, paths: dict | None = None) -> dict:
    """Inverse of :func:`flatten`.  ``paths`` maps flat key -> segment tuple."""
    out: dict = {}
    for key, value in flat.items():
        segments = paths[key] if paths and key in paths else tuple(key.split("."))
        node = out
        for seg in segments[:-1]:
            nxt = node.get(seg)
            if not isinstance(nxt, dict):
                nxt = {}
                node[seg] = nxt
            node = nxt
        node[segments[-1]] = value
    return out


# -- input readers -----------------------------------------------------------


def read_csv(path_or_text, *, is_text: bool = False) -> tuple[list[str], list[dict]]:
    """Read an RFC-4180 CSV with header; columns become Number iff every value round-trips."""
    if is_text:
        fh = io.StringIO(path_or_text)
    else:
        fh = open(path_or_text, newline="", encoding="utf-8")
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InconsistentInput("CSV input has no header row") from None
        if len(set(header)) != len(header):
            raise InconsistentInput("duplicate column names in CSV header")
        raw = []
        bad = []
        for i, row in enumerate(reader):
            if len(row) != len(header):
                if not row:
                    continue
                bad.append(i)
                continue
            raw.append(row)
    if bad:
        raise InconsistentInput(f"{len(bad)} CSV rows have the wrong number of fields", bad)
    numeric = []
    for j in range(len(header)):
        ok = True
        seen = False
        for row in raw:
            cell = row[j]
            if cell == "":
                continue
            seen = True
            if parse_number(cell) is None:
                ok = False
                break
        numeric.append(ok and seen)
    rows = []
    for row in raw:
        doc = {}
        for name, cell, num in zip(header, row, numeric):
            if cell == "":
                doc[name] = None
            elif num:
                doc[name] = Decimal(cell)
            else:
                doc[name] = cell
        rows.append(doc)
    return header, rows


def read_jsonl(path) -> list[dict]:
    rows = []
    bad = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                doc = decode_json(line)
            except json.JSONDecodeError:
                bad.append(i)
                continue
            if not isinstance(doc, dict):
                bad.append(i)
                continue
            rows.append(doc)
    if bad:
        raise InconsistentInput(f"{len(bad)} JSON-lines rows are not JSON objects", bad)
    return rows


def read_input(path) -> list[dict]:
    path = str(path)
    if path.endswith(".csv"):
        return read_csv(path)[1]
    return read_jsonl(path)


def csv_line(cells) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(cells)
    return buf.getvalue()


def csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return as_text(value)
