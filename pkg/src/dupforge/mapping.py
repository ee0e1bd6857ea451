"""Schema mapping steps between the prepared path space and a source or target schema.

Steps are plain JSON objects so configurations stay hand-editable:

    {"op": "rename",  "path": p, "to": q}
    {"op": "merge",   "paths": [a, b], "separator": " ", "to": q}
    {"op": "split",   "path": p, "separator": " ", "to": [q1, q2]}
    {"op": "nest",    "paths": [a, b], "under": "contact"}
    {"op": "flatten", "under": "contact"}
    {"op": "format",  "path": p, "format": "date:dmy_dot", "from": "date:iso"}

Documents are flat dicts with dotted keys; nesting only changes key names.
"""

from __future__ import annotations

from . import formats
from .exceptions import UnknownPath
from .values import as_text

OPS = ("rename", "merge", "split", "nest", "flatten", "format")


def _replace(items: list, index: int, new: list) -> list:
    return items[:index] + new + items[index + 1:]


def _fields_after(step: dict, fields: list) -> list:
    op = step["op"]
    if op == "rename":
        _need(fields, [step["path"]])
        return [step["to"] if f == step["path"] else f for f in fields]
    if op == "merge":
        _need(fields, step["paths"])
        first = min(fields.index(p) for p in step["paths"])
        kept = [f for f in fields if f not in step["paths"]]
        pos = sum(1 for f in fields[:first] if f not in step["paths"])
        return kept[:pos] + [step["to"]] + kept[pos:]
    if op == "split":
        _need(fields, [step["path"]])
        return _replace(fields, fields.index(step["path"]), list(step["to"]))
    if op == "nest":
        _need(fields, step["paths"])
        under = step["under"]
        return [f"{under}.{f.rsplit('.', 1)[-1]}" if f in step["paths"] else f for f in fields]
    if op == "flatten":
        prefix = step["under"] + "."
        return [step["under"] + "_" + f[len(prefix):] if f.startswith(prefix) else f for f in fields]
    if op == "format":
        _need(fields, [step["path"]])
        return list(fields)
    raise ValueError(f"unknown mapping step {op!r}")


def _text(value) -> str:
    return value if isinstance(value, str) else as_text(value)


def _need(fields, paths):
    missing = [p for p in paths if p not in fields]
    if missing:
        raise UnknownPath(f"mapping step references unknown fields {missing}")


class Mapping:
    """A composed list of steps over a fixed input field list."""

    def __init__(self, steps, fields):
        self.steps = [dict(s) for s in steps]
        self.input_fields = list(fields)
        self._stages = [list(fields)]
        for s in self.steps:
            self._stages.append(_fields_after(s, self._stages[-1]))
        self.output_fields = self._stages[-1]
        if len(set(self.output_fields)) != len(self.output_fields):
            raise UnknownPath(f"mapping produces duplicate fields {self.output_fields}")

    @property
    def identity(self) -> bool:
        return not self.steps

    def apply(self, doc: dict) -> dict:
        if not self.steps:
            return dict(doc)
        cur = dict(doc)
        for step in self.steps:
            cur = _apply_step(step, cur)
        return cur

    def invert(self, doc: dict) -> dict:
        cur = dict(doc)
        for step, fields in zip(reversed(self.steps), reversed(self._stages[:-1])):
            cur = _invert_step(step, cur, fields)
        return {f: cur.get(f) for f in self.input_fields}


def _rebuild(doc: dict, old: list, new_items: list) -> dict:
    """Replace keys ``old`` by ``new_items`` at the position of the first old key."""
    out = {}
    placed = False
    for k, v in doc.items():
        if k in old:
            if not placed:
                out.update(new_items)
                placed = True
            continue
        out[k] = v
    if not placed:
        out.update(new_items)
    return out


def _apply_step(step: dict, doc: dict) -> dict:
    op = step["op"]
    if op == "rename":
        return {(step["to"] if k == step["path"] else k): v for k, v in doc.items()}
    if op == "merge":
        vals = [doc.get(p) for p in step["paths"]]
        present = [_text(v) for v in vals if v is not None]
        merged = step["separator"].join(present) if present else None
        return _rebuild(doc, step["paths"], [(step["to"], merged)])
    if op == "split":
        v = doc.get(step["path"])
        n = len(step["to"])
        if v is None:
            parts = [None] * n
        else:
            parts = _text(v).split(step["separator"], n - 1)
            parts += [None] * (n - len(parts))
        return _rebuild(doc, [step["path"]], list(zip(step["to"], parts)))
    if op == "nest":
        under = step["under"]
        paths = set(step["paths"])
        return {(f"{under}.{k.rsplit('.', 1)[-1]}" if k in paths else k): v for k, v in doc.items()}
    if op == "flatten":
        prefix = step["under"] + "."
        return {(step["under"] + "_" + k[len(prefix):] if k.startswith(prefix) else k): v for k, v in doc.items()}
    if op == "format":
        p = step["path"]
        v = doc.get(p)
        family = step["format"].split(":", 1)[0]
        if v is not None and formats.detect(v, family) not in (None, step["format"]):
            out = dict(doc)
            out[p] = formats.convert(v, step["format"])
            return out
        return doc
    raise ValueError(f"unknown mapping step {op!r}")


def _invert_step(step: dict, doc: dict, fields: list) -> dict:
    op = step["op"]
    if op == "rename":
        return {(step["path"] if k == step["to"] else k): v for k, v in doc.items()}
    if op == "merge":
        v = doc.get(step["to"])
        n = len(step["paths"])
        if v is None:
            parts = [None] * n
        else:
            parts = str(v).split(step["separator"], n - 1)
            parts += [None] * (n - len(parts))
        return _rebuild(doc, [step["to"]], list(zip(step["paths"], parts)))
    if op == "split":
        vals = [doc.get(p) for p in step["to"]]
        present = [v for v in vals if v is not None]
        return _rebuild(doc, list(step["to"]), [(step["path"], step["separator"].join(present) if present else None)])
    if op == "nest":
        under = step["under"]
        back = {f"{under}.{p.rsplit('.', 1)[-1]}": p for p in step["paths"]}
        return {back.get(k, k): v for k, v in doc.items()}
    if op == "flatten":
        back = {}
        prefix = step["under"] + "."
        for f in fields:
            if f.startswith(prefix):
                back[step["under"] + "_" + f[len(prefix):]] = f
        return {back.get(k, k): v for k, v in doc.items()}
    if op == "format":
        src = step.get("from")
        p = step["path"]
        v = doc.get(p)
        if src and v is not None and formats.detect(v, src.split(":", 1)[0]) == step["format"]:
            out = dict(doc)
            out[p] = formats.convert(v, src)
            return out
        return doc
    raise ValueError(f"unknown mapping step {op!r}")
