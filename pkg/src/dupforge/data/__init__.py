"""Editable data tables shipped with the package (weights, keyboards, rules)."""

import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_table(name: str):
    with resources.files(__name__).joinpath(f"{name}.json").open(encoding="utf-8") as fh:
        return json.load(fh)
