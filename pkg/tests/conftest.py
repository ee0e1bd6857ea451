import os
import subprocess
import sys

import pytest

from dupforge import datasets
from dupforge.pipeline import RunContext, history_generator
from dupforge.preconfig import HighLevelParams, derive_preconfiguration
from dupforge.preparation import normalize_schema

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


@pytest.fixture(scope="session")
def people_prepared():
    return normalize_schema(datasets.people(400, seed=7))


@pytest.fixture(scope="session")
def customers_prepared():
    return normalize_schema(datasets.customers(300, seed=11))


def make_config(prepared, **kw):
    kw.setdefault("horizon", 1000)
    params = HighLevelParams(**kw)
    return derive_preconfiguration(prepared.schema, prepared.profile, params,
                                   [d for _, d in prepared.snapshot], kw.get("partition_size", 10000))


def make_history(prepared, config):
    gen = history_generator(prepared, config)
    return list(gen)


def context(prepared):
    return RunContext.from_prepared(prepared)


def run_cli(*args, env=None, cwd=None):
    full_env = dict(os.environ)
    full_env.update(env or {})
    return subprocess.run([sys.executable, "-m", "dupforge.cli", *args], capture_output=True, text=True,
                          env=full_env, cwd=cwd)


def tree_bytes(root, skip=("run_manifest.json",)):
    """Relative path -> file bytes for every file under ``root``."""
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            if f in skip:
                continue
            p = os.path.join(dirpath, f)
            with open(p, "rb") as fh:
                out[os.path.relpath(p, root)] = fh.read()
    return out


# -- acceptance report ---------------------------------------------------------------------

ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
