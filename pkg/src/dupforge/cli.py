"""Command line entry point: run the six phases one by one or end to end.

Every phase reads the files of the previous one from ``--out-dir``:

    profile    input            -> profile.json
    prepare    input, profile   -> prepared.jsonl, prepared_schema.json
    preconfig  prepared         -> config.json
    history    prepared, config -> history.jsonl, history_meta.json
    pollute    history, config  -> provenance.jsonl, sources/
    assemble   history, provenance, config -> gold/, scenarios/
    all        everything above in one streaming pass
    rerun      repeat the run recorded in a run_manifest.json

Flags may also be given as ``DUPFORGE_<FLAG>`` environment variables
(``DUPFORGE_SEED=3``, ``DUPFORGE_OUT_DIR=out``); explicit flags win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

from . import __version__
from .exceptions import DupforgeError, ValidationError
from .pipeline import (Exporter, RunContext, assemble_from_files, history_generator, history_partitions,
                       read_history_partitions, run_partitions, write_scenarios)
from .preconfig import GenerationConfig, HighLevelParams, derive_preconfiguration
from .preparation import normalize_schema, profile_input, read_prepared, write_prepared
from .profiling import dumps_enriched, enriched_from_dict
from .values import read_input

COMMANDS = ("profile", "prepare", "preconfig", "history", "pollute", "assemble", "all", "rerun")

# flag name -> (type, default, help)
FLAGS = {
    "input": (str, None, "clean input dataset (.csv or .jsonl)"),
    "config": (str, None, "use this GenerationConfig JSON instead of deriving one"),
    "out_dir": (str, "out", "directory for all phase artifacts"),
    "seed": (int, 0, "random seed"),
    "scenario": (str, "cleaning", "cleaning | integration | linkage"),
    "sources": (int, None, "number of sources (default 1 for cleaning, 3 otherwise)"),
    "pollution": (float, 0.2, "degree of pollution (fraction of corrupted cells)"),
    "duplicates": (float, 0.1, "duplicate rate per inserted entity"),
    "volume_factor": (float, 1.0, "emitted entities relative to the input size"),
    "workers": (int, 1, "worker processes"),
    "horizon": (int, 1000, "length of the simulated timeline in ticks"),
    "heterogeneity": (float, 0.0, "schema and format divergence between sources"),
    "copy_intensity": (float, 0.0, "share of source pairs with a copy relationship"),
    "mapping_error_rate": (float, 0.05, "per-record attribute swap rate during integration"),
    "partition_size": (int, 10000, "entities per partition"),
    "manifest": (str, None, "run manifest to repeat (rerun only)"),
}


class _Timer:
    def __init__(self):
        self.phases = {}

    def __call__(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                timer.phases[name] = round(time.perf_counter() - self.t, 3)

        return _Ctx()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dupforge", description="Generate polluted duplicate-detection test data.")
    parser.add_argument("--version", action="version", version=f"dupforge {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    for name, (typ, _, text) in FLAGS.items():
        parser.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None, help=text)
    return parser


def resolve(ns: argparse.Namespace, env=None) -> dict:
    """Flag values with precedence explicit flag > DUPFORGE_ variable > default."""
    env = os.environ if env is None else env
    out = {}
    for name, (typ, default, _) in FLAGS.items():
        value = getattr(ns, name, None)
        if value is None:
            raw = env.get("DUPFORGE_" + name.upper())
            if raw is not None:
                try:
                    value = typ(raw)
                except ValueError as exc:
                    raise ValidationError(f"DUPFORGE_{name.upper()}={raw!r}: {exc}") from exc
        out[name] = default if value is None else value
    out["command"] = ns.command
    return out


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _p(opts, *parts) -> str:
    return os.path.join(opts["out_dir"], *parts)


def _need(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing input file {path}")
    return path


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


# -- phases ------------------------------------------------------------------------------------


def _load_input(opts):
    if not opts["input"]:
        raise ValidationError("--input is required for this phase")
    return read_input(_need(opts["input"]))


def phase_profile(opts):
    profile, enriched = profile_input(_load_input(opts))
    with open(_p(opts, "profile.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_enriched(enriched, profile))
    return [_p(opts, "profile.json")]


def phase_prepare(opts):
    docs = _load_input(opts)
    profile = enriched = None
    path = _p(opts, "profile.json")
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            enriched, profile = enriched_from_dict(json.load(fh))
        if profile is not None and profile.rows != len(docs):
            profile = enriched = None
    prepared = normalize_schema(docs, profile, enriched)
    write_prepared(prepared, _p(opts, "prepared.jsonl"), _p(opts, "prepared_schema.json"))
    return [_p(opts, "prepared.jsonl"), _p(opts, "prepared_schema.json")]


def _prepared(opts):
    return read_prepared(_need(_p(opts, "prepared.jsonl")), _need(_p(opts, "prepared_schema.json")))


def _params(opts) -> HighLevelParams:
    n = opts["sources"] if opts["sources"] is not None else (1 if opts["scenario"] == "cleaning" else 3)
    return HighLevelParams(opts["scenario"], n, opts["pollution"], opts["duplicates"], opts["volume_factor"],
                           opts["copy_intensity"], opts["heterogeneity"], opts["horizon"], opts["seed"],
                           mapping_error_rate=opts["mapping_error_rate"])


def phase_preconfig(opts, prepared=None):
    prepared = prepared or _prepared(opts)
    if opts["config"]:
        with open(_need(opts["config"]), encoding="utf-8") as fh:
            config = GenerationConfig.loads(fh.read())
        config.validate(prepared.paths)
    else:
        config = derive_preconfiguration(prepared.schema, prepared.profile, _params(opts),
                                         [d for _, d in prepared.snapshot], opts["partition_size"])
    with open(_p(opts, "config.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config.dumps())
    return [_p(opts, "config.json")]


def _config(opts) -> GenerationConfig:
    with open(_need(_p(opts, "config.json")), encoding="utf-8") as fh:
        return GenerationConfig.loads(fh.read())


def _partition_size(config, opts) -> int:
    return int(config.history.get("partition_size") or opts["partition_size"])


def phase_history(opts, prepared=None, config=None):
    prepared = prepared or _prepared(opts)
    config = config or _config(opts)
    gen = history_generator(prepared, config)
    with open(_p(opts, "history.jsonl"), "w", encoding="utf-8", newline="") as fh:
        for _ in history_partitions(gen, _partition_size(config, opts), fh):
            pass
    _write_json(_p(opts, "history_meta.json"), {"paths": gen.paths, "horizon": gen.horizon,
                                                 "entities": gen.n_entities, "diagnostics": gen.diagnostics})
    return [_p(opts, "history.jsonl"), _p(opts, "history_meta.json")]


def phase_pollute(opts, prepared=None, config=None):
    prepared = prepared or _prepared(opts)
    config = config or _config(opts)
    ctx = RunContext.from_prepared(prepared)
    with open(_need(_p(opts, "history.jsonl")), encoding="utf-8") as fh:
        stats, files = run_partitions(read_history_partitions(fh, _partition_size(config, opts)), config, ctx,
                                      opts["out_dir"], workers=opts["workers"], assembly=False)
    summary = stats.summary([s.name for s in config.sources])
    _write_json(_p(opts, "pollution_report.json"), summary)
    return files + [_p(opts, "pollution_report.json")], summary


def _scenario_manifest(config, opts):
    return {"config_hash": config.digest(), "seed": config.seed}


def phase_assemble(opts, prepared=None, config=None):
    prepared = prepared or _prepared(opts)
    config = config or _config(opts)
    ctx = RunContext.from_prepared(prepared)
    with open(_need(_p(opts, "history.jsonl")), encoding="utf-8") as hfh, \
            open(_need(_p(opts, "provenance.jsonl")), encoding="utf-8") as pfh:
        summary, files = assemble_from_files(hfh, pfh, config, ctx, opts["out_dir"])
    files += write_scenarios(opts["out_dir"], config, Exporter(config, ctx), _scenario_manifest(config, opts))
    return files, summary


def phase_all(opts, timer):
    out = []
    with timer("profile"):
        out += phase_profile(opts)
    with timer("prepare"):
        out += phase_prepare(opts)
        prepared = _prepared(opts)
    with timer("preconfig"):
        out += phase_preconfig(opts, prepared)
        config = _config(opts)
    ctx = RunContext.from_prepared(prepared)
    with timer("history+pollute+assemble"):
        gen = history_generator(prepared, config)
        with open(_p(opts, "history.jsonl"), "w", encoding="utf-8", newline="") as hfh:
            parts = history_partitions(gen, _partition_size(config, opts), hfh)
            stats, files = run_partitions(parts, config, ctx, opts["out_dir"], workers=opts["workers"])
        _write_json(_p(opts, "history_meta.json"), {"paths": gen.paths, "horizon": gen.horizon,
                                                     "entities": gen.n_entities, "diagnostics": gen.diagnostics})
        out += [_p(opts, "history.jsonl"), _p(opts, "history_meta.json")] + files
        out += write_scenarios(opts["out_dir"], config, Exporter(config, ctx), _scenario_manifest(config, opts))
    summary = stats.summary([s.name for s in config.sources])
    _write_json(_p(opts, "pollution_report.json"), summary)
    out.append(_p(opts, "pollution_report.json"))
    return out, summary


# -- driver --------------------------------------------------------------------------------------


def execute(opts: dict) -> dict:
    """Run one subcommand; returns the run manifest that was written."""
    os.makedirs(opts["out_dir"], exist_ok=True)
    timer = _Timer()
    cmd = opts["command"]
    summary = None
    if cmd == "all":
        files, summary = phase_all(opts, timer)
    else:
        with timer(cmd):
            result = {"profile": phase_profile, "prepare": phase_prepare, "preconfig": phase_preconfig,
                      "history": phase_history, "pollute": phase_pollute, "assemble": phase_assemble}[cmd](opts)
        files, summary = result if isinstance(result, tuple) else (result, None)
    inputs = {}
    if opts.get("input") and os.path.exists(opts["input"]):
        inputs[opts["input"]] = _sha256(opts["input"])
    if opts.get("config") and os.path.exists(opts["config"]):
        inputs[opts["config"]] = _sha256(opts["config"])
    config_hash = None
    if os.path.exists(_p(opts, "config.json")):
        with open(_p(opts, "config.json"), encoding="utf-8") as fh:
            config_hash = GenerationConfig.loads(fh.read()).digest()
    manifest = {
        "tool": "dupforge",
        "version": __version__,
        "command": cmd,
        "options": {k: v for k, v in opts.items() if k != "command"},
        "input_hashes": inputs,
        "config_hash": config_hash,
        "seed": opts["seed"],
        "timings": timer.phases,
        "outputs": sorted(os.path.relpath(f, opts["out_dir"]) for f in dict.fromkeys(files)),
    }
    if summary is not None:
        manifest["summary"] = summary
    _write_json(_p(opts, "run_manifest.json"), manifest)
    return manifest


def rerun(opts: dict) -> dict:
    path = opts["manifest"] or _p(opts, "run_manifest.json")
    with open(_need(path), encoding="utf-8") as fh:
        manifest = json.load(fh)
    recorded = dict(manifest["options"])
    for src, digest in manifest.get("input_hashes", {}).items():
        if not os.path.exists(src) or _sha256(src) != digest:
            raise ValidationError(f"input {src} differs from the recorded run")
    if opts.get("out_dir") and opts["out_dir"] != FLAGS["out_dir"][1]:
        recorded["out_dir"] = opts["out_dir"]
    recorded["command"] = manifest["command"]
    return execute(recorded)


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        opts = resolve(ns)
        if opts["command"] == "rerun":
            rerun(opts)
        else:
            execute(opts)
    except (DupforgeError, ValueError, KeyError) as exc:
        _diagnose(exc, 1, ns.command)
        return 1
    except OSError as exc:
        _diagnose(exc, 2, ns.command)
        return 2
    return 0


def _diagnose(exc, code, command):
    kind = "validation" if code == 1 else "io"
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "kind": kind, "command": command,
                                 "message": str(exc), "exit_code": code}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
