"""Run directories: traces, models, the iteration log and a summary.

Layout::

    manifest.json          config and schema version
    traces/trace_000.csv   one CSV + JSON manifest per SUT experiment
    models/iter_001_surrogate.json, iter_001_symbolic.json
    solver/iter_001.log    one line per major iteration
    run.jsonl              one object per iteration, no wall-clock data
    timings.jsonl          per-stage wall-clock seconds, kept apart from run.jsonl
    summary.json
"""

from __future__ import annotations

import json
from pathlib import Path

from ..sim import TraceFormatError, read_trace, write_trace
from ..surrogate import save_checkpoint
from .campaign import PROVENANCE, CampaignResult, Dataset

RUN_SCHEMA = 1
INPUT_REALIZATION = "zero-order hold of the collocation inputs on the plant sampling grid"


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def write_dataset(dataset: Dataset, directory) -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (tr, tag) in enumerate(zip(dataset.traces, dataset.provenance)):
        tr.meta["provenance"] = tag
        paths.append(write_trace(tr, directory / f"trace_{i:03d}.csv"))
    return paths


def persist_run(result: CampaignResult, directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(
        {"schema": RUN_SCHEMA, "config": result.config.to_dict(), "input_realization": INPUT_REALIZATION},
        indent=1, sort_keys=True,
    ))
    write_dataset(result.dataset, out / "traces")
    models = out / "models"
    solver = out / "solver"
    with open(out / "run.jsonl", "w") as run, open(out / "timings.jsonl", "w") as timing:
        for rec in result.records:
            row = rec.log_dict()
            if rec.surrogate is not None:
                models.mkdir(exist_ok=True)
                row["surrogate_file"] = save_checkpoint(rec.surrogate, models / f"iter_{rec.index:03d}_surrogate.json").name
            if rec.symbolic is not None:
                models.mkdir(exist_ok=True)
                name = f"iter_{rec.index:03d}_symbolic.json"
                (models / name).write_text(json.dumps(rec.symbolic, indent=1, sort_keys=True))
                row["symbolic_file"] = name
            if rec.solver_log:
                solver.mkdir(exist_ok=True)
                name = f"iter_{rec.index:03d}.log"
                (solver / name).write_text("\n".join(rec.solver_log) + "\n")
                row["solver_file"] = name
            run.write(_dump(row) + "\n")
            timing.write(_dump({"iteration": rec.index, **rec.timings}) + "\n")
    summary = result.summary()
    if result.counterexample is not None:
        u = result.counterexample
        summary["counterexample"] = {
            "breakpoints": u.breakpoints.tolist(), "values": u.values.tolist(),
            "names": list(u.names), "horizon": u.horizon,
        }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    return out


def load_dataset(directory) -> Dataset:
    """Traces of a run directory (or of a bare trace directory), in order."""
    directory = Path(directory)
    tdir = directory / "traces" if (directory / "traces").is_dir() else directory
    files = sorted(tdir.glob("trace_*.csv"))
    if not files:
        raise TraceFormatError(f"{tdir}: no trace files")
    data = Dataset()
    for f in files:
        tr = read_trace(f, require_manifest=True)
        tag = tr.meta.get("provenance")
        if tag not in PROVENANCE:
            raise TraceFormatError(f"{f}: missing or unknown provenance {tag!r}")
        data.append(tr, tag)
    return data
