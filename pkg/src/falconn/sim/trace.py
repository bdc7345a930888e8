"""Input/output traces and their CSV + JSON manifest serialization."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from ..stl import SampledSignal
from .signals import InputSignal

TRACE_SCHEMA = 1


class TraceFormatError(ValueError):
    pass


@dataclass
class Trace:
    x0: np.ndarray
    times: np.ndarray
    inputs: Dict[str, np.ndarray]
    outputs: Dict[str, np.ndarray]
    plant: str = ""
    period: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        self.times = np.asarray(self.times, dtype=float)
        n = self.times.size
        for group in (self.inputs, self.outputs):
            for name in list(group):
                group[name] = np.asarray(group[name], dtype=float)
                if group[name].shape != (n,):
                    raise ValueError(f"channel {name!r} length {group[name].size} != {n}")
        if set(self.inputs) & set(self.outputs):
            raise ValueError("input and output channel names must differ")

    def __len__(self):
        return self.times.size

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def input_array(self, names=None) -> np.ndarray:
        names = names or list(self.inputs)
        return np.stack([self.inputs[n] for n in names], axis=1)

    def output_array(self, names=None) -> np.ndarray:
        names = names or list(self.outputs)
        return np.stack([self.outputs[n] for n in names], axis=1)

    def input_signal(self) -> InputSignal:
        return InputSignal.from_samples(self.times, self.input_array(), list(self.inputs), self.horizon)

    def signal(self) -> SampledSignal:
        return SampledSignal(self.times, {**self.inputs, **self.outputs})

    def equals(self, other: "Trace") -> bool:
        """Bit-exact comparison of every sample and the metadata."""
        return (
            np.array_equal(self.x0, other.x0)
            and np.array_equal(self.times, other.times)
            and list(self.inputs) == list(other.inputs)
            and list(self.outputs) == list(other.outputs)
            and all(np.array_equal(self.inputs[k], other.inputs[k]) for k in self.inputs)
            and all(np.array_equal(self.outputs[k], other.outputs[k]) for k in self.outputs)
            and self.plant == other.plant
            and self.period == other.period
        )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def manifest_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_suffix(".json")


def write_trace(trace: Trace, path) -> Path:
    path = Path(path)
    header = ["time"] + [f"u_{n}" for n in trace.inputs] + [f"y_{n}" for n in trace.outputs]
    cols = [trace.times] + list(trace.inputs.values()) + list(trace.outputs.values())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    manifest = {
        "schema": TRACE_SCHEMA,
        "plant": trace.plant,
        "period": trace.period,
        "x0": [_fmt(v) for v in trace.x0],
        "inputs": list(trace.inputs),
        "outputs": list(trace.outputs),
        "meta": trace.meta,
    }
    manifest_path(path).write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def read_trace(path, require_manifest: bool = True) -> Trace:
    path = Path(path)
    mpath = manifest_path(path)
    manifest = None
    if mpath.exists():
        try:
            manifest = json.loads(mpath.read_text())
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"{mpath}: unreadable manifest ({exc})") from exc
        if manifest.get("schema") != TRACE_SCHEMA:
            raise TraceFormatError(f"{mpath}: unsupported schema {manifest.get('schema')!r}")
    elif require_manifest:
        raise TraceFormatError(f"{path}: missing manifest {mpath.name}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "time":
        raise TraceFormatError(f"{path}: header must start with 'time'")
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    inputs, outputs = {}, {}
    for j, name in enumerate(header[1:], start=1):
        if name.startswith("u_"):
            inputs[name[2:]] = data[:, j]
        elif name.startswith("y_"):
            outputs[name[2:]] = data[:, j]
        else:
            raise TraceFormatError(f"{path}: column {name!r} lacks a u_/y_ prefix")
    if manifest is None:
        return Trace(np.zeros(0), data[:, 0], inputs, outputs)
    return Trace(
        np.array([float(v) for v in manifest["x0"]]),
        data[:, 0],
        inputs,
        outputs,
        plant=manifest.get("plant", ""),
        period=manifest.get("period"),
        meta=manifest.get("meta", {}),
    )
