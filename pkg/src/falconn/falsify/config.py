"""Campaign configuration and TOML loading."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..ocp import SolverConfig
from ..stl import formula_horizon, parse_formula
from ..surrogate import TrainConfig
from ..symreg import SrConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# specs whose horizon exceeds this get the coarse collocation step
LONG_HORIZON = 10.0
COARSE_DT = 0.2
FINE_DT = 0.1

# fixed offsets that fan the master seed out to the stages
STAGE_OFFSETS = {"init": 0, "train": 1, "symreg": 2, "fallback": 3}


def stage_seed(master: int, stage: str, iteration: int = 0) -> int:
    seq = np.random.SeedSequence([int(master), STAGE_OFFSETS[stage], int(iteration)])
    return int(seq.generate_state(1)[0])


@dataclass(frozen=True)
class RunConfig:
    plant: str
    spec: str
    budget: int = 10
    dt: Optional[float] = None
    k: float = 2.0
    seed: int = 0
    horizon: Optional[float] = None
    segment: float = 5.0
    state_bound: float = 1e3
    perturb_scale: float = 0.25
    out: Optional[str] = None
    train: TrainConfig = field(default_factory=TrainConfig)
    symreg: SrConfig = field(default_factory=SrConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("collocation step must be positive")
        if not self.k > 0 or not self.segment > 0 or not self.state_bound > 0 or self.perturb_scale < 0:
            raise ValueError("k, segment and state_bound must be positive, perturb_scale non-negative")
        parse_formula(self.spec)

    def collocation_step(self) -> float:
        if self.dt is not None:
            return float(self.dt)
        return COARSE_DT if formula_horizon(parse_formula(self.spec)) > LONG_HORIZON else FINE_DT

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("train", "symreg"):
            d[key] = {k: list(v) if isinstance(v, tuple) else v for k, v in d[key].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        subs = {"train": TrainConfig, "symreg": SrConfig, "solver": SolverConfig}
        for key, typ in subs.items():
            if key in d:
                d[key] = _build(typ, d[key], key)
        return _build(cls, d, "run")

    @classmethod
    def from_toml(cls, path) -> "RunConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))


def _build(typ, values: dict, where: str):
    known = {f.name for f in fields(typ)}
    extra = set(values) - known
    if extra:
        raise ValueError(f"unknown {where} option(s): {sorted(extra)}")
    values = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    return typ(**values)


def load_config(path) -> RunConfig:
    return RunConfig.from_toml(Path(path))
