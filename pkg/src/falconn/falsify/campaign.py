"""The falsification loop: train, distill, synthesize, validate, repeat."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from ..ocp import CONVERGED, INFEASIBLE_STALL, extract_input, solve, transcribe, warm_start
from ..sim import InputSignal, SutSpec, Trace, corners_random, get_plant, run_experiment
from ..sim.integrate import DivergenceError
from ..stl import Formula, HorizonError, SampledSignal, formula_horizon, parse_formula, robustness_exact
from ..surrogate import TrainingError, train
from ..symreg import DistillationError, distill
from .config import RunConfig, stage_seed

log = logging.getLogger(__name__)

INITIALIZER = "initializer"
OCP_CANDIDATE = "ocp-candidate"
FLUKE = "fluke"
PROVENANCE = (INITIALIZER, OCP_CANDIDATE, FLUKE)

FALSIFIED = "falsified"
FLUKE_ONLY = "fluke-only"
BUDGET_EXHAUSTED = "budget-exhausted"


class Dataset:
    """Ordered traces of one plant, each tagged with where it came from."""

    def __init__(self, traces=(), provenance=()):
        self.traces: List[Trace] = []
        self.provenance: List[str] = []
        for tr, tag in zip(traces, provenance, strict=True):
            self.append(tr, tag)

    def append(self, trace: Trace, provenance: str):
        if provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {provenance!r}")
        if self.traces:
            ref = self.traces[0]
            if (trace.plant, trace.period, len(trace)) != (ref.plant, ref.period, len(ref)):
                raise ValueError("all traces must share plant, horizon and sampling period")
        self.traces.append(trace)
        self.provenance.append(provenance)

    def __len__(self):
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    def __getitem__(self, i):
        return self.traces[i]

    def equals(self, other: "Dataset") -> bool:
        return self.provenance == other.provenance and len(self) == len(other) and all(
            a.equals(b) for a, b in zip(self.traces, other.traces)
        )


@dataclass
class IterationRecord:
    index: int
    robustness: float
    objective: Optional[float]
    status: Optional[str]
    fluke: bool
    fallback: Optional[str] = None
    warm_residual: Optional[float] = None
    solver_iterations: int = 0
    solver_residual: Optional[float] = None
    symbolic: Optional[dict] = None
    trace_file: str = ""
    timings: Dict[str, float] = field(default_factory=dict)
    # in-memory artifacts, written by persist_run
    surrogate: object = field(default=None, repr=False)
    solver_log: List[str] = field(default_factory=list, repr=False)

    def log_dict(self) -> dict:
        """Everything except wall-clock timings, so logs of equal runs compare equal."""
        return {
            "iteration": self.index,
            "robustness": self.robustness,
            "objective": self.objective,
            "status": self.status,
            "fluke": self.fluke,
            "fallback": self.fallback,
            "warm_residual": self.warm_residual,
            "solver_iterations": self.solver_iterations,
            "solver_residual": self.solver_residual,
            "symbolic": self.symbolic,
            "trace": self.trace_file,
        }


@dataclass
class CampaignResult:
    outcome: str
    counterexample: Optional[InputSignal]
    experiments: int
    records: List[IterationRecord]
    dataset: Dataset
    robustness: List[float]
    config: RunConfig

    @property
    def falsified(self) -> bool:
        return self.outcome == FALSIFIED

    def summary(self) -> dict:
        return {
            "outcome": self.outcome,
            "experiments": self.experiments,
            "iterations": len(self.records),
            "min_robustness": min(self.robustness),
            "flukes": sum(r.fluke for r in self.records),
            "fallbacks": sum(r.fallback is not None for r in self.records),
        }


def sut_robustness(spec: Formula, trace: Trace) -> float:
    return robustness_exact(spec, SampledSignal(trace.times, {**trace.inputs, **trace.outputs}))


def validate_candidate(plant: SutSpec, u: InputSignal, spec, horizon: Optional[float] = None):
    """Run the SUT on ``u``: ``(trace, robustness, is_counterexample)``."""
    spec = parse_formula(spec) if isinstance(spec, str) else spec
    trace = run_experiment(plant, u, horizon)
    rho = sut_robustness(spec, trace)
    return trace, rho, bool(rho < 0)


def _plant(config: RunConfig) -> SutSpec:
    plant = get_plant(config.plant)
    if config.horizon is not None:
        plant = replace(plant, horizon=float(config.horizon))
    return plant


def _corners(plant: SutSpec, config: RunConfig, seed: int) -> InputSignal:
    rng = np.random.default_rng(seed)
    return corners_random(plant.u_min, plant.u_max, plant.input_names, plant.horizon, config.segment, rng)


def initialize_data(plant: SutSpec, config: RunConfig) -> Dataset:
    """One corners-random experiment with ``config.segment`` long segments."""
    u = _corners(plant, config, stage_seed(config.seed, "init"))
    return Dataset([run_experiment(plant, u, plant.horizon)], [INITIALIZER])


def _synthesize(config: RunConfig, plant: SutSpec, spec: Formula, data: Dataset, rhos, k: int, rec: IterationRecord):
    """Train, distill and solve; returns the candidate input and solver status."""
    t0 = time.perf_counter()
    model = train(data.traces, replace(config.train, seed=stage_seed(config.seed, "train", k)))
    rec.surrogate = model
    t1 = time.perf_counter()
    sym, _ = distill(model, data.traces, replace(config.symreg, seed=stage_seed(config.seed, "symreg", k)),
                     perturb_scale=config.perturb_scale)
    rec.symbolic = sym.to_dict()
    t2 = time.perf_counter()
    base = data[int(np.argmin(rhos))]
    bound = config.state_bound
    p = transcribe(
        sym, spec, config.collocation_step(), plant.horizon, sym.initial_state(base),
        (plant.u_min, plant.u_max), (-bound, bound), config.k,
    )
    w0 = warm_start(p, base.input_signal())
    rec.warm_residual = p.residual(w0)
    sol = solve(p, w0, config.solver)
    t3 = time.perf_counter()
    rec.timings.update(train=t1 - t0, distill=t2 - t1, solve=t3 - t2)
    rec.objective = sol.objective
    rec.status = sol.status
    rec.solver_iterations = sol.iterations
    rec.solver_residual = sol.residual
    rec.solver_log = sol.log
    if sol.status == INFEASIBLE_STALL and not np.isfinite(max(sol.best_history, default=-np.inf)):
        raise _StageFailure("solver stalled without a feasible improvement")
    return extract_input(sol.w, p, plant.input_names)


class _StageFailure(RuntimeError):
    pass


def run_campaign(config: RunConfig) -> CampaignResult:
    spec = parse_formula(config.spec)
    plant = _plant(config)
    if formula_horizon(spec) > plant.horizon + 1e-9:
        raise HorizonError(f"specification horizon {formula_horizon(spec)} exceeds campaign horizon {plant.horizon}")

    data = initialize_data(plant, config)
    rhos = [sut_robustness(spec, tr) for tr in data]
    for tr, rho in zip(data, rhos):
        tr.meta.update(provenance=INITIALIZER, iteration=0, robustness=rho)
    experiments = len(data)
    records: List[IterationRecord] = []
    log.info("initial robustness %.6f", min(rhos))
    if min(rhos) < 0:
        i = int(np.argmin(rhos))
        return CampaignResult(FALSIFIED, data[i].input_signal(), experiments, records, data, rhos, config)

    k = 1
    while k <= config.budget:
        rec = IterationRecord(k, float("nan"), None, None, False)
        try:
            u = _synthesize(config, plant, spec, data, rhos, k, rec)
        except (TrainingError, DistillationError, DivergenceError, FloatingPointError, _StageFailure) as exc:
            rec.fallback = f"{type(exc).__name__}: {exc}"
            log.warning("iteration %d falls back to a corners-random input (%s)", k, rec.fallback)
            u = _corners(plant, config, stage_seed(config.seed, "fallback", k))
        t0 = time.perf_counter()
        trace, rho, violated = validate_candidate(plant, u, spec, plant.horizon)
        rec.timings["experiment"] = time.perf_counter() - t0
        experiments += 1
        rec.robustness = rho
        converged = rec.status == CONVERGED and rec.fallback is None
        rec.fluke = bool(violated and not converged)
        tag = FLUKE if rec.fluke else (INITIALIZER if rec.fallback else OCP_CANDIDATE)
        trace.meta.update(provenance=tag, iteration=k, robustness=rho)
        rec.trace_file = f"trace_{len(data):03d}.csv"
        records.append(rec)
        log.info("iteration %d: robustness %.6f status %s%s", k, rho, rec.status, " (fluke)" if rec.fluke else "")
        if violated and converged:
            data.append(trace, OCP_CANDIDATE)
            rhos.append(rho)
            return CampaignResult(FALSIFIED, u, experiments, records, data, rhos, config)
        data.append(trace, tag)
        rhos.append(rho)
        k += 1
    outcome = FLUKE_ONLY if any(r.fluke for r in records) else BUDGET_EXHAUSTED
    return CampaignResult(outcome, None, experiments, records, data, rhos, config)
