"""Falsification campaigns and their on-disk artifacts."""

from .campaign import (
    BUDGET_EXHAUSTED,
    FALSIFIED,
    FLUKE,
    FLUKE_ONLY,
    INITIALIZER,
    OCP_CANDIDATE,
    CampaignResult,
    Dataset,
    IterationRecord,
    initialize_data,
    run_campaign,
    sut_robustness,
    validate_candidate,
)
from .config import RunConfig, load_config, stage_seed
from .persist import load_dataset, persist_run, write_dataset

__all__ = [
    "BUDGET_EXHAUSTED",
    "CampaignResult",
    "Dataset",
    "FALSIFIED",
    "FLUKE",
    "FLUKE_ONLY",
    "INITIALIZER",
    "IterationRecord",
    "OCP_CANDIDATE",
    "RunConfig",
    "initialize_data",
    "load_config",
    "load_dataset",
    "persist_run",
    "run_campaign",
    "stage_seed",
    "sut_robustness",
    "validate_candidate",
    "write_dataset",
]
