"""Experiment harness: synthetic data, sweeps, rate fits, privacy audits."""

from .audit import AuditReport, audit_privacy, audit_slack
from .generate import DISTRIBUTIONS, GeneratedData, generate
from .sweep import (
    ExperimentSpec,
    TrialRecord,
    determinism_hash,
    fit_rate,
    run_sweep,
    write_records,
)
