"""Simulation of the routing pass on the memory cube and of the host pipeline."""
from .engine import (
    EnergyCoeffs, PipelineResult, Scenario, SimMetrics, energy_model, run_pipeline, run_rp,
)
from .host import pipeline_model
from .workload import WorkloadSnippet, intra_vault_schedule, partition_workload, total_ops

__all__ = [
    "EnergyCoeffs", "PipelineResult", "Scenario", "SimMetrics", "WorkloadSnippet",
    "energy_model", "intra_vault_schedule", "partition_workload", "pipeline_model",
    "run_pipeline", "run_rp", "total_ops",
]
