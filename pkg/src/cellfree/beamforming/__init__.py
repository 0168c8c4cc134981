"""Hybrid analog/digital beamforming inside each cluster."""

from .pipeline import (PIPELINES, PipelineResult, conventional_baseline, finish, hybrid,
                       rate_rows, run_pipeline)
from .rates import (all_sinrs, isni, order_ues, ordering_metric, rates_from_sinr,
                    sinr_post_sic, sinr_pre_sic, sum_rate)
from .solver import DigitalProblem, InfeasibleError, SolveResult, solve_digital_beamforming
from .state import BeamState, EffectiveChannels, compute_effective, effective_channel, noise_factor
from .steering import beamsteer_objective, maximize_unimodular, optimize_steering

__all__ = [
    "BeamState", "EffectiveChannels", "compute_effective", "effective_channel", "noise_factor",
    "order_ues", "ordering_metric", "sinr_post_sic", "sinr_pre_sic", "all_sinrs", "isni",
    "sum_rate", "rates_from_sinr", "DigitalProblem", "SolveResult", "InfeasibleError",
    "solve_digital_beamforming", "beamsteer_objective", "optimize_steering",
    "maximize_unimodular", "run_pipeline", "finish", "hybrid", "conventional_baseline",
    "rate_rows", "PIPELINES", "PipelineResult",
]
