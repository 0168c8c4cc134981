"""End-to-end beamforming for one configuration and one slot."""

from dataclasses import dataclass

import numpy as np

from .rates import order_ues, sum_rate
from .solver import solve_digital_beamforming
from .state import BeamState, compute_effective
from .steering import beamsteer_objective, optimize_steering

PIPELINES = ("hybrid", "conventional")


@dataclass
class PipelineResult:
    state: BeamState
    eff: object
    sum_rate: float
    rates: np.ndarray
    sinr: np.ndarray
    steer_objective: dict
    eps_used: dict
    kkt_residual: dict


def solve_digital(net, channels, state, eps=None, seed=0, n_random=64, n_keep=4):
    """Order UEs and solve every cluster's digital weights in place.

    Clusters are solved against a common snapshot of the other clusters'
    weights (the ones held in ``state`` on entry), then all are written back.
    """
    eps = net.sic_margin_w if eps is None else eps
    cl = state.clusters
    eff = compute_effective(channels, state, net)
    for n in range(cl.n_clusters):
        state.order[n] = order_ues(n, cl, eff)
    results = {n: solve_digital_beamforming(n, eff, state, eps, seed=seed,
                                            n_random=n_random, n_keep=n_keep)
               for n in range(cl.n_clusters)}
    for res in results.values():
        state.digital.update(res.weights)
    return eff, results


def run_pipeline(net, clusters, channels, kind="hybrid", state=None, eps=None, seed=0,
                 n_random=64, n_keep=4):
    """Analog stage (optimized for ``hybrid``, all-ones for ``conventional``),
    then UE ordering, digital weights and rates."""
    if kind not in PIPELINES:
        raise ValueError(f"unknown pipeline {kind!r}; choose from {PIPELINES}")
    clusters.validate(net.rf_chains)
    if state is None:
        state = BeamState.initial(net, clusters)
    else:
        state = state.copy()
    steer_obj = {}
    for n in range(clusters.n_clusters):
        if kind == "hybrid":
            steer_obj[n] = optimize_steering(n, channels, state)
        else:
            steer_obj[n] = beamsteer_objective(n, channels, state)
    return finish(net, channels, state, eps, seed, n_random, n_keep, steer_obj)


def finish(net, channels, state, eps=None, seed=0, n_random=64, n_keep=4, steer_obj=None):
    """Digital stage and rates for a state whose analog part is already set."""
    eff, results = solve_digital(net, channels, state, eps, seed, n_random, n_keep)
    eff = compute_effective(channels, state, net)
    total, rates, gamma = sum_rate(eff, state)
    return PipelineResult(
        state=state, eff=eff, sum_rate=total, rates=rates, sinr=gamma,
        steer_objective=steer_obj or {},
        eps_used={n: r.eps_used for n, r in results.items()},
        kkt_residual={n: r.kkt_residual for n, r in results.items()},
    )


def conventional_baseline(net, clusters, channels, eps=None, seed=0):
    return run_pipeline(net, clusters, channels, "conventional", eps=eps, seed=seed)


def hybrid(net, clusters, channels, eps=None, seed=0):
    return run_pipeline(net, clusters, channels, "hybrid", eps=eps, seed=seed)


RATE_COLUMNS = ("seed", "slot", "config", "pipeline", "ue", "sinr", "rate", "sum_rate")


def rate_rows(seed, slot, config_index, result, pipeline):
    """One CSV record per UE; the sum rate is repeated on every row."""
    return [
        {"seed": seed, "slot": slot, "config": config_index, "pipeline": pipeline,
         "ue": k, "sinr": float(result.sinr[k]), "rate": float(result.rates[k]),
         "sum_rate": result.sum_rate}
        for k in range(len(result.rates))
    ]
