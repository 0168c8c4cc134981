"""Environments for the clustering agent and the per-cluster beamsteering agent."""

import itertools

import numpy as np

from ..beamforming import (BeamState, beamsteer_objective, compute_effective, order_ues,
                           run_pipeline, sinr_post_sic, solve_digital_beamforming)
from ..channel import sample_channel
from ..partitioning import DEFAULT_CAP, ConfigSpace

CSI_MODES = ("fixed", "per-step-resample")
LOG_FLOOR = np.log(1e-30)


def floored_log(x):
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(np.asarray(x, dtype=float)), LOG_FLOOR)


class CsiSchedule:
    """Where each environment step gets its channels from.

    ``fixed`` always returns the geometry's own channels. ``per-step-resample``
    redraws the small-scale gains every step (positions and angles stay);
    with ``pool_size > 0`` the draws come from a pool of that many
    realizations built up front, which lets environments cache their
    per-realization solves.
    """

    def __init__(self, net, geom, mode="fixed", pool_size=0, seed=0):
        if mode not in CSI_MODES:
            raise ValueError(f"unknown csi mode {mode!r}; choose from {CSI_MODES}")
        if pool_size < 0:
            raise ValueError("pool_size must be >= 0")
        self.net, self.geom, self.mode = net, geom, mode
        self.rng = np.random.default_rng(seed)
        self.pool = None
        self.draws = 0
        if mode == "fixed":
            self.pool = [sample_channel(geom, net)]
        elif pool_size:
            self.pool = [sample_channel(geom, net, self.rng, slot_index=i) for i in range(pool_size)]

    @classmethod
    def snapshot(cls, net, channels):
        """A ``fixed`` schedule that always returns ``channels``."""
        sched = cls.__new__(cls)
        sched.net, sched.geom, sched.mode = net, None, "fixed"
        sched.rng = np.random.default_rng(0)
        sched.pool = [channels]
        sched.draws = 0
        return sched

    @property
    def cacheable(self):
        return self.pool is not None

    def draw(self):
        """``(index, channels)``; the index is ``None`` for uncached fresh draws."""
        self.draws += 1
        if self.mode == "fixed":
            return 0, self.pool[0]
        if self.pool is not None:
            i = int(self.rng.integers(len(self.pool)))
            return i, self.pool[i]
        return None, sample_channel(self.geom, self.net, self.rng, slot_index=self.draws)


def pipeline_sinr(net, clusters, channels, kind="conventional", seed=0):
    """Per-UE post-SIC SINR of the whole network under one configuration."""
    return run_pipeline(net, clusters, channels, kind, seed=seed).sinr


class ClusteringEnv:
    """Action = configuration index; state = per-cluster log SINR products.

    Over the ``tau`` slots of a step the state accumulates
    ``sum_t sum_{i in n} log(gamma_i)`` per cluster and the reward is
    ``prod_t prod_n sum_{i in n} ln(1 + gamma_i)``, both formed in the log
    domain with every log floored at ``log(1e-30)``.
    """

    def __init__(self, net, schedule, tau=1, pipeline="conventional", evaluator=None,
                 cap=DEFAULT_CAP, solver_seed=0):
        if tau < 1:
            raise ValueError("tau must be >= 1")
        self.net, self.schedule, self.tau = net, schedule, int(tau)
        self.pipeline = pipeline
        self.space = ConfigSpace.for_network(net, cap)
        self.state_dim = net.n_clusters
        self.n_actions = len(self.space)
        self.solver_seed = solver_seed
        self.evaluator = evaluator
        self._cache = {}
        self.state = np.zeros(self.state_dim)

    def reset(self):
        self.state = np.zeros(self.state_dim)
        return self.state.copy()

    def sinr(self, j, index, channels):
        clusters = self.space[j]
        if self.evaluator is not None:
            return np.asarray(self.evaluator(clusters, channels, index), dtype=float)
        key = (j, index)
        if index is not None and key in self._cache:
            return self._cache[key]
        gamma = pipeline_sinr(self.net, clusters, channels, self.pipeline, self.solver_seed)
        if index is not None and self.schedule.cacheable:
            self._cache[key] = gamma
        return gamma

    def step(self, j):
        if isinstance(j, (bool, np.bool_)) or not isinstance(j, (int, np.integer)):
            raise TypeError(f"action must be an integer config index, got {j!r}")
        if not 0 <= j < self.n_actions:
            raise IndexError(f"config index {j} out of range [0, {self.n_actions})")
        clusters = self.space[j]
        log_state = np.zeros(self.state_dim)
        log_reward = 0.0
        per_ue = []
        for _ in range(self.tau):
            index, channels = self.schedule.draw()
            gamma = self.sinr(int(j), index, channels)
            for n in range(self.state_dim):
                g = gamma[clusters.ues_in(n)]
                log_state[n] += float(np.sum(floored_log(g)))
                log_reward += float(floored_log(np.sum(np.log1p(g))))
            per_ue.append(np.log2(1.0 + gamma))
        self.state = log_state
        rates = np.mean(per_ue, axis=0)
        info = {"config": int(j), "log_reward": log_reward,
                "per_ue_bps": float(np.mean(rates)), "sum_rate": float(np.sum(rates))}
        return log_state.copy(), float(np.exp(log_reward)), info


def action_to_phases(action):
    """Map actions in ``[-1, 1]`` to phases ``pi * a`` wrapped to ``[0, 2 pi)``."""
    return np.mod(np.pi * np.asarray(action, dtype=float), 2.0 * np.pi)


class BeamEnv:
    """Beamsteering for cluster ``n``: the action sets every analog phase.

    The action holds ``D_A * a * D_U`` steering phases (AP by AP, each
    ``a x D_U`` block row-major) followed by ``D_U * u`` combiner phases
    (UE by UE). Each step applies them, solves the cluster's digital
    weights against the base state's other clusters, and returns
    ``log(1 + gamma)`` of the cluster's UEs as the observation. The reward
    is the beamsteering objective divided by a per-channel upper bound, so
    it lies in ``[0, reward_scale]``.
    """

    def __init__(self, net, clusters, n, schedule, base_state=None, eps=None, solver_seed=0,
                 reward_scale=10.0):
        clusters.validate(net.rf_chains)
        if not 0 <= n < clusters.n_clusters:
            raise IndexError(f"cluster {n} out of range")
        self.net, self.clusters, self.n, self.schedule = net, clusters, n, schedule
        self.aps = clusters.aps_in(n)
        self.ues = clusters.ues_in(n)
        self.n_ue = len(self.ues)
        a, u = net.n_ap_antennas, net.n_ue_antennas
        self.n_steer = len(self.aps) * a * self.n_ue
        self.action_dim = self.n_steer + self.n_ue * u
        self.state_dim = self.n_ue
        self.base = BeamState.initial(net, clusters) if base_state is None else base_state.copy()
        self.eps = net.sic_margin_w if eps is None else eps
        self.solver_seed = solver_seed
        self.reward_scale = float(reward_scale)
        self._bounds = {}
        self.last_state = None

    def reset(self):
        return np.zeros(self.state_dim)

    def apply(self, action):
        """A copy of the base state with this cluster's analog phases set."""
        action = np.asarray(action, dtype=float).ravel()
        if action.size != self.action_dim:
            raise ValueError(f"action length {action.size} != {self.action_dim}")
        ph = np.exp(1j * action_to_phases(action))
        state = self.base.copy()
        a, u = self.net.n_ap_antennas, self.net.n_ue_antennas
        block = a * self.n_ue
        for i, m in enumerate(self.aps):
            state.steer[m] = ph[i * block:(i + 1) * block].reshape(a, self.n_ue)
        rest = ph[self.n_steer:]
        for i, k in enumerate(self.ues):
            state.combiner[k] = rest[i * u:(i + 1) * u]
        return state

    def reward_bound(self, index, channels):
        if index is not None and index in self._bounds:
            return self._bounds[index]
        cl = self.clusters
        a, u = self.net.n_ap_antennas, self.net.n_ue_antennas
        total = 0.0
        for m in self.aps:
            for k, l in enumerate(cl.ue_cluster):
                k1, k0 = channels.projected_sigma(k, m)
                K = k1 if l == self.n else k0
                total += np.linalg.norm(K, 2) ** 2
        bound = total * u * a * self.n_ue / self.reward_scale
        if index is not None:
            self._bounds[index] = bound
        return bound

    def objective(self, action, channels, index=None):
        state = self.apply(action)
        bound = self.reward_bound(index, channels)
        value = beamsteer_objective(self.n, channels, state)
        return value / bound if bound > 0 else 0.0

    def step(self, action):
        index, channels = self.schedule.draw()
        state = self.apply(action)
        raw = beamsteer_objective(self.n, channels, state)
        bound = self.reward_bound(index, channels)
        eff = compute_effective(channels, state, self.net)
        state.order[self.n] = order_ues(self.n, self.clusters, eff)
        res = solve_digital_beamforming(self.n, eff, state, self.eps, seed=self.solver_seed,
                                        n_random=64, n_keep=4)
        state.digital.update(res.weights)
        eff = compute_effective(channels, state, self.net)
        gamma = np.array([sinr_post_sic(k, eff, state) for k in self.ues])
        self.last_state = state
        obs = np.log1p(gamma)
        info = {"gamma": gamma, "objective": raw, "eps_used": res.eps_used}
        return obs, (raw / bound if bound > 0 else 0.0), info


def grid_actions(dim, levels=8):
    """Every action whose phases lie on the ``levels``-point grid ``2 pi k / levels``."""
    ks = np.arange(levels)
    values = np.mod(2.0 * ks / levels + 1.0, 2.0) - 1.0
    return itertools.product(values, repeat=dim)


def phase_grid_search(env, levels=8):
    """Best normalized objective over the phase grid, with its action.

    Evaluated on the schedule's first pool realization (the fixed channel in
    ``fixed`` mode); ties keep the first grid point.
    """
    if env.schedule.pool is None:
        raise ValueError("grid search needs a fixed channel or a realization pool")
    channels = env.schedule.pool[0]
    best, best_action = -np.inf, None
    for action in grid_actions(env.action_dim, levels):
        v = env.objective(np.array(action), channels, index=0)
        if v > best:
            best, best_action = v, np.array(action)
    return best, best_action
