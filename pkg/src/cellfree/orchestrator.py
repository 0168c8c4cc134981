"""Two-timescale training: clustering outside, per-cluster beamsteering inside."""

import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .beamforming import PIPELINES, BeamState, InfeasibleError, finish, run_pipeline
from .channel import NetworkConfig, sample_geometry
from .drl import (CONTINUOUS_AGENTS, CSI_MODES, DISCRETE_AGENTS, AgentConfig, BeamEnv,
                  ClusteringEnv, CsiSchedule, make_agent)
from .partitioning import DEFAULT_CAP

BEAM_MODES = ("drl", *PIPELINES)
CLUSTER_COLUMNS = ("episode", "step", "algorithm", "reward", "loss", "mean_q", "exploration",
                   "config", "per_ue_bps")
BEAM_COLUMNS = ("outer_step", "cluster", "episode", "step", "algorithm", "reward", "loss",
                "mean_q", "exploration")


@dataclass
class RunPlan:
    """Everything one training run needs.

    Episode/step counts and ``tau`` left as ``None`` take the network's
    defaults. ``beam_mode`` picks how the clustering reward gets its beams:
    ``drl`` trains beamsteering agents inside every outer step, ``hybrid``
    and ``conventional`` use the analytic pipelines. ``geometry_seed``
    fixes the deployment independently of the training seed.
    """

    net: NetworkConfig = field(default_factory=NetworkConfig)
    cluster_algo: str = "pg"
    beam_algo: str = "sac"
    csi_mode: str = "fixed"
    episodes_cluster: int = None
    steps_cluster: int = None
    episodes_beam: int = None
    steps_beam: int = None
    tau: int = None
    seed: int = 0
    geometry_seed: int = None
    beam_mode: str = "conventional"
    pool_size: int = 0
    cap: int = DEFAULT_CAP
    agent: AgentConfig = None

    def __post_init__(self):
        net = self.net
        defaults = {"episodes_cluster": net.episodes_cluster, "steps_cluster": net.steps_cluster,
                    "episodes_beam": net.episodes_beam, "steps_beam": net.steps_beam,
                    "tau": net.cluster_period}
        for name, value in defaults.items():
            if getattr(self, name) is None:
                setattr(self, name, value)
        if self.geometry_seed is None:
            self.geometry_seed = self.seed
        self.validate()

    def validate(self):
        for name in ("episodes_cluster", "steps_cluster", "episodes_beam", "steps_beam", "tau"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.cluster_algo not in DISCRETE_AGENTS:
            raise ValueError(f"unknown clustering algorithm {self.cluster_algo!r}; "
                             f"choose from {sorted(DISCRETE_AGENTS)}")
        if self.beam_algo not in CONTINUOUS_AGENTS:
            raise ValueError(f"unknown beamsteering algorithm {self.beam_algo!r}; "
                             f"choose from {sorted(CONTINUOUS_AGENTS)}")
        if self.csi_mode not in CSI_MODES:
            raise ValueError(f"unknown csi mode {self.csi_mode!r}; choose from {CSI_MODES}")
        if self.beam_mode not in BEAM_MODES:
            raise ValueError(f"unknown beam mode {self.beam_mode!r}; choose from {BEAM_MODES}")
        if self.pool_size < 0:
            raise ValueError("pool_size must be >= 0")
        return self

    def with_(self, **changes):
        return replace(self, **changes)

    def agent_config(self, total_steps):
        """Network defaults for zeta and alpha; epsilon decays over half the run."""
        if self.agent is not None:
            return self.agent
        return AgentConfig(zeta=self.net.discount, lr=self.net.learning_rate,
                           explore_steps=max(1, total_steps // 2))

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("net", "agent")}
        return out


class Streams:
    """Independent RNG seeds for each consumer, all derived from the plan seed."""

    NAMES = ("csi", "cluster_agent", "beam_agents", "eval", "solver")

    def __init__(self, seed):
        children = np.random.SeedSequence(seed).spawn(len(self.NAMES))
        self.seeds = {name: int(c.generate_state(1)[0]) for name, c in zip(self.NAMES, children)}
        self._beam = np.random.default_rng(self.seeds["beam_agents"])

    def __getitem__(self, name):
        return self.seeds[name]

    def next_beam_seed(self):
        return int(self._beam.integers(2**31))


@dataclass
class EpisodeLog:
    """Per-step training records of one agent kind (``cluster`` or ``beam``)."""

    kind: str
    algorithm: str
    records: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def columns(self):
        return CLUSTER_COLUMNS if self.kind == "cluster" else BEAM_COLUMNS

    def add(self, episode, step, reward, agent, **extra):
        rec = {"episode": episode, "step": step, "algorithm": self.algorithm,
               "reward": float(reward), "loss": float(agent.last_loss),
               "mean_q": float(agent.last_q), "exploration": float(agent.exploration)}
        rec.update(extra)
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    @property
    def rewards(self):
        return np.array([r["reward"] for r in self.records])

    @property
    def configs(self):
        return [r["config"] for r in self.records if "config" in r]

    def episode_rewards(self):
        """Mean step reward of every episode, in order."""
        groups = {}
        for r in self.records:
            key = (r.get("outer_step", 0), r.get("cluster", 0), r["episode"])
            groups.setdefault(key, []).append(r["reward"])
        return np.array([np.mean(v) for v in groups.values()])


def make_geometry(plan):
    return sample_geometry(plan.net, np.random.default_rng(plan.geometry_seed))


def make_schedule(plan, geom, streams):
    return CsiSchedule(plan.net, geom, plan.csi_mode, plan.pool_size, seed=streams["csi"])


def run_episodes(env, agent, episodes, steps, log, step_info=None, **tags):
    """Standard act/step/observe loop; returns the last observation."""
    s = env.reset()
    for e in range(episodes):
        s = env.reset()
        for t in range(steps):
            a = agent.act(s)
            s2, r, info = env.step(a)
            agent.observe(s, a, r, s2, t == steps - 1)
            extra = step_info(info) if step_info else {}
            log.add(e, t, r, agent, **tags, **extra)
            s = s2
        agent.end_episode()
    return s


def _cluster_info(info):
    return {"config": info["config"], "per_ue_bps": info["per_ue_bps"]}


def train_clustering(plan, geom=None, evaluator=None, streams=None, agent=None):
    """Train the clustering agent with beams from ``plan.beam_mode``'s pipeline
    (or from ``evaluator``). Returns ``(agent, log, env)``."""
    streams = streams or Streams(plan.seed)
    geom = make_geometry(plan) if geom is None else geom
    pipeline = plan.beam_mode if plan.beam_mode in PIPELINES else "conventional"
    env = ClusteringEnv(plan.net, make_schedule(plan, geom, streams), plan.tau, pipeline,
                        evaluator=evaluator, cap=plan.cap, solver_seed=streams["solver"])
    if agent is None:
        total = plan.episodes_cluster * plan.steps_cluster
        agent = make_agent(plan.cluster_algo, env.state_dim, env.n_actions, True,
                           plan.agent_config(total), seed=streams["cluster_agent"])
    log = EpisodeLog("cluster", plan.cluster_algo)
    start = time.perf_counter()
    run_episodes(env, agent, plan.episodes_cluster, plan.steps_cluster, log, _cluster_info)
    log.wall_clock = time.perf_counter() - start
    return agent, log, env


def train_beam(plan, clusters, n, schedule=None, geom=None, agent=None, log=None, seed=None,
               base_state=None, streams=None, **tags):
    """Train (or keep training) the beamsteering agent of cluster ``n``.

    Returns ``(agent, env, log, last_observation)``.
    """
    streams = streams or Streams(plan.seed)
    if schedule is None:
        schedule = make_schedule(plan, make_geometry(plan) if geom is None else geom, streams)
    env = BeamEnv(plan.net, clusters, n, schedule, base_state=base_state,
                  solver_seed=streams["solver"])
    if agent is None or agent.state_dim != env.state_dim or agent.action_dim != env.action_dim:
        total = plan.episodes_beam * plan.steps_beam
        seed = streams.next_beam_seed() if seed is None else seed
        agent = make_agent(plan.beam_algo, env.state_dim, env.action_dim, False,
                           plan.agent_config(total), seed=seed)
    log = log if log is not None else EpisodeLog("beam", plan.beam_algo)
    tags.setdefault("outer_step", 0)
    start = time.perf_counter()
    obs = run_episodes(env, agent, plan.episodes_beam, plan.steps_beam, log,
                       cluster=n, **tags)
    log.wall_clock += time.perf_counter() - start
    return agent, env, log, obs


def compose_state(net, clusters, parts):
    """One network-wide ``BeamState`` from each cluster's greedy phases.

    ``parts`` maps cluster index to ``(agent, env, observation)``.
    """
    state = BeamState.initial(net, clusters)
    for n, (agent, env, obs) in parts.items():
        own = env.apply(agent.mean_action(obs))
        for m in env.aps:
            state.steer[m] = own.steer[m]
        for k in env.ues:
            state.combiner[k] = own.combiner[k]
    return state


@dataclass
class HierResult:
    cluster_agent: object
    beam_agents: dict
    cluster_log: EpisodeLog
    beam_log: EpisodeLog
    env: object
    wall_clock: float = 0.0


def train_hierarchical(plan, geom=None):
    """Clustering training whose every outer slot first trains one
    beamsteering agent per cluster on that slot's channels, then solves the
    digital weights for the composed analog beams and scores the result.

    Beam agents are kept per cluster index and warm-started while their
    action dimension is unchanged. Clusters are trained one after another,
    which gives the same result as running them in parallel since each has
    its own environment, channel snapshot and seed.
    """
    streams = Streams(plan.seed)
    net = plan.net
    beam_agents = {}
    beam_log = EpisodeLog("beam", plan.beam_algo)
    slot = [0]
    per_step = plan.tau * plan.steps_cluster

    def evaluator(clusters, channels, index):
        outer = slot[0]
        slot[0] += 1
        if plan.beam_mode != "drl":
            return run_pipeline(net, clusters, channels, plan.beam_mode,
                                seed=streams["solver"]).sinr
        episode, step = divmod(outer // plan.tau, plan.steps_cluster)
        parts = {}
        for n in range(clusters.n_clusters):
            try:
                agent, env, _, obs = train_beam(
                    plan, clusters, n, schedule=CsiSchedule.snapshot(net, channels),
                    agent=beam_agents.get(n), log=beam_log, streams=streams, outer_step=outer)
            except (InfeasibleError, FloatingPointError) as exc:
                raise RuntimeError(
                    f"episode {episode}, step {step}, cluster {n}: {exc}") from exc
            beam_agents[n] = agent
            parts[n] = (agent, env, obs)
        state = compose_state(net, clusters, parts)
        try:
            return finish(net, channels, state, seed=streams["solver"]).sinr
        except InfeasibleError as exc:
            raise RuntimeError(f"episode {episode}, step {step}: {exc}") from exc

    start = time.perf_counter()
    agent, log, env = train_clustering(plan, geom, evaluator, streams)
    assert slot[0] == plan.episodes_cluster * per_step
    return HierResult(agent, beam_agents, log, beam_log, env, time.perf_counter() - start)


def _rollout(env, choose, slots):
    s = env.reset()
    rewards, bps, configs = [], [], []
    for _ in range(slots):
        j = choose(s)
        s, r, info = env.step(j)
        rewards.append(r)
        bps.append(info["per_ue_bps"])
        configs.append(info["config"])
    return {"mean_reward": float(np.mean(rewards)), "mean_per_ue_bps": float(np.mean(bps)),
            "slots": slots, "configs": configs}


def inference_env(plan, geom=None, beam_agents=None, seed=None):
    """A clustering environment on a fresh CSI stream for evaluation.

    With trained beam agents the beams come from their mean actions (no
    learning); otherwise from the plan's analytic pipeline.
    """
    streams = Streams(plan.seed)
    geom = make_geometry(plan) if geom is None else geom
    eval_seed = streams["eval"] if seed is None else seed
    schedule = CsiSchedule(plan.net, geom, plan.csi_mode, plan.pool_size, seed=eval_seed)
    evaluator = None
    if beam_agents:
        def evaluator(clusters, channels, index):
            parts = {}
            snap = CsiSchedule.snapshot(plan.net, channels)
            for n in range(clusters.n_clusters):
                env = BeamEnv(plan.net, clusters, n, snap, solver_seed=streams["solver"])
                agent = beam_agents.get(n)
                if agent is None or agent.action_dim != env.action_dim:
                    continue
                parts[n] = (agent, env, env.reset())
            state = compose_state(plan.net, clusters, parts)
            return finish(plan.net, channels, state, seed=streams["solver"]).sinr
    pipeline = plan.beam_mode if plan.beam_mode in PIPELINES else "conventional"
    return ClusteringEnv(plan.net, schedule, plan.tau, pipeline, evaluator=evaluator,
                         cap=plan.cap, solver_seed=streams["solver"])


def evaluate_inference(cluster_agent, plan, slots=None, beam_agents=None, geom=None, seed=None):
    """Greedy rollout of a trained clustering agent; no learning updates."""
    slots = plan.steps_cluster if slots is None else slots
    env = inference_env(plan, geom, beam_agents, seed)
    return _rollout(env, lambda s: cluster_agent.act(s, greedy=True), slots)


def random_baseline(plan, slots=None, geom=None, seed=None):
    """Uniformly random configurations on the same evaluation stream."""
    slots = plan.steps_cluster if slots is None else slots
    env = inference_env(plan, geom, None, seed)
    rng = np.random.default_rng(Streams(plan.seed)["eval"] + 1)
    return _rollout(env, lambda s: int(rng.integers(env.n_actions)), slots)


@dataclass
class ExhaustiveResult:
    best_index: int
    best_value: float
    values: np.ndarray
    per_ue_bps: np.ndarray


def exhaustive_baseline(net, channels, pipeline="conventional", seed=0, cap=DEFAULT_CAP):
    """Score every configuration on one channel realization (one slot).

    The value is the clustering reward; ties go to the lowest index.
    """
    env = ClusteringEnv(net, CsiSchedule.snapshot(net, channels), 1, pipeline, cap=cap,
                        solver_seed=seed)
    values, bps = [], []
    for j in range(env.n_actions):
        _, r, info = env.step(j)
        values.append(r)
        bps.append(info["per_ue_bps"])
    values = np.array(values)
    best = int(np.argmax(values))
    return ExhaustiveResult(best, float(values[best]), values, np.array(bps))


def run_summary(plan, log, exhaustive=None, inference=None, wall_clock=None):
    """Plain-text report: final metrics, oracle gap and wall-clock."""
    ep = log.episode_rewards()
    tail = ep[-min(100, len(ep)):]
    lines = [f"clustering algorithm: {plan.cluster_algo}",
             f"beam mode: {plan.beam_mode}" + (f" ({plan.beam_algo})" if plan.beam_mode == "drl" else ""),
             f"csi mode: {plan.csi_mode}",
             f"episodes: {len(ep)}",
             f"final-100 mean reward: {tail.mean():.6g}",
             f"episode reward variance: {ep.var():.6g}"]
    if exhaustive is not None:
        lines.append(f"exhaustive optimum: {exhaustive.best_value:.6g} (config {exhaustive.best_index})")
        if exhaustive.best_value > 0:
            lines.append(f"oracle ratio: {tail.mean() / exhaustive.best_value:.6g}")
    if inference is not None:
        lines.append(f"inference mean reward: {inference['mean_reward']:.6g}")
        lines.append(f"inference per-UE bps/Hz: {inference['mean_per_ue_bps']:.6g}")
    if wall_clock is not None:
        lines.append(f"wall-clock s: {wall_clock:.3f}")
    return "\n".join(lines) + "\n"
