"""DRL agents: DDQN, SARSA, PG and AC over discrete actions; PG, AC,
DDPG and SAC over continuous actions in ``[-1, 1]^A``.

Every agent exposes ``act(state, greedy=False)``, ``observe(s, a, r, s2,
done)`` (returns a loss or ``None``) and ``end_episode()``. Targets and
losses live in small functions so they can be checked in isolation.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .nets import (HIDDEN, LOG_STD_MAX, LOG_STD_MIN, Mlp, gaussian_head, make_optimizer,
                   softmax, squash_log_prob)
from .replay import ReplayBuffer


@dataclass
class AgentConfig:
    zeta: float = 0.01
    lr: float = 1e-3
    hidden: tuple = HIDDEN
    optimizer: str = "adam"
    capacity: int = 100_000
    batch_size: int = 64
    eps_start: float = 1.0
    eps_end: float = 0.05
    explore_steps: int = 1000
    tau: float = 0.005
    temperature: float = 0.2
    noise_std: float = 0.1

    def validate(self):
        if not 0.0 <= self.zeta < 1.0:
            raise ValueError(f"discount zeta must be in [0, 1), got {self.zeta}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"soft-update rate must be in (0, 1], got {self.tau}")
        if self.explore_steps < 1:
            raise ValueError("explore_steps must be >= 1")
        self.hidden = tuple(int(h) for h in self.hidden)
        return self

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


# ---------------------------------------------------------------- targets

def double_q_targets(rewards, done, q_next_online, q_next_target, zeta):
    """``r + zeta * Q_target(s', argmax_a Q_online(s', a))``; ``r`` when terminal."""
    q_next_online = np.atleast_2d(q_next_online)
    q_next_target = np.atleast_2d(q_next_target)
    best = np.argmax(q_next_online, axis=1)
    boot = q_next_target[np.arange(len(best)), best]
    return np.asarray(rewards, float) + zeta * (1.0 - np.asarray(done, float)) * boot


def sarsa_target(reward, done, q_next, zeta):
    return reward + (0.0 if done else zeta * q_next)


def discounted_returns(rewards, zeta):
    """``G_t = sum_{l=t}^T zeta^(l-1) r_l`` with steps counted from 1."""
    r = np.asarray(rewards, dtype=float)
    weighted = zeta ** np.arange(len(r)) * r
    return np.cumsum(weighted[::-1])[::-1]


def sac_value_target(q, log_prob, alpha):
    return np.asarray(q) - alpha * np.asarray(log_prob)


def sac_q_target(rewards, done, v_next, zeta):
    return np.asarray(rewards, float) + zeta * (1.0 - np.asarray(done, float)) * np.asarray(v_next)


def linear_epsilon(step, start, end, steps):
    return end + (start - end) * max(0.0, 1.0 - step / steps)


# ------------------------------------------------------------ loss helpers

def mse_grads(net, x, y):
    """Mean squared error of a one-output net against ``y`` and its gradients."""
    out, acts = net.forward(x)
    err = out[:, 0] - y
    loss = float(np.mean(err ** 2))
    grads, _ = net.backward(acts, (2.0 * err / len(err))[:, None])
    return loss, grads


def q_selected_grads(net, states, actions, targets):
    """Squared TD error on the taken actions only."""
    q, acts = net.forward(states)
    rows = np.arange(len(actions))
    err = q[rows, actions] - targets
    g = np.zeros_like(q)
    g[rows, actions] = 2.0 * err / len(err)
    grads, _ = net.backward(acts, g)
    return float(np.mean(err ** 2)), grads, q


def softmax_pg_grads(net, states, actions, weights):
    """Gradient of ``-sum_t w_t log pi(a_t | s_t)`` for a softmax policy."""
    logits, acts = net.forward(states)
    p = softmax(logits)
    onehot = np.zeros_like(p)
    onehot[np.arange(len(actions)), actions] = 1.0
    g = -np.asarray(weights, float)[:, None] * (onehot - p)
    grads, _ = net.backward(acts, g)
    logp = np.log(p[np.arange(len(actions)), actions] + 1e-300)
    return float(-np.sum(weights * logp)), grads


def gaussian_pg_grads(net, states, pre_tanh, weights):
    """Gradient of ``-sum_t w_t log pi(u_t | s_t)`` for the squashed Gaussian.

    ``pre_tanh`` holds the sampled ``u`` (action ``tanh(u)``); the tanh
    correction does not depend on the parameters once ``u`` is fixed.
    """
    out, acts = net.forward(states)
    mean, log_std = gaussian_head(out)
    std = np.exp(log_std)
    z = (pre_tanh - mean) / std
    w = np.asarray(weights, float)[:, None]
    g_mean = -w * z / std
    g_log_std = -w * (z ** 2 - 1.0)
    raw = out[..., mean.shape[-1]:]
    g_log_std = np.where((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX), g_log_std, 0.0)
    grads, _ = net.backward(acts, np.concatenate([g_mean, g_log_std], axis=-1))
    logp = squash_log_prob(pre_tanh, mean, log_std)
    return float(-np.sum(np.asarray(weights) * logp)), grads


def _tanh_correction_grad(u):
    # d/du of -log(1 - tanh(u)^2 + 1e-6)
    t = np.tanh(u)
    s = 1.0 - t ** 2
    return 2.0 * t * s / (s + 1e-6)


def sac_policy_loss(policy_net, q_nets, states, noise, alpha):
    """Reparameterized policy loss ``mean(alpha log pi - min_i Q_i)`` and its gradients.

    ``noise`` is the standard normal draw behind ``u = mean + std * noise``.
    """
    out, acts = policy_net.forward(states)
    mean, log_std = gaussian_head(out)
    std = np.exp(log_std)
    u = mean + std * noise
    a = np.tanh(u)
    logp = squash_log_prob(u, mean, log_std)
    x = np.concatenate([states, a], axis=-1)
    fwd = [q.forward(x) for q in q_nets]
    qv = np.stack([f[0][:, 0] for f in fwd])
    pick = np.argmin(qv, axis=0)
    qmin = qv[pick, np.arange(len(pick))]
    B = len(states)
    loss = float(np.mean(alpha * logp - qmin))
    S = states.shape[-1]
    ga = np.zeros_like(a)
    for i, (q, (_, qacts)) in enumerate(zip(q_nets, fwd)):
        up = (-(pick == i).astype(float) / B)[:, None]
        _, gx = q.backward(qacts, up)
        ga += gx[:, S:]
    du = ga * (1.0 - a ** 2)
    tc = _tanh_correction_grad(u)
    g_mean = du + alpha / B * tc
    g_log_std = du * std * noise + alpha / B * (tc * std * noise - 1.0)
    raw = out[..., mean.shape[-1]:]
    g_log_std = np.where((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX), g_log_std, 0.0)
    grads, _ = policy_net.backward(acts, np.concatenate([g_mean, g_log_std], axis=-1))
    return loss, grads


def ddpg_actor_grads(actor, critic, states):
    """Gradient of ``-mean Q(s, tanh(actor(s)))`` w.r.t. the actor."""
    out, aacts = actor.forward(states)
    mu = np.tanh(out)
    q, cacts = critic.forward(np.concatenate([states, mu], axis=-1))
    B = len(states)
    _, gx = critic.backward(cacts, np.full((B, 1), -1.0 / B))
    g_out = gx[:, states.shape[-1]:] * (1.0 - mu ** 2)
    grads, _ = actor.backward(aacts, g_out)
    return float(-np.mean(q)), grads


# ----------------------------------------------------------------- agents

class Agent:
    discrete = True
    tag = ""

    def __init__(self, state_dim, action_dim, config=None, seed=None):
        self.config = (config or AgentConfig()).validate()
        self.state_dim, self.action_dim = int(state_dim), int(action_dim)
        if self.state_dim < 1 or self.action_dim < 1:
            raise ValueError("state and action dimensions must be positive")
        self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.last_loss = float("nan")
        self.last_q = float("nan")

    def _net(self, dims, **kw):
        return Mlp(dims, rng=self.rng, **kw)

    def _opt(self, net):
        return make_optimizer(self.config.optimizer, net.params, self.config.lr)

    def networks(self):
        raise NotImplementedError

    @property
    def exploration(self):
        return float("nan")

    def end_episode(self):
        return None


class DdqnAgent(Agent):
    tag = "ddqn"

    def __init__(self, state_dim, action_dim, config=None, seed=None):
        super().__init__(state_dim, action_dim, config, seed)
        c = self.config
        self.online = self._net([self.state_dim, *c.hidden, self.action_dim])
        self.target = self.online.copy()
        self.opt = self._opt(self.online)
        self.buffer = ReplayBuffer(c.capacity, c.batch_size, self.rng)

    def networks(self):
        return {"online": self.online, "target": self.target}

    @property
    def exploration(self):
        c = self.config
        return linear_epsilon(self.steps, c.eps_start, c.eps_end, c.explore_steps)

    def act(self, state, greedy=False):
        q = self.online(state)
        self.last_q = float(np.max(q))
        if not greedy and self.rng.random() < self.exploration:
            return int(self.rng.integers(self.action_dim))
        return int(np.argmax(q))

    def observe(self, s, a, r, s2, done=False):
        self.steps += 1
        self.buffer.add(s, a, r, s2, done)
        if len(self.buffer) < self.buffer.batch_size:
            return None
        return self.update(self.buffer.sample())

    def update(self, batch):
        c = self.config
        y = double_q_targets(batch["reward"], batch["done"], self.online(batch["next_state"]),
                             self.target(batch["next_state"]), c.zeta)
        loss, grads, _ = q_selected_grads(self.online, batch["state"],
                                          batch["action"].astype(int), y)
        self.opt.step(self.online.params, grads)
        self.target.soft_update(self.online, c.tau)
        self.last_loss = loss
        return loss


class SarsaAgent(Agent):
    """On-policy one-step SARSA; the next action is chosen inside ``observe``
    and returned by the following ``act`` call."""

    tag = "sarsa"

    def __init__(self, state_dim, action_dim, config=None, seed=None):
        super().__init__(state_dim, action_dim, config, seed)
        c = self.config
        self.q = self._net([self.state_dim, *c.hidden, self.action_dim])
        self.opt = self._opt(self.q)
        self._queued = None

    def networks(self):
        return {"q": self.q}

    @property
    def exploration(self):
        c = self.config
        return linear_epsilon(self.steps, c.eps_start, c.eps_end, c.explore_steps)

    def _select(self, state, greedy=False, q=None):
        q = self.q(state) if q is None else q
        self.last_q = float(np.max(q))
        if not greedy and self.rng.random() < self.exploration:
            return int(self.rng.integers(self.action_dim))
        return int(np.argmax(q))

    def act(self, state, greedy=False):
        if self._queued is not None and not greedy:
            a, self._queued = self._queued, None
            return a
        return self._select(state, greedy)

    def update(self, s, a, r, s2, a2, done=False, q_next=None):
        c = self.config
        if not done and q_next is None:
            q_next = self.q(s2)
        y = sarsa_target(r, done, 0.0 if done else float(q_next[a2]), c.zeta)
        loss, grads, _ = q_selected_grads(self.q, np.atleast_2d(s), np.array([a]), np.array([y]))
        self.opt.step(self.q.params, grads)
        self.last_loss = loss
        return loss

    def observe(self, s, a, r, s2, done=False):
        self.steps += 1
        q_next = None if done else self.q(s2)
        a2 = None if done else self._select(s2, q=q_next)
        loss = self.update(s, int(a), r, s2, a2, done, q_next)
        self._queued = a2
        return loss

    def end_episode(self):
        self._queued = None
        return None


class _EpisodicMixin:
    def _reset_episode(self):
        self._states, self._actions, self._rewards = [], [], []

    def _record(self, s, a, r):
        self._states.append(np.asarray(s, float))
        self._actions.append(a)
        self._rewards.append(float(r))


class PgAgent(_EpisodicMixin, Agent):
    """REINFORCE with a softmax policy; one step per finished episode."""

    tag = "pg"

    def __init__(self, state_dim, action_dim, config=None, seed=None):
        super().__init__(state_dim, action_dim, config, seed)
        self.policy = self._net([self.state_dim, *self.config.hidden, self.action_dim])
        self.opt = self._opt(self.policy)
        self._reset_episode()

    def networks(self):
        return {"policy": self.policy}

    def probabilities(self, state):
        return softmax(self.policy(state))

    def act(self, state, greedy=False):
        p = self.probabilities(state)
        if greedy:
            return int(np.argmax(p))
        return int(self.rng.choice(self.action_dim, p=p))

    def observe(self, s, a, r, s2, done=False):
        self.steps += 1
        self._record(s, int(a), r)
        return None

    def end_episode(self):
        if not self._states:
            return None
        G = discounted_returns(self._rewards, self.config.zeta)
        loss, grads = softmax_pg_grads(self.policy, np.array(self._states),
                                       np.array(self._actions), G)
        self.opt.step(self.policy.params, grads)
        self._reset_episode()
        self.last_loss = loss
        return loss


class AcAgent(Agent):
    """One-step actor-critic: the TD error ``r + zeta V(s') - V(s)`` is the
    advantage estimate for the softmax actor."""

    tag = "ac"

    def __init__(self, state_dim, action_dim, config=None, seed=None):
        super().__init__(state_dim, action_dim, config, seed)
        h = self.config.hidden
        self.actor = self._net([self.state_dim, *h, self.action_dim])
        self.critic = self._net([self.state_dim, *h, 1])
        self.actor_opt = self._opt(self.actor)
        self.critic_opt = self._opt(self.critic)
        self.last_actor_grads = None

    def networks(self):
        return {"actor": self.actor, "critic": self.critic}

    def act(self, state, greedy=False):
        p = softmax(self.actor(state))
        if greedy:
            return int(np.argmax(p))
        return int(self.rng.choice(self.action_dim, p=p))

    def advantage(self, s, r, s2, done):
        v = float(self.critic(s)[0])
        target = r + (0.0 if done else self.config.zeta * float(self.critic(s2)[0]))
        self.last_q = v
        return target - v, target

    def observe(self, s, a, r, s2, done=False):
        self.steps += 1
        adv, target = self.advantage(s, r, s2, done)
        s2d = np.atleast_2d(s)
        c_loss, c_grads = mse_grads(self.critic, s2d, np.array([target]))
        _, a_grads = softmax_pg_grads(self.actor, s2d, np.array([int(a)]), np.array([adv]))
        self.last_actor_grads = a_grads
        self.critic_opt.step(self.critic.params, c_grads)
        self.actor_opt.step(self.actor.params, a_grads)
        self.last_loss = c_loss
        return c_loss


# --------------------------------------------------------- continuous side

class _GaussianActorMixin:
    def _make_policy(self):
        h = self.config.hidden
        self.policy = self._net([self.state_dim, *h, 2 * self.action_dim], out_scale=0.1)
        self._last = None

    def mean_action(self, state):
        mean, _ = gaussian_head(self.policy(state))
        return np.tanh(mean)

    def act(self, state, greedy=False):
        mean, log_std = gaussian_head(self.policy(state))
        if greedy:
            u = mean
        else:
            u = mean + np.exp(log_std) * self.rng.standard_normal(mean.shape)
        a = np.tanh(u)
        self._last = (a, u)
        return a

    def _pre_tanh(self, a):
        if self._last is not None and np.array_equal(self._last[0], a):
            return self._last[1]
        return np.arctanh(np.clip(a, -1 + 1e-12, 1 - 1e-12))


class GaussianPgAgent(_EpisodicMixin, _GaussianActorMixin, Agent):
    discrete = False
    tag = "pg"

    def __init__(self, state_dim, action_dim, config=None, seed=None):
        super().__init__(state_dim, action_dim, config, seed)
        self._make_policy()
        self.opt = self._opt(self.policy)
        self._reset_episode()

    def networks(self):
        return {"policy": self.policy}

    def observe(self, s, a, r, s2, done=False):
        self.steps += 1
        self._record(s, self._pre_tanh(np.asarray(a, float)), r)
        return None

    def end_episode(self):
        if not self._states:
            return None
        G = discounted_returns(self._rewards, self.config.zeta)
        loss, grads = gaussian_pg_grads(self.policy, np.array(self._states),
                                        np.array(self._actions), G)
        self.opt.step(self.policy.params, grads)
        self._reset_episode()
        self.last_loss = loss
        return loss


class GaussianAcAgent(_GaussianActorMixin, Agent):
    discrete = False
    tag = "ac"

    def __init__(self, state_dim, action_dim, config=None, seed=None):
        super().__init__(state_dim, action_dim, config, seed)
        self._make_policy()
        self.critic = self._net([self.state_dim, *self.config.hidden, 1])
        self.actor_opt = self._opt(self.policy)
        self.critic_opt = self._opt(self.critic)

    def networks(self):
        return {"policy": self.policy, "critic": self.critic}

    def observe(self, s, a, r, s2, done=False):
        self.steps += 1
        u = self._pre_tanh(np.asarray(a, float))
        v = float(self.critic(s)[0])
        target = r + (0.0 if done else self.config.zeta * float(self.critic(s2)[0]))
        self.last_q = v
        s2d = np.atleast_2d(s)
        c_loss, c_grads = mse_grads(self.critic, s2d, np.array([target]))
        _, a_grads = gaussian_pg_grads(self.policy, s2d, np.atleast_2d(u), np.array([target - v]))
        self.critic_opt.step(self.critic.params, c_grads)
        self.actor_opt.step(self.policy.params, a_grads)
        self.last_loss = c_loss
        return c_loss


class DdpgAgent(Agent):
    discrete = False
    tag = "ddpg"

    def __init__(self, state_dim, action_dim, config=None, seed=None):
        super().__init__(state_dim, action_dim, config, seed)
        c = self.config
        S, A = self.state_dim, self.action_dim
        self.actor = self._net([S, *c.hidden, A], out_scale=0.1)
        self.critic = self._net([S + A, *c.hidden, 1])
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = self._opt(self.actor)
        self.critic_opt = self._opt(self.critic)
        self.buffer = ReplayBuffer(c.capacity, c.batch_size, self.rng)

    def networks(self):
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}

    @property
    def exploration(self):
        return self.config.noise_std

    def mean_action(self, state):
        return np.tanh(self.actor(state))

    def act(self, state, greedy=False):
        a = self.mean_action(state)
        if greedy:
            return a
        return np.clip(a + self.config.noise_std * self.rng.standard_normal(a.shape), -1.0, 1.0)

    def observe(self, s, a, r, s2, done=False):
        self.steps += 1
        self.buffer.add(s, a, r, s2, done)
        if len(self.buffer) < self.buffer.batch_size:
            return None
        return self.update(self.buffer.sample())

    def update(self, batch):
        c = self.config
        s, a, s2 = batch["state"], batch["action"], batch["next_state"]
        a2 = np.tanh(self.actor_target(s2))
        q_next = self.critic_target(np.concatenate([s2, a2], axis=-1))[:, 0]
        y = batch["reward"] + c.zeta * (1.0 - batch["done"]) * q_next
        loss, grads = mse_grads(self.critic, np.concatenate([s, a], axis=-1), y)
        self.critic_opt.step(self.critic.params, grads)
        _, a_grads = ddpg_actor_grads(self.actor, self.critic, s)
        self.actor_opt.step(self.actor.params, a_grads)
        self.actor_target.soft_update(self.actor, c.tau)
        self.critic_target.soft_update(self.critic, c.tau)
        self.last_loss = loss
        self.last_q = float(np.mean(y))
        return loss


class SacAgent(_GaussianActorMixin, Agent):
    """Soft actor-critic with a state-value net, its moving-average copy and
    two soft Q nets (the smaller of the two is used in the targets)."""

    discrete = False
    tag = "sac"

    def __init__(self, state_dim, action_dim, config=None, seed=None):
        super().__init__(state_dim, action_dim, config, seed)
        c = self.config
        S, A = self.state_dim, self.action_dim
        self._make_policy()
        self.q1 = self._net([S + A, *c.hidden, 1])
        self.q2 = self._net([S + A, *c.hidden, 1])
        self.value = self._net([S, *c.hidden, 1])
        self.value_target = self.value.copy()
        self.opts = {name: self._opt(net) for name, net in
                     (("policy", self.policy), ("q1", self.q1), ("q2", self.q2), ("value", self.value))}
        self.buffer = ReplayBuffer(c.capacity, c.batch_size, self.rng)

    def networks(self):
        return {"policy": self.policy, "q1": self.q1, "q2": self.q2,
                "value": self.value, "value_target": self.value_target}

    @property
    def exploration(self):
        return self.config.temperature

    def observe(self, s, a, r, s2, done=False):
        self.steps += 1
        self.buffer.add(s, a, r, s2, done)
        if len(self.buffer) < self.buffer.batch_size:
            return None
        return self.update(self.buffer.sample())

    def update(self, batch, noise=None):
        """One step on all nets; returns ``(value loss, q loss, policy loss)``."""
        c = self.config
        alpha = c.temperature
        s, a = batch["state"], batch["action"]
        if noise is None:
            noise = self.rng.standard_normal((len(s), self.action_dim))
        # targets from the current parameters
        q_y = sac_q_target(batch["reward"], batch["done"],
                           self.value_target(batch["next_state"])[:, 0], c.zeta)
        mean, log_std = gaussian_head(self.policy(s))
        u = mean + np.exp(log_std) * noise
        a_new = np.tanh(u)
        x_new = np.concatenate([s, a_new], axis=-1)
        q_new = np.minimum(self.q1(x_new)[:, 0], self.q2(x_new)[:, 0])
        v_y = sac_value_target(q_new, squash_log_prob(u, mean, log_std), alpha)

        x = np.concatenate([s, a], axis=-1)
        q_losses = []
        for name in ("q1", "q2"):
            net = getattr(self, name)
            loss, grads = mse_grads(net, x, q_y)
            self.opts[name].step(net.params, grads)
            q_losses.append(loss)
        v_loss, grads = mse_grads(self.value, s, v_y)
        self.opts["value"].step(self.value.params, grads)
        p_loss, grads = sac_policy_loss(self.policy, (self.q1, self.q2), s, noise, alpha)
        self.opts["policy"].step(self.policy.params, grads)
        self.value_target.soft_update(self.value, c.tau)
        self.last_loss = float(np.mean(q_losses))
        self.last_q = float(np.mean(q_new))
        return v_loss, self.last_loss, p_loss


DISCRETE_AGENTS = {"ddqn": DdqnAgent, "sarsa": SarsaAgent, "pg": PgAgent, "ac": AcAgent}
CONTINUOUS_AGENTS = {"pg": GaussianPgAgent, "ac": GaussianAcAgent, "ddpg": DdpgAgent,
                     "sac": SacAgent}


def make_agent(tag, state_dim, action_dim, discrete=True, config=None, seed=None):
    table = DISCRETE_AGENTS if discrete else CONTINUOUS_AGENTS
    kind = "discrete" if discrete else "continuous"
    try:
        cls = table[tag]
    except KeyError:
        raise ValueError(f"unknown {kind} agent {tag!r}; choose from {sorted(table)}") from None
    return cls(state_dim, action_dim, config, seed)
