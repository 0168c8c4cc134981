"""Uniform experience replay."""

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    state: np.ndarray
    action: object
    reward: float
    next_state: np.ndarray
    done: bool = False
    next_action: object = None


class ReplayBuffer:
    """Ring buffer of transitions with uniform minibatch sampling."""

    def __init__(self, capacity=100_000, batch_size=64, rng=None):
        if capacity < 1 or batch_size < 1:
            raise ValueError("capacity and batch_size must be positive")
        self.capacity = int(capacity)
        self.batch_size = int(batch_size)
        self.rng = np.random.default_rng(rng)
        self._store = None
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def _allocate(self, state, action):
        action = np.asarray(action, dtype=float)
        cap = self.capacity
        self._store = {
            "state": np.zeros((cap,) + np.shape(state)),
            "action": np.zeros((cap,) + action.shape),
            "reward": np.zeros(cap),
            "next_state": np.zeros((cap,) + np.shape(state)),
            "done": np.zeros(cap, dtype=bool),
        }

    def add(self, state, action, reward, next_state, done=False):
        if self._store is None:
            self._allocate(state, action)
        i = self._next
        s = self._store
        s["state"][i] = state
        s["action"][i] = action
        s["reward"][i] = reward
        s["next_state"][i] = next_state
        s["done"][i] = done
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_indices(self, n=None):
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.rng.integers(0, self._size, size=n or self.batch_size)

    def sample(self, n=None):
        idx = self.sample_indices(n)
        return {k: v[idx] for k, v in self._store.items()}
