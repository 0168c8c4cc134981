"""Beamforming variables of every cluster and the effective channels they induce."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class BeamState:
    """Analog steering, UE combiners and digital weights for one configuration.

    ``steer[m]`` is ``a x D_U`` (D_U of the cluster that AP ``m`` serves),
    ``combiner[k]`` is the length-``u`` combiner of UE ``k`` and
    ``digital[m]`` is the real ``D_U x D_U`` matrix whose column ``c`` feeds
    the ``c``-th UE of the cluster (UEs listed in ascending index).
    ``prev_combiner`` holds last slot's combiners, used for the
    out-of-cluster term of the steering objective.
    """

    clusters: object
    steer: dict
    combiner: np.ndarray
    digital: dict
    prev_combiner: np.ndarray
    order: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, net, clusters):
        """All-ones analog phases and identity digital weights."""
        a, u = net.n_ap_antennas, net.n_ue_antennas
        sizes = clusters.ue_sizes
        steer, digital = {}, {}
        for m, n in enumerate(clusters.ap_cluster):
            steer[m] = np.ones((a, sizes[n]), dtype=complex)
            digital[m] = np.eye(sizes[n])
        ones = np.ones((net.n_ues, u), dtype=complex)
        return cls(clusters, steer, ones, digital, ones.copy())

    def copy(self):
        return BeamState(
            self.clusters,
            {m: s.copy() for m, s in self.steer.items()},
            self.combiner.copy(),
            {m: w.copy() for m, w in self.digital.items()},
            self.prev_combiner.copy(),
            {n: list(o) for n, o in self.order.items()},
        )

    def position(self, k):
        """Column of UE ``k`` inside its cluster's digital matrices."""
        return self.clusters.ues_in(self.clusters.ue_cluster[k]).index(k)

    def validate(self, tol=1e-9):
        for m, s in self.steer.items():
            if not np.allclose(np.abs(s), 1.0, atol=tol):
                raise ValueError(f"steering matrix of AP {m} is not unit-modulus")
        if not np.allclose(np.abs(self.combiner), 1.0, atol=tol):
            raise ValueError("UE combiners are not unit-modulus")
        for m, w in self.digital.items():
            if np.iscomplexobj(w):
                raise ValueError(f"digital matrix of AP {m} must be real")
            norms = np.linalg.norm(w, axis=0)
            if np.any(norms > 1.0 + tol):
                raise ValueError(
                    f"digital matrix of AP {m} has a column of norm {norms.max():.6g} > 1")
        return self


def effective_channel(delta, H, A):
    """``delta^T H A`` as a 1-D array of length ``A.shape[1]``."""
    delta = np.asarray(delta)
    H = np.asarray(H)
    A = np.asarray(A)
    if delta.ndim != 1 or H.ndim != 2 or A.ndim != 2:
        raise ValueError("expected a combiner vector, a channel matrix and a steering matrix")
    if delta.shape[0] != H.shape[0] or H.shape[1] != A.shape[0]:
        raise ValueError(
            f"shape mismatch: delta {delta.shape}, H {H.shape}, A {A.shape}")
    return delta @ H @ A


def noise_factor(net, cluster_ues):
    """``(sigma * D_U / (2 P))^2`` with ``sigma`` the noise standard deviation."""
    sigma = np.sqrt(net.noise_power_w)
    return (sigma * cluster_ues / (2.0 * net.tx_power_w)) ** 2


@dataclass
class EffectiveChannels:
    """``rows[(k, m)]`` is UE ``k``'s effective row through AP ``m``.

    Rows exist for every UE-AP pair; the row length is the UE count of the
    cluster that AP ``m`` serves. ``noise[k]`` is the full noise term
    ``sigma_tilde_k * sum_q |delta_kq|^2``.
    """

    rows: dict
    noise: np.ndarray

    def row(self, k, m):
        return self.rows[(k, m)]


def compute_effective(channels, state, net):
    cl = state.clusters
    rows = {}
    for k in range(channels.n_ues):
        dk = state.combiner[k]
        for m in range(channels.n_aps):
            rows[(k, m)] = dk @ channels.matrices[k, m] @ state.steer[m]
    sizes = cl.ue_sizes
    noise = np.array([
        noise_factor(net, sizes[cl.ue_cluster[k]]) * np.sum(np.abs(state.combiner[k]) ** 2)
        for k in range(channels.n_ues)])
    return EffectiveChannels(rows, noise)
