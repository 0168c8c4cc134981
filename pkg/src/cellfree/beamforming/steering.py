"""Analog steering objective and a coordinate-ascent optimizer for it.

For cluster ``n`` the objective sums, over its APs ``m``,

* ``||delta_k^T K1[k, m] A_m||^2`` for the cluster's own UEs ``k``, and
* ``||delta_prev_k^T K0[k, m] A_m||^2`` for every UE ``k`` outside it,

where ``K1 = P_U1 S P_V1`` and ``K0 = P_U0 S P_V0`` are built from the SVD
of ``H[k, m]`` (see ``ChannelSet.projected_sigma``). Both blocks are
quadratic forms in a unit-modulus vector once the other block is fixed,
so each is improved by exact per-entry phase updates.
"""

import numpy as np


def _term(delta, K, A):
    return float(np.sum(np.abs(delta @ K @ A) ** 2))


def beamsteer_objective(n, channels, state):
    cl = state.clusters
    total = 0.0
    for m in cl.aps_in(n):
        A = state.steer[m]
        for k, l in enumerate(cl.ue_cluster):
            k1, k0 = channels.projected_sigma(k, m)
            if l == n:
                total += _term(state.combiner[k], k1, A)
            else:
                total += _term(state.prev_combiner[k], k0, A)
    return total


def maximize_unimodular(R, x, sweeps=1):
    """Raise ``x^H R x`` over unit-modulus ``x`` by per-entry phase updates.

    Entry ``q`` is set to the phase of ``sum_{p != q} R[q, p] x[p]``, which
    maximizes the form in that entry with the rest fixed, so the value
    never decreases.
    """
    x = x.copy()
    for _ in range(sweeps):
        for q in range(len(x)):
            z = R[q] @ x - R[q, q] * x[q]
            if abs(z) > 0:
                x[q] = z / abs(z)
    return x


def _steer_form(n, m, channels, state):
    cl = state.clusters
    a = state.steer[m].shape[0]
    R = np.zeros((a, a), dtype=complex)
    for k, l in enumerate(cl.ue_cluster):
        k1, k0 = channels.projected_sigma(k, m)
        x = (k1.T @ state.combiner[k]) if l == n else (k0.T @ state.prev_combiner[k])
        R += np.outer(x.conj(), x)
    return R


def _combiner_form(k, n, channels, state):
    cl = state.clusters
    u = state.combiner.shape[1]
    M = np.zeros((u, u), dtype=complex)
    for m in cl.aps_in(n):
        B = channels.projected_sigma(k, m)[0] @ state.steer[m]
        M += B @ B.conj().T
    return M


def optimize_steering(n, channels, state, max_rounds=50, rtol=1e-10):
    """Alternate steering and combiner updates for cluster ``n`` in place.

    Every column of ``A_m`` faces the same quadratic form, so all columns
    are updated to the same vector. Returns the final objective value,
    which is never below the starting value.
    """
    cl = state.clusters
    value = beamsteer_objective(n, channels, state)
    for _ in range(max_rounds):
        for m in cl.aps_in(n):
            R = _steer_form(n, m, channels, state)
            cols = state.steer[m]
            best = int(np.argmax(np.real(np.einsum("qz,qp,pz->z", cols.conj(), R, cols))))
            a = maximize_unimodular(R, cols[:, best], sweeps=2)
            state.steer[m] = np.repeat(a[:, None], state.steer[m].shape[1], axis=1)
        for k in cl.ues_in(n):
            M = _combiner_form(k, n, channels, state)
            y = maximize_unimodular(M, state.combiner[k].conj(), sweeps=2)
            state.combiner[k] = y.conj()
        new = beamsteer_objective(n, channels, state)
        if new - value <= rtol * max(abs(value), 1e-300):
            value = max(value, new)
            break
        value = new
    return value
