"""UE ordering, SINR before and after SIC, and sum rates."""

import numpy as np


def ordering_metric(n, clusters, eff):
    """Per-UE ordering metric of cluster ``n`` as ``{ue: value}``.

    In-cluster effective power divided by the power the UE receives through
    the other clusters' APs. With a single cluster, or when that cross power
    is exactly zero, the divisor is 1.
    """
    own_aps = clusters.aps_in(n)
    other_aps = [m for m in range(len(clusters.ap_cluster)) if clusters.ap_cluster[m] != n]
    out = {}
    for i in clusters.ues_in(n):
        num = sum(np.sum(np.abs(eff.row(i, m)) ** 2) for m in own_aps)
        den = sum(np.sum(np.abs(eff.row(i, m)) ** 2) for m in other_aps)
        out[i] = num / den if den > 0 else num
    return out


def order_ues(n, clusters, eff):
    """Cluster ``n``'s UEs in ascending metric order; ties keep index order."""
    metric = ordering_metric(n, clusters, eff)
    return sorted(metric, key=lambda i: (metric[i], i))


def power_matrix(i, m, eff, state):
    """``|H_im w_km|^2`` for every column ``k`` of AP ``m``'s digital matrix."""
    return np.abs(eff.row(i, m) @ state.digital[m]) ** 2


def isni(i, eff, state):
    """Inter-cluster interference at UE ``i`` with the squared size weights."""
    cl = state.clusters
    n = cl.ue_cluster[i]
    sizes = cl.ue_sizes
    total = 0.0
    for m, l in enumerate(cl.ap_cluster):
        if l != n:
            total += (sizes[n] / sizes[l]) ** 2 * np.sum(power_matrix(i, m, eff, state))
    return total


def _cluster_power(n, eff, state):
    """Matrix ``P[i, k]`` of received powers inside cluster ``n``.

    Rows and columns follow the UEs of the cluster in ascending index.
    """
    cl = state.clusters
    ues = cl.ues_in(n)
    P = np.zeros((len(ues), len(ues)))
    for m in cl.aps_in(n):
        for r, i in enumerate(ues):
            P[r] += power_matrix(i, m, eff, state)
    return ues, P


def _sinr(i, eff, state, interferers):
    cl = state.clusters
    n = cl.ue_cluster[i]
    ues, P = _cluster_power(n, eff, state)
    r = ues.index(i)
    iui = sum(P[r, ues.index(k)] for k in interferers)
    return P[r, r] / (iui + isni(i, eff, state) + eff.noise[i])


def sinr_post_sic(i, eff, state, order=None):
    """SINR of UE ``i`` after cancelling the UEs ordered before it.

    Intra-cluster interference comes only from UEs placed after ``i`` in
    the ascending order.
    """
    n = state.clusters.ue_cluster[i]
    order = state.order[n] if order is None else order
    pos = order.index(i)
    return _sinr(i, eff, state, order[pos + 1:])


def sinr_pre_sic(i, eff, state):
    """SINR of UE ``i`` with every other in-cluster UE as interference."""
    cl = state.clusters
    n = cl.ue_cluster[i]
    return _sinr(i, eff, state, [k for k in cl.ues_in(n) if k != i])


def all_sinrs(eff, state, post_sic=True):
    K = len(state.clusters.ue_cluster)
    if post_sic:
        return np.array([sinr_post_sic(i, eff, state) for i in range(K)])
    return np.array([sinr_pre_sic(i, eff, state) for i in range(K)])


def rates_from_sinr(gamma):
    return np.log2(1.0 + np.asarray(gamma, dtype=float))


def sum_rate(eff, state, post_sic=True):
    """Total rate in bps/Hz, the per-UE rates and the per-UE SINRs."""
    gamma = all_sinrs(eff, state, post_sic)
    r = rates_from_sinr(gamma)
    return float(np.sum(r)), r, gamma
