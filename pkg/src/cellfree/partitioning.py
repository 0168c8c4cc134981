"""AP/UE cluster configurations: validation, counting and enumeration.

A configuration splits the M APs and the K UEs into N labeled clusters,
each holding at least one AP and one UE. Labels follow the AP partition
in restricted-growth order (cluster 0 contains AP 0), and the UE blocks
are matched to those labels by a permutation, so the unrestricted count
is ``N! * S(M, N) * S(K, N)``.
"""

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

DEFAULT_CAP = 100_000


class ActionSpaceTooLarge(ValueError):
    """The enumerated configuration set exceeds the configured cap."""


@dataclass(frozen=True)
class ClusterConfig:
    ap_cluster: tuple
    ue_cluster: tuple
    n_clusters: int

    @property
    def ap_sizes(self):
        return tuple(self.ap_cluster.count(n) for n in range(self.n_clusters))

    @property
    def ue_sizes(self):
        return tuple(self.ue_cluster.count(n) for n in range(self.n_clusters))

    def aps_in(self, n):
        return [m for m, c in enumerate(self.ap_cluster) if c == n]

    def ues_in(self, n):
        return [k for k, c in enumerate(self.ue_cluster) if c == n]

    def validate(self, max_ues=None):
        N = self.n_clusters
        for name, labels in (("AP", self.ap_cluster), ("UE", self.ue_cluster)):
            bad = [c for c in labels if not 0 <= c < N]
            if bad:
                raise ValueError(f"{name} cluster ids {bad} outside [0, {N})")
        for n, (da, du) in enumerate(zip(self.ap_sizes, self.ue_sizes)):
            if da < 1 or du < 1:
                raise ValueError(f"cluster {n} has {da} APs and {du} UEs; need >= 1 of each")
            if max_ues is not None and du > max_ues:
                raise ValueError(f"cluster {n} has {du} UEs, more than L={max_ues}")
        return self


@lru_cache(maxsize=None)
def _stirling_rec(m, n):
    if m == n:
        return 1
    if n == 0 or n > m:
        return 0
    return n * _stirling_rec(m - 1, n) + _stirling_rec(m - 1, n - 1)


def _check_mn(m, n):
    if n < 1 or n > m:
        raise ValueError(f"Stirling number needs 1 <= N <= M, got M={m}, N={n}")


def stirling2(m, n):
    """Stirling number of the second kind by the triangle recurrence."""
    _check_mn(m, n)
    for mm in range(1, m):  # warm the cache bottom-up; avoids deep recursion
        _stirling_rec(mm, min(n, mm))
    return _stirling_rec(m, n)


def _pascal_row(n):
    row = [1]
    for _ in range(n):
        row = [1] + [a + b for a, b in zip(row, row[1:])] + [1]
    return row


def stirling2_explicit(m, n):
    """Stirling number from the alternating binomial sum, in exact integers."""
    _check_mn(m, n)
    binom = _pascal_row(n)
    total = sum((-1) ** i * binom[i] * (n - i) ** m for i in range(n + 1))
    q, r = divmod(total, math.factorial(n))
    if r:
        raise ArithmeticError("alternating sum not divisible by N!")
    return q


def config_count(m, k, n):
    """Number of labeled configurations without the RF-chain limit."""
    return math.factorial(n) * stirling2(m, n) * stirling2(k, n)


def config_count_paper(m, k, n):
    """``(N!/sqrt 2)^2 * S(M, N) * S(K, N)`` evaluated exactly (a real number)."""
    if not 1 <= n <= min(m, k):
        raise ValueError(f"need 1 <= N <= min(M, K), got M={m}, K={k}, N={n}")
    return float(Fraction(math.factorial(n) ** 2, 2) * stirling2(m, n) * stirling2(k, n))


def restricted_growth_strings(size, blocks):
    """Set partitions of ``range(size)`` into exactly ``blocks`` blocks.

    Yields label tuples in lexicographic order; element 0 is always in
    block 0 and every new block number is one more than the largest so far.
    """
    if blocks < 1 or blocks > size:
        return
    labels = [0] * size

    def rec(i, used):
        if size - i < blocks - used:
            return
        if i == size:
            if used == blocks:
                yield tuple(labels)
            return
        for c in range(min(used + 1, blocks)):
            labels[i] = c
            yield from rec(i + 1, max(used, c + 1))

    labels[0] = 0
    yield from rec(1, 1)


def iter_configs(m, k, n, max_ues=None):
    """Configurations in canonical order: AP partition, UE partition, matching."""
    perms = list(itertools.permutations(range(n)))
    ue_parts = [p for p in restricted_growth_strings(k, n)
                if max_ues is None or max(p.count(b) for b in range(n)) <= max_ues]
    for ap in restricted_growth_strings(m, n):
        for ue in ue_parts:
            for perm in perms:
                yield ClusterConfig(ap, tuple(perm[b] for b in ue), n)


def enumerate_configs(m, k, n, max_ues=None, cap=DEFAULT_CAP):
    if not 1 <= n <= min(m, k):
        raise ValueError(f"need 1 <= N <= min(M, K), got M={m}, K={k}, N={n}")
    out = []
    for cfg in iter_configs(m, k, n, max_ues):
        out.append(cfg)
        if len(out) > cap:
            raise ActionSpaceTooLarge(
                f"action space too large: more than {cap} configurations "
                f"for M={m}, K={k}, N={n}")
    if not out:
        raise ValueError(f"no configuration keeps every cluster at <= {max_ues} UEs")
    return out


class ConfigSpace:
    """The ordered clustering action set with integer ids."""

    def __init__(self, m, k, n, max_ues=None, cap=DEFAULT_CAP):
        self.m, self.k, self.n, self.max_ues = m, k, n, max_ues
        self.configs = tuple(enumerate_configs(m, k, n, max_ues, cap))
        self._index = {c: j for j, c in enumerate(self.configs)}

    @classmethod
    def for_network(cls, cfg, cap=DEFAULT_CAP):
        return _cached_space(cfg.n_aps, cfg.n_ues, cfg.n_clusters, cfg.rf_chains, cap)

    def __len__(self):
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)

    def config_from_index(self, j):
        if not isinstance(j, (int,)) and not hasattr(j, "__index__"):
            raise TypeError(f"configuration index must be an integer, got {j!r}")
        j = int(j)
        if not 0 <= j < len(self.configs):
            raise IndexError(f"configuration index {j} outside [0, {len(self.configs)})")
        return self.configs[j]

    __getitem__ = config_from_index

    def config_index(self, cfg):
        try:
            return self._index[cfg]
        except KeyError:
            raise ValueError(f"{cfg} is not in this configuration space") from None


@lru_cache(maxsize=32)
def _cached_space(m, k, n, max_ues, cap):
    return ConfigSpace(m, k, n, max_ues, cap)


def config_index(space, cfg):
    return space.config_index(cfg)


def config_from_index(space, j):
    return space.config_from_index(j)


def count_report(m, k, n, max_ues=None, cap=DEFAULT_CAP):
    """Enumerated count next to the closed forms, as printed by the CLI."""
    enumerated = len(enumerate_configs(m, k, n, max_ues, cap))
    closed = config_count(m, k, n)
    theta = config_count_paper(m, k, n)
    return {
        "enumerated": enumerated,
        "closed_form": closed,
        "theta": theta,
        "theta_matches": theta == enumerated,
        "closed_matches": closed == enumerated,
    }
