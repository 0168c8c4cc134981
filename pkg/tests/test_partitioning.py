import itertools
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cellfree.partitioning import (ActionSpaceTooLarge, ClusterConfig, ConfigSpace, config_count,
                                   config_count_paper, count_report, enumerate_configs, stirling2,
                                   stirling2_explicit)


def surjection_pairs(m, k, n):
    """Brute force: labeled (AP map, UE map) pairs onto all n labels, modulo relabeling."""
    onto = lambda size: [c for c in itertools.product(range(n), repeat=size) if len(set(c)) == n]
    return len(onto(m)) * len(onto(k)) // math.factorial(n)


def test_stirling_examples():
    assert all(stirling2(m, 1) == 1 for m in range(1, 10))
    assert stirling2(3, 2) == 3
    assert stirling2(4, 2) == 7


def test_stirling_explicit_matches_recurrence():
    for m in range(1, 13):
        for n in range(1, m + 1):
            assert stirling2_explicit(m, n) == stirling2(m, n)


@pytest.mark.parametrize("m,n", [(3, 0), (2, 3)])
def test_stirling_rejects(m, n):
    with pytest.raises(ValueError):
        stirling2(m, n)
    with pytest.raises(ValueError):
        stirling2_explicit(m, n)


def test_theta_examples():
    assert config_count_paper(4, 3, 2) == 42
    assert config_count_paper(2, 2, 2) == 2
    assert config_count_paper(1, 1, 1) == 0.5
    with pytest.raises(ValueError):
        config_count_paper(2, 1, 2)


def test_enumeration_examples():
    assert len(enumerate_configs(2, 2, 2, max_ues=1)) == 2
    only = enumerate_configs(1, 1, 1)
    assert only == [ClusterConfig((0,), (0,), 1)]
    assert len(enumerate_configs(3, 2, 2, max_ues=1)) == 6


def test_counts_against_closed_form_and_brute_force():
    for m in range(1, 7):
        for k in range(1, 7):
            for n in range(1, min(m, k, 3) + 1):
                configs = enumerate_configs(m, k, n)
                assert len(configs) == config_count(m, k, n)
                assert len(set(configs)) == len(configs)
                for c in configs:
                    c.validate()
                if m <= 4 and k <= 4:
                    assert len(configs) == surjection_pairs(m, k, n)


def test_max_ues_filter():
    configs = enumerate_configs(4, 4, 2, max_ues=2)
    assert all(max(c.ue_sizes) <= 2 for c in configs)
    assert len(configs) == math.factorial(2) * stirling2(4, 2) * 3
    with pytest.raises(ValueError):
        enumerate_configs(2, 4, 2, max_ues=1)


def test_cap():
    with pytest.raises(ActionSpaceTooLarge, match="action space too large"):
        enumerate_configs(6, 6, 3, cap=100)


def test_index_round_trip():
    space = ConfigSpace(3, 2, 2)
    for j, c in enumerate(space):
        assert space.config_index(c) == j
        assert space.config_from_index(space.config_index(c)) == c
    assert space[0] == space.configs[0]
    assert space[0].ap_cluster[0] == 0
    with pytest.raises(IndexError):
        space[len(space)]
    with pytest.raises(IndexError):
        space[-1]
    with pytest.raises(ValueError):
        space.config_index(ClusterConfig((0, 0, 0), (0, 0), 1))


def test_order_is_stable():
    assert ConfigSpace(4, 3, 2).configs == ConfigSpace(4, 3, 2).configs


def test_validate():
    ClusterConfig((0, 1), (1, 0), 2).validate(max_ues=1)
    with pytest.raises(ValueError):
        ClusterConfig((0, 0), (0, 1), 2).validate()
    with pytest.raises(ValueError):
        ClusterConfig((0, 2), (0, 1), 2).validate()
    with pytest.raises(ValueError):
        ClusterConfig((0, 1), (0, 0, 1), 2).validate(max_ues=1)


def test_count_report_flags():
    r = count_report(4, 3, 2)
    assert (r["enumerated"], r["closed_form"], r["theta"]) == (42, 42, 42)
    assert r["theta_matches"]
    r = count_report(5, 5, 3)
    assert r["closed_matches"] and not r["theta_matches"]


@given(m=st.integers(1, 5), k=st.integers(1, 5), n=st.integers(1, 3))
def test_sizes_sum(m, k, n):
    if n > min(m, k):
        return
    for c in enumerate_configs(m, k, n):
        assert sum(c.ap_sizes) == m and sum(c.ue_sizes) == k
        assert min(c.ap_sizes) >= 1 and min(c.ue_sizes) >= 1
