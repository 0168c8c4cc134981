import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellfree.beamforming import (BeamState, all_sinrs, beamsteer_objective, compute_effective,
                                  conventional_baseline, effective_channel, noise_factor, order_ues,
                                  ordering_metric, rate_rows, rates_from_sinr, run_pipeline,
                                  sinr_post_sic, sinr_pre_sic, solve_digital_beamforming, sum_rate)
from cellfree.beamforming.solver import DigitalProblem, solve_problem
from cellfree.beamforming.state import EffectiveChannels
from cellfree.beamforming.steering import optimize_steering
from cellfree.channel import ChannelSet, NetworkConfig, sample_channel, sample_geometry
from cellfree.partitioning import ClusterConfig


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def phases(rng, *shape):
    return np.exp(1j * rng.uniform(0, 2 * np.pi, shape))


NET = NetworkConfig(n_aps=2, n_ues=4, n_clusters=2, ap_grid=(2, 2), ue_grid=(2, 1))
CL = ClusterConfig((0, 1), (0, 1, 0, 1), 2)


def random_state(rng, net=NET, cl=CL):
    state = BeamState.initial(net, cl)
    for m in state.steer:
        state.steer[m] = phases(rng, *state.steer[m].shape)
        W = rng.standard_normal(state.digital[m].shape)
        state.digital[m] = W / np.maximum(np.linalg.norm(W, axis=0), 1.0)
    state.combiner = phases(rng, *state.combiner.shape)
    state.prev_combiner = phases(rng, *state.prev_combiner.shape)
    for n in range(cl.n_clusters):
        ues = cl.ues_in(n)
        state.order[n] = list(rng.permutation(ues))
    return state


def channels_for(net, seed):
    return sample_channel(sample_geometry(net, np.random.default_rng(seed)), net)


# ---------------------------------------------------------------- effective channel

def test_effective_scalar():
    assert effective_channel([1], [[0.3 - 0.2j]], [[1]]) == pytest.approx(0.3 - 0.2j)


def test_effective_zero_channel():
    assert np.all(effective_channel(np.ones(2), np.zeros((2, 4)), np.ones((4, 3))) == 0)


def test_effective_triple_product_entrywise():
    rng = np.random.default_rng(0)
    d, H, A = phases(rng, 2), crandn(rng, 2, 4), phases(rng, 4, 3)
    row = effective_channel(d, H, A)
    for z in range(3):
        expect = sum(d[q] * H[q, p] * A[p, z] for q in range(2) for p in range(4))
        assert np.isclose(row[z], expect)
    with pytest.raises(ValueError):
        effective_channel(d, H, phases(rng, 3, 3))


def test_compute_effective_rows_and_noise():
    rng = np.random.default_rng(1)
    ch = channels_for(NET, 1)
    state = random_state(rng)
    eff = compute_effective(ch, state, NET)
    for k in range(4):
        for m in range(2):
            np.testing.assert_allclose(
                eff.row(k, m), effective_channel(state.combiner[k], ch[k, m], state.steer[m]))
            assert eff.row(k, m).shape == (CL.ue_sizes[CL.ap_cluster[m]],)
    sigma2 = NET.noise_power_w
    expect = sigma2 * (2 / (2 * NET.tx_power_w)) ** 2 * NET.n_ue_antennas
    np.testing.assert_allclose(eff.noise, expect)
    assert np.isclose(noise_factor(NET, 2), sigma2 * (2 / (2 * NET.tx_power_w)) ** 2)


# ---------------------------------------------------------------- steering objective

def test_objective_single_cluster_is_in_cluster_only():
    net = NetworkConfig(n_aps=2, n_ues=2, n_clusters=1)
    cl = ClusterConfig((0, 0), (0, 0), 1)
    ch = channels_for(net, 2)
    state = random_state(np.random.default_rng(2), net, cl)
    expect = sum(np.sum(np.abs(state.combiner[k] @ ch.projected_sigma(k, m)[0] @ state.steer[m]) ** 2)
                 for m in range(2) for k in range(2))
    assert np.isclose(beamsteer_objective(0, ch, state), expect)


def test_objective_zero_channels():
    ch = ChannelSet(matrices=np.zeros((4, 2, 2, 4), dtype=complex))
    state = random_state(np.random.default_rng(3))
    assert beamsteer_objective(0, ch, state) == 0.0


def test_objective_against_explicit_svd():
    rng = np.random.default_rng(4)
    net = NetworkConfig(n_aps=1, n_ues=1, n_clusters=1, ap_grid=(2, 1), ue_grid=(2, 1))
    cl = ClusterConfig((0,), (0,), 1)
    H = np.outer(crandn(rng, 2), crandn(rng, 2))  # rank one so both blocks are populated
    ch = ChannelSet(matrices=H[None, None])
    state = random_state(rng, net, cl)
    U, s, Vh = np.linalg.svd(H)
    V = Vh.conj().T
    S = np.diag(s)
    K1 = U[:, :1] @ U[:, :1].conj().T @ S @ V[:, :1] @ V[:, :1].conj().T
    expect = np.sum(np.abs(state.combiner[0] @ K1 @ state.steer[0]) ** 2)
    assert np.isclose(beamsteer_objective(0, ch, state), expect)


def test_objective_uses_previous_combiners_outside():
    ch = channels_for(NET, 5)
    state = random_state(np.random.default_rng(5))
    before = beamsteer_objective(0, ch, state)
    state.combiner[1] = -state.combiner[1]
    assert beamsteer_objective(0, ch, state) == before


def test_steering_optimizer_is_monotone():
    ch = channels_for(NET, 6)
    state = BeamState.initial(NET, CL)
    start = beamsteer_objective(0, ch, state)
    value = optimize_steering(0, ch, state)
    assert value >= start
    assert np.isclose(value, beamsteer_objective(0, ch, state))
    state.validate()


# ---------------------------------------------------------------- ordering and SINR

def rows_eff(rows, n_ue=2, n_ap=1, noise=1.0):
    return EffectiveChannels({(k, m): np.asarray(rows[k][m], complex)
                              for k in range(n_ue) for m in range(n_ap)},
                             np.full(n_ue, noise))


def test_order_ascending():
    cl = ClusterConfig((0,), (0, 0), 1)
    eff = rows_eff([[[np.sqrt(2.0), 0]], [[np.sqrt(0.5), 0]]])
    assert order_ues(0, cl, eff) == [1, 0]


def test_order_ties_by_index():
    cl = ClusterConfig((0,), (0, 0), 1)
    eff = rows_eff([[[1, 0]], [[0, 1]]])
    assert order_ues(0, cl, eff) == [0, 1]


def test_order_matches_recomputed_metric():
    rng = np.random.default_rng(7)
    net = NetworkConfig(n_aps=2, n_ues=4, n_clusters=2, ap_grid=(2, 2), ue_grid=(2, 1))
    cl = ClusterConfig((0, 1), (0, 0, 0, 1), 2)
    state = random_state(rng, net, cl)
    eff = compute_effective(channels_for(net, 7), state, net)
    metric = {i: np.sum(np.abs(eff.row(i, 0)) ** 2) / np.sum(np.abs(eff.row(i, 1)) ** 2)
              for i in (0, 1, 2)}
    assert ordering_metric(0, cl, eff) == pytest.approx(metric)
    assert order_ues(0, cl, eff) == sorted(metric, key=metric.get)


def direct_sinr(i, eff, state, post):
    cl = state.clusters
    n = cl.ue_cluster[i]
    ues = cl.ues_in(n)
    col = lambda m, k: state.digital[m][:, ues.index(k)]
    own = [m for m in range(len(cl.ap_cluster)) if cl.ap_cluster[m] == n]
    desired = sum(abs(eff.row(i, m) @ col(m, i)) ** 2 for m in own)
    if post:
        order = state.order[n]
        interferers = order[order.index(i) + 1:]
    else:
        interferers = [k for k in ues if k != i]
    iui = sum(abs(eff.row(i, m) @ col(m, k)) ** 2 for m in own for k in interferers)
    isni = 0.0
    for m, l in enumerate(cl.ap_cluster):
        if l == n:
            continue
        weight = (cl.ue_sizes[n] / cl.ue_sizes[l]) ** 2
        isni += weight * sum(abs(eff.row(i, m) @ state.digital[m][:, c]) ** 2
                             for c in range(cl.ue_sizes[l]))
    return desired / (iui + isni + eff.noise[i])


def test_sinr_single_ue():
    net = NetworkConfig(n_aps=1, n_ues=1, n_clusters=1)
    cl = ClusterConfig((0,), (0,), 1)
    state = BeamState.initial(net, cl)
    state.order[0] = [0]
    eff = EffectiveChannels({(0, 0): np.array([0.5 + 0.5j])}, np.array([0.25]))
    assert np.isclose(sinr_post_sic(0, eff, state), 0.5 / 0.25)
    assert np.isclose(sinr_pre_sic(0, eff, state), 0.5 / 0.25)


def test_sinr_zero_desired_power():
    cl = ClusterConfig((0,), (0, 0), 1)
    state = BeamState.initial(NetworkConfig(n_aps=1, n_ues=2, n_clusters=1), cl)
    state.digital[0] = np.array([[0.0, 1.0], [0.0, 0.0]])
    state.order[0] = [0, 1]
    eff = rows_eff([[[1, 1]], [[1, -1]]])
    assert sinr_post_sic(0, eff, state) == 0.0


def test_sinr_matches_direct_formula():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        state = random_state(rng)
        eff = compute_effective(channels_for(NET, seed), state, NET)
        for i in range(4):
            assert np.isclose(sinr_post_sic(i, eff, state), direct_sinr(i, eff, state, True))
            assert np.isclose(sinr_pre_sic(i, eff, state), direct_sinr(i, eff, state, False))
            assert sinr_post_sic(i, eff, state) >= sinr_pre_sic(i, eff, state)


def test_single_ue_cluster_pre_equals_post():
    net = NetworkConfig(n_aps=2, n_ues=2, n_clusters=2)
    cl = ClusterConfig((0, 1), (0, 1), 2)
    state = random_state(np.random.default_rng(8), net, cl)
    eff = compute_effective(channels_for(net, 8), state, net)
    for i in range(2):
        assert sinr_pre_sic(i, eff, state) == sinr_post_sic(i, eff, state)


def test_rates():
    assert rates_from_sinr([0.0, 0.0]).sum() == 0.0
    assert rates_from_sinr([1.0])[0] == 1.0
    state = random_state(np.random.default_rng(9))
    eff = compute_effective(channels_for(NET, 9), state, NET)
    total, rates, gamma = sum_rate(eff, state)
    np.testing.assert_allclose(gamma, all_sinrs(eff, state))
    assert np.isclose(total, sum(np.log2(1 + g) for g in gamma))


@settings(max_examples=30, deadline=None)
@given(g=st.floats(0, 1e6), dg=st.floats(0, 1e6))
def test_rate_monotone(g, dg):
    assert rates_from_sinr(g + dg) >= rates_from_sinr(g)


# ---------------------------------------------------------------- digital solver

def test_single_ue_aligns_with_channel():
    h = np.array([0.6, -0.3])
    grams = np.outer(h, h)[None, None]
    X, val, _ = solve_problem(DigitalProblem(grams, [0.1]))
    w = X[0, 0]
    assert np.isclose(np.linalg.norm(w), 1.0)
    assert np.isclose(abs(w @ h), np.linalg.norm(h))
    assert np.isclose(val, np.log2(1 + (h @ h) / 0.1))


def test_identical_ues_beat_equal_split():
    rng = np.random.default_rng(10)
    h = rng.standard_normal(2)
    g = np.outer(h, h)
    prob = DigitalProblem(np.array([[g], [g]]), [0.05, 0.05], 0.0)
    X, val, _ = solve_problem(prob)
    assert prob.violation(X) <= 1e-6
    assert np.all(np.linalg.norm(X, axis=-1) <= 1 + 1e-9)
    uniform = np.full(prob.shape, 0.5)
    uniform = prob.restore(uniform)
    assert val >= prob.objective(uniform) - 1e-9


def random_problem(rng, D=2, J=1):
    grams = np.zeros((D, J, D, D))
    for p in range(D):
        for j in range(J):
            h = rng.standard_normal(D)
            grams[p, j] = np.outer(h, h) + 0.1 * np.eye(D) * rng.random()
    return DigitalProblem(grams, rng.uniform(0.05, 0.5, D), 0.0)


def random_feasible(prob, rng):
    return prob.restore(prob.random_points(rng, 1)[0])


@pytest.mark.parametrize("seed", range(6))
def test_solver_feasible_stationary_and_beats_feasible_points(seed):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng, D=2 + seed % 2, J=1 + seed % 2)
    X, val, _ = solve_problem(prob, seed=seed)
    assert prob.violation(X) <= 1e-6
    assert np.all(np.linalg.norm(X, axis=-1) <= 1 + 1e-9)
    assert prob.kkt_residual(X) <= 1e-6
    start = prob.restore(prob.initial_points()[0])
    assert val >= prob.objective(start) - 1e-9
    for _ in range(20):
        a, b = random_feasible(prob, rng), random_feasible(prob, rng)
        assert val >= max(prob.objective(a), prob.objective(b)) - 1e-9


def test_solver_retries_at_zero_margin():
    ch = channels_for(NET, 11)
    state = BeamState.initial(NET, CL)
    eff = compute_effective(ch, state, NET)
    state.order[0] = order_ues(0, CL, eff)
    res = solve_digital_beamforming(0, eff, state, eps=1e6)
    assert res.eps_used == 0.0
    assert res.max_violation <= 1e-6
    with pytest.raises(ValueError):
        solve_digital_beamforming(0, eff, state, order=[0, 1])


# ---------------------------------------------------------------- pipelines

def test_pipeline_deterministic_and_valid():
    ch = channels_for(NET, 12)
    a = conventional_baseline(NET, CL, ch)
    b = conventional_baseline(NET, CL, ch)
    assert a.sum_rate == b.sum_rate
    np.testing.assert_array_equal(a.sinr, b.sinr)
    a.state.validate()
    np.testing.assert_allclose(a.state.steer[0], 1.0)
    assert all(v <= 1e-6 for v in a.kkt_residual.values())


def test_hybrid_steering_gain_nonnegative():
    net = NetworkConfig(n_aps=2, n_ues=2, n_clusters=2, ap_grid=(2, 1), ue_grid=(1, 1))
    cl = ClusterConfig((0, 1), (1, 0), 2)
    for seed in range(3):
        ch = channels_for(net, seed)
        h = run_pipeline(net, cl, ch, "hybrid")
        c = run_pipeline(net, cl, ch, "conventional")
        for n in range(2):
            assert h.steer_objective[n] >= c.steer_objective[n]


def test_pipeline_rejects_unknown_kind():
    with pytest.raises(ValueError):
        run_pipeline(NET, CL, channels_for(NET, 0), "digital")


def test_rate_rows():
    res = conventional_baseline(NET, CL, channels_for(NET, 13))
    rows = rate_rows(1, 0, 5, res, "conventional")
    assert len(rows) == 4
    assert rows[2]["rate"] == pytest.approx(np.log2(1 + rows[2]["sinr"]))
    assert all(r["sum_rate"] == res.sum_rate for r in rows)


def test_state_validate_rejects():
    state = BeamState.initial(NET, CL)
    bad = state.copy()
    bad.steer[0] = bad.steer[0] * 2
    with pytest.raises(ValueError):
        bad.validate()
    bad = state.copy()
    bad.digital[0] = np.eye(2) * 1.5
    with pytest.raises(ValueError):
        bad.validate()
