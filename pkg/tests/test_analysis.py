"""Certificate tests: objective identities, finite-difference gradient
oracle, region membership, the secant-inequality family, gradient bounds,
mean relations, descent, perturbation and deviation bounds, criticality
classification and rate estimation."""

import math

import numpy as np
import pytest

from stcon import manifold
from stcon.analysis import (
    RegionParams,
    check_descent,
    check_euclidean_rsi,
    check_grad_bounds,
    check_key_relation,
    check_mean_iam,
    check_polar_perturbation,
    check_rsi,
    check_step_mean_drift,
    check_tv_bound,
    classify_critical,
    estimate_rate,
    fd_gradient_check,
    h_value,
    phi_value,
    region_membership,
)
from stcon.consensus import NetworkState, RunConfig, run_drcs
from stcon.manifold import DegenerateMeanError, random_stiefel
from stcon.network import (
    GraphSpec,
    MixingMatrix,
    complete_matrix,
    matrix_power,
    ring_matrix,
    spectral_profile,
)
from stcon.sampling import perturbed_consensus, random_state, sample_in_region


def consensus_state(d, r, n, seed=0):
    return NetworkState.consensus(random_stiefel(d, r, seed), n)


# --- objective values ---


def test_phi_zero_at_consensus():
    assert phi_value(consensus_state(4, 2, 6), ring_matrix(6)) == 0.0


def test_phi_two_agents_hand_value():
    # two off-diagonal terms of weight 1/2 each: (1/4)(2 * 1/2 * c) = c/4
    x1 = random_stiefel(4, 2, 0)
    x2 = random_stiefel(4, 2, 1)
    s = NetworkState(np.stack([x1, x2]))
    w = MixingMatrix(np.full((2, 2), 0.5))
    c = float(np.sum((x1 - x2) ** 2))
    assert phi_value(s, w) == pytest.approx(c / 4.0, rel=1e-13)


def test_phi_plus_h_identity():
    rng = np.random.default_rng(0)
    w = ring_matrix(6)
    for t in (1, 3):
        for _ in range(1000):
            s = random_state(6, 4, 2, rng)
            total = phi_value(s, w, t) + h_value(s, w, t)
            assert abs(total - 6 * 2 / 2.0) <= 1e-10


# --- finite-difference gradient oracle ---


def test_fd_gradient_random_states():
    rng = np.random.default_rng(1)
    w = ring_matrix(6)
    s = random_state(6, 5, 2, rng)
    assert fd_gradient_check(s, w, t=1, rng=2) <= 1e-5
    assert fd_gradient_check(s, w, t=10, rng=3) <= 1e-5


def test_fd_gradient_consensus_state():
    s = consensus_state(5, 2, 6)
    assert fd_gradient_check(s, ring_matrix(6), t=1, rng=4) <= 1e-10


# --- region membership ---


def test_membership_consensus_all_true():
    flags = region_membership(consensus_state(5, 2, 8), ring_matrix(8), 1)
    assert (flags.n1, flags.n2, flags.nr, flags.nl) == (True, True, True, True)


def test_membership_blockwise_boundary():
    # one block pushed until it sits past delta2 + 0.01 from the induced mean
    # (the mean shifts toward the outlier, so the raw step must overshoot)
    rng = np.random.default_rng(5)
    n, d, r = 8, 5, 2
    params = RegionParams.defaults(r, n)
    y = random_stiefel(d, r, rng)
    blocks = np.broadcast_to(y, (n, d, r)).copy()
    xi = manifold.tangent_project(y, rng.standard_normal((d, r)))
    xi /= np.linalg.norm(xi)
    for scale in np.arange(params.delta2, 1.0, 0.01):
        blocks[0] = manifold.polar_retract(y, scale * xi)
        worst = manifold.dist_inf(blocks, manifold.iam(blocks))
        if worst >= params.delta2 + 0.01:
            break
    assert worst >= params.delta2 + 0.01
    flags = region_membership(NetworkState(blocks), ring_matrix(n), 1, params)
    assert not flags.n2
    assert not flags.nr


def test_membership_small_perturbation_inside_nr():
    s = NetworkState(perturbed_consensus(30, 5, 2, scale=1e-3, rng=6))
    flags = region_membership(s, ring_matrix(30), 1)
    assert flags.nr


def test_region_params_validation():
    with pytest.raises(ValueError):
        region_membership(
            consensus_state(5, 2, 8), ring_matrix(8), 1,
            RegionParams(delta1=0.2, delta2=1 / 6, delta3=0.1),
        )
    assert RegionParams.defaults(2, 30).violations(2, 30) == []


# --- restricted secant inequality family ---


def test_rsi_consensus_state():
    rep = check_rsi(consensus_state(5, 2, 8), ring_matrix(8), 1)
    assert abs(rep.lhs) <= 1e-30  # identically zero up to roundoff
    assert rep.phi == 0.0
    assert rep.pq_sum <= 1e-30
    assert rep.region == "NR"
    assert rep.all_passed()


def test_rsi_decomposition_identity_arbitrary_states():
    rng = np.random.default_rng(7)
    w = ring_matrix(6)
    for t in (1, 4):
        for _ in range(200):
            s = random_state(6, 4, 2, rng)
            try:
                rep = check_rsi(s, w, t)
            except DegenerateMeanError:
                continue
            assert rep.identity_residual <= 1e-10
            assert rep.pq_sum >= -1e-12


def test_rsi_in_region_sampled():
    w = ring_matrix(8)
    t = 1
    for region in ("NR", "Nl"):
        for s in sample_in_region(w, t, 5, 2, region, 100, rng=8):
            rep = check_rsi(s, w, t)
            assert rep.region != ""
            assert rep.all_passed(), {
                k: (v.status, v.slack) for k, v in rep.checks.items()
            }
            assert rep.Phi > 1.0


def test_rsi_outside_region_skips():
    rng = np.random.default_rng(9)
    while True:
        s = random_state(8, 5, 2, rng)
        try:
            rep = check_rsi(s, ring_matrix(8), 1)
        except DegenerateMeanError:
            continue
        if rep.region == "":
            break
    assert rep.checks["RSI-1"].skipped
    assert "neighbourhood" in rep.checks["RSI-1"].reason
    # the global quadratic-growth inequality still applies
    assert rep.checks["QG"].status == "pass"


# --- Euclidean secant inequality ---


def test_euclidean_rsi_consensus_directions():
    x = np.broadcast_to(np.ones((3, 1)), (6, 3, 1)).copy()
    out = check_euclidean_rsi(x, ring_matrix(6))
    for res in out.values():
        assert res.status == "pass"
        assert abs(res.slack) <= 1e-12


def test_euclidean_rsi_eigenvector_equality():
    w = ring_matrix(8)
    lam, vecs = np.linalg.eigh(w.entries)
    u2 = vecs[:, -2]  # second largest eigenvalue direction
    x = u2.reshape(8, 1, 1) * 3.0
    out = check_euclidean_rsi(x, w)
    assert out["grad-lower"].status == "pass"
    assert abs(out["grad-lower"].slack) <= 1e-10  # tight on a single mode


def test_euclidean_rsi_random_states():
    rng = np.random.default_rng(10)
    w = ring_matrix(10)
    for _ in range(1000):
        x = rng.standard_normal((10, 3, 2))
        out = check_euclidean_rsi(x, w)
        assert all(res.status == "pass" for res in out.values())


# --- gradient bounds ---


def test_grad_bounds_consensus():
    out = check_grad_bounds(consensus_state(5, 2, 8), ring_matrix(8), 1)
    assert all(res.status == "pass" for res in out.values())


def test_grad_bounds_random_and_near_consensus():
    rng = np.random.default_rng(11)
    w = ring_matrix(30)
    for t in (1, 10):
        for _ in range(100):
            s = random_state(30, 5, 2, rng)
            out = check_grad_bounds(s, w, t)
            assert out["grad-sum"].status == "pass"
            assert out["grad-vs-phi"].status == "pass"
    near = NetworkState(perturbed_consensus(30, 5, 2, scale=0.05, rng=rng))
    out = check_grad_bounds(near, w, 1)
    assert out["grad-blockwise"].status == "pass"


# --- mean vs induced mean ---


def test_mean_iam_consensus_equalities():
    out = check_mean_iam(consensus_state(4, 2, 5))
    for res in out.values():
        assert res.status == "pass"


def test_mean_iam_antipodal_skips():
    x = random_stiefel(4, 1, 0)
    out = check_mean_iam(np.stack([x, -x]))
    assert all(res.skipped for res in out.values())
    assert "degenerate" in out["mean-drift"].reason


def test_mean_iam_sampled():
    rng = np.random.default_rng(12)
    count = 0
    while count < 1000:
        s = perturbed_consensus(6, 5, 2, scale=0.9, rng=rng)
        out = check_mean_iam(s)
        if any(res.skipped for res in out.values()):
            continue
        count += 1
        assert all(res.status == "pass" for res in out.values())


# --- key relation between the two gradients ---


def test_key_relation_same_point():
    s = random_state(6, 5, 2, 13)
    rel = check_key_relation(s, s, ring_matrix(6), 1)
    assert rel.residual == 0.0
    assert rel.correction == 0.0


def test_key_relation_random_pairs():
    rng = np.random.default_rng(14)
    w = ring_matrix(6)
    for t in (1, 3):
        for _ in range(300):
            x = random_state(6, 5, 2, rng)
            y = random_state(6, 5, 2, rng)
            rel = check_key_relation(x, y, w, t)
            assert rel.residual <= 1e-10
            assert rel.correction >= -1e-12
            assert rel.inequality.status == "pass"


# --- descent lemma ---


def test_descent_same_point():
    s = random_state(6, 4, 2, 15)
    res = check_descent(s, s, ring_matrix(6), 1)
    assert res.status == "pass"
    assert res.slack == 0.0


def test_descent_random_pairs_both_depths():
    rng = np.random.default_rng(16)
    w = ring_matrix(30)
    for t in (1, 10):
        for _ in range(200):
            x = random_state(30, 4, 2, rng)
            y = random_state(30, 4, 2, rng)
            assert check_descent(x, y, w, t).status == "pass"


def test_descent_tightness_regression():
    # least-squares slope of gap against ||y - x||^2 stays below L_t / 2
    rng = np.random.default_rng(17)
    w = ring_matrix(8)
    profile = spectral_profile(w, 1)
    wt = w.entries
    gaps, d2 = [], []
    for _ in range(400):
        x = random_state(8, 4, 2, rng)
        y = random_state(8, 4, 2, rng)
        res = check_descent(x, y, w, 1)
        sq = float(np.sum((y - x) ** 2))
        gaps.append(profile.L_t / 2.0 * sq - res.slack)  # the raw gap
        d2.append(sq)
    gaps = np.array(gaps)
    d2 = np.array(d2)
    slope = float(np.sum(gaps * d2) / np.sum(d2**2))
    assert slope <= profile.L_t / 2.0 + 1e-12


def test_descent_along_actual_trajectory():
    cfg = RunConfig(graph=GraphSpec("ring", 8), d=5, r=2, alpha_rule="unit",
                    max_iters=300, stop_tol=2e-16, seed=18)
    res = run_drcs(cfg, record_states=True)
    w = ring_matrix(8)
    for x, y in zip(res.states[:-1], res.states[1:]):
        assert check_descent(NetworkState(x), NetworkState(y), w, 1).status == "pass"


# --- polar perturbation and step drift ---


def test_polar_perturbation_same_state():
    s = NetworkState(perturbed_consensus(8, 5, 2, scale=0.01, rng=19))
    res = check_polar_perturbation(s, s)
    assert res.status == "pass"
    assert res.slack == 0.0


def test_polar_perturbation_small_moves():
    rng = np.random.default_rng(20)
    for _ in range(200):
        x = perturbed_consensus(8, 5, 2, scale=0.02, rng=rng)
        y = perturbed_consensus(8, 5, 2, scale=0.02, rng=rng,
                                center=manifold.iam(x))
        res = check_polar_perturbation(x, y)
        if res.skipped:
            continue
        assert res.status == "pass"


def test_polar_perturbation_outside_region_skips():
    x = random_state(8, 5, 2, 21)
    y = random_state(8, 5, 2, 22)
    res = check_polar_perturbation(x, y)
    assert res.skipped
    assert "N_1" in res.reason or "degenerate" in res.reason


def test_step_mean_drift_along_trajectory():
    w = ring_matrix(8)
    t = 8  # multi-step depth for ring(8)
    profile = spectral_profile(w, t)
    alpha = min(1.0, 1.0 / profile.L_t)
    cfg = RunConfig(graph=GraphSpec("ring", 8), d=5, r=2, t=t,
                    alpha_rule=f"custom:{alpha}", max_iters=200,
                    stop_tol=2e-16, seed=23)
    start = NetworkState(sample_in_region(w, t, 5, 2, "NR", 1, rng=24)[0])
    res = run_drcs(cfg, record_states=True, initial_state=start)
    evaluated = 0
    for x, y in zip(res.states[:-1], res.states[1:]):
        out = check_step_mean_drift(NetworkState(x), NetworkState(y), w, t, alpha)
        if not out.skipped:
            assert out.status == "pass"
            evaluated += 1
    # the multi-step run contracts ~5x per iteration, so the whole certified
    # region is crossed in under a dozen steps
    assert evaluated >= 5


# --- total-variation deviation bound ---


def test_tv_bound_complete_graph():
    s = consensus_state(4, 2, 6, seed=25)
    out = check_tv_bound(s, complete_matrix(6), 1)
    assert out.lhs <= 1e-12
    assert out.check.status == "pass"


def test_tv_bound_ring30_multistep():
    s = NetworkState(perturbed_consensus(30, 5, 2, scale=0.05, rng=26))
    out = check_tv_bound(s, ring_matrix(30), 164)
    assert out.check.status == "pass"
    assert out.intermediate <= out.bound  # sqrt(N) sigma2^164 delta2 <= delta2/2


def test_tv_bound_single_step_skips_with_large_intermediate():
    s = NetworkState(perturbed_consensus(30, 5, 2, scale=0.05, rng=27))
    out = check_tv_bound(s, ring_matrix(30), 1)
    assert out.check.skipped
    assert "below multi-step depth" in out.check.reason
    assert out.intermediate > out.bound  # why one round is not enough


# --- criticality classification ---


def test_classify_consensus_global_optimum():
    s = consensus_state(5, 2, 8, seed=28)
    assert classify_critical(s, ring_matrix(8)) == "global_optimum"


def test_classify_random_not_critical():
    s = random_state(8, 5, 2, 29)
    assert classify_critical(s, ring_matrix(8)) == "not_critical"


def test_classify_circle_saddle_degenerates():
    # equally spaced spherical frames: critical by symmetry, zero mean
    x = np.array([[[1.0], [0.0]], [[0.0], [1.0]], [[-1.0], [0.0]], [[0.0], [-1.0]]])
    s = NetworkState(x)
    w = ring_matrix(4)
    g = s.entries - np.tensordot(w.entries, s.entries, axes=(1, 0))
    rg = manifold.tangent_project(s.entries, g)
    assert np.linalg.norm(rg) <= 1e-12  # first-order critical
    with pytest.raises(DegenerateMeanError):
        classify_critical(s, w)


def test_classify_outside_l():
    # two antipodal clusters of unequal size: mean nonzero, blocks far from it
    a = np.array([[1.0], [0.0], [0.0]])
    blocks = np.stack([a, a, a, -a])
    s = NetworkState(blocks)
    w = complete_matrix(4)
    cls = classify_critical(s, w, tol_grad=10.0)  # force the critical branch
    assert cls == "outside_L"


# --- rate estimation ---


def test_estimate_rate_synthetic_exact():
    rho = 0.93
    values = [rho ** (2 * k) for k in range(200)]
    est = estimate_rate(values, window_fraction=0.2)
    assert est.per_step_ratio == pytest.approx(rho, abs=1e-12)
    assert est.window[1] == 199


def test_estimate_rate_too_short():
    with pytest.raises(ValueError, match="too short"):
        estimate_rate([1.0, 0.5, 0.25])


def test_estimate_rate_rejects_nonpositive_window():
    values = [1.0] * 100 + [0.0]
    with pytest.raises(ValueError):
        estimate_rate(values)


def test_estimate_rate_from_trace_targets_passthrough():
    cfg = RunConfig(graph=GraphSpec("ring", 8), d=4, r=2,
                    alpha_rule="unit", seed=30)
    res = run_drcs(cfg)
    p = spectral_profile(ring_matrix(8), 1)
    est = estimate_rate(res.trace, targets={"sigma2_pow_t": p.sigma2})
    assert 0.0 < est.per_step_ratio <= 1.0
    assert est.theoretical_targets["sigma2_pow_t"] == p.sigma2
