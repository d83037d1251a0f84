"""Mixing matrix tests: the ring family against the circulant eigenvalue
formula, lazy transform, spectral profiles, powers, multi-step depth and
the validation audit."""

import math

import numpy as np
import pytest

from stcon.network import (
    GraphSpec,
    MixingMatrix,
    NotConnectedError,
    complete_matrix,
    lazy,
    load_edge_list,
    matrix_power,
    metropolis_matrix,
    min_multistep_t,
    multistep_lower_bound,
    ring_matrix,
    spectral_profile,
    validate,
)


def ring_eigenvalues(n):
    """Circulant oracle: (1 + 2 cos(2 pi k / N)) / 3, k = 0..N-1."""
    k = np.arange(n)
    return np.sort((1.0 + 2.0 * np.cos(2.0 * np.pi * k / n)) / 3.0)[::-1]


def test_ring3_is_complete():
    np.testing.assert_allclose(ring_matrix(3).entries, np.full((3, 3), 1 / 3), atol=1e-15)


def test_ring_rejects_small_n():
    with pytest.raises(ValueError):
        ring_matrix(2)


def test_ring30_structure():
    w = ring_matrix(30)
    np.testing.assert_allclose(w.entries.sum(axis=1), 1.0, atol=1e-15)
    np.testing.assert_allclose(w.entries, w.entries.T, atol=0)
    assert validate(w) == []


def test_ring_eigenvalues_match_circulant_formula():
    for n in (5, 8, 30):
        w = ring_matrix(n)
        np.testing.assert_allclose(w.eigenvalues(), ring_eigenvalues(n), atol=1e-12)


def test_spectral_constants_ring30():
    p = spectral_profile(ring_matrix(30), 1)
    assert abs(p.L - 4.0 / 3.0) <= 1e-12
    oracle = ring_eigenvalues(30)
    assert abs(p.mu - (1.0 - oracle[1])) <= 1e-12
    assert abs(p.sigma2 - oracle[1]) <= 1e-12  # |lambda_min| = 1/3 < lambda_2


def test_spectral_constants_lazy_ring30():
    p = spectral_profile(lazy(ring_matrix(30)), 1)
    assert abs(p.L - 2.0 / 3.0) <= 1e-12
    assert abs(p.mu - (1.0 - ring_eigenvalues(30)[1]) / 2.0) <= 1e-12


def test_lazy_spectral_map_and_nonnegativity():
    rng = np.random.default_rng(0)
    for n in (5, 9, 14):
        a = (rng.uniform(size=(n, n)) < 0.5).astype(float)
        a = np.triu(a, 1)
        a = a + a.T
        a[np.arange(n - 1), np.arange(1, n)] = 1.0  # path edges keep it connected
        a[np.arange(1, n), np.arange(n - 1)] = 1.0
        w = metropolis_matrix(a)
        lam = w.eigenvalues()
        lam_lazy = lazy(w).eigenvalues()
        np.testing.assert_allclose(lam_lazy, (lam + 1.0) / 2.0, atol=1e-12)
        assert np.all(lam_lazy >= -1e-12)


def test_lazy_identity_rejected_by_validation():
    eye = MixingMatrix(np.eye(4))
    problems = validate(lazy(eye))
    assert any("diagonal" in p for p in problems)
    assert any("connected" in p for p in problems)


def test_profile_complete_graph():
    p = spectral_profile(complete_matrix(12), 1)
    assert abs(p.mu - 1.0) <= 1e-12
    assert abs(p.L - 1.0) <= 1e-12
    assert p.sigma2 <= 1e-12


def test_profile_multistep_constants():
    w = ring_matrix(30)
    lam = ring_eigenvalues(30)
    for t in (1, 2, 10, 164):
        p = spectral_profile(w, t)
        powered = np.sort(lam**t)[::-1]
        assert abs(p.mu_t - (1.0 - powered[1])) <= 1e-10
        assert abs(p.L_t - (1.0 - powered[-1])) <= 1e-10
    assert abs(spectral_profile(w, 1).L_t - 4.0 / 3.0) <= 1e-12


def test_profile_rejects_disconnected():
    w = MixingMatrix(np.kron(np.eye(2), np.full((2, 2), 0.5)))
    with pytest.raises(NotConnectedError):
        spectral_profile(w, 1)


def test_matrix_power_identity_and_eigen_oracle():
    w = ring_matrix(30)
    assert np.array_equal(matrix_power(w, 1).entries, w.entries)
    p10 = matrix_power(w, 10)
    np.testing.assert_allclose(
        np.sort(p10.eigenvalues()), np.sort(ring_eigenvalues(30) ** 10), atol=1e-10
    )


def test_matrix_power_sigma2_scaling():
    w = ring_matrix(30)
    s2 = spectral_profile(w, 1).sigma2
    for t in (2, 5, 20, 50):
        st = spectral_profile(matrix_power(w, t), 1).sigma2
        assert abs(st - s2**t) <= 1e-10


def test_matrix_power_contracts_to_uniform():
    w = ring_matrix(8)
    n = 8
    s2 = spectral_profile(w, 1).sigma2
    j = np.full((n, n), 1.0 / n)
    # exact spectral bound while it dominates roundoff
    for t in (10, 30, 50):
        gap = np.linalg.norm(matrix_power(w, t).entries - j)
        assert gap <= s2**t * math.sqrt(n) + 1e-13
    # far past that, repeated squaring bottoms out at the fp floor
    gap = np.linalg.norm(matrix_power(w, 1000).entries - j)
    assert gap <= max(s2**1000 * math.sqrt(n), 1e-13)


def test_total_variation_row_bound():
    w = ring_matrix(30)
    n = 30
    s2 = spectral_profile(w, 1).sigma2
    for t in (1, 10, 164):
        wt = matrix_power(w, t).entries
        tv = np.max(np.sum(np.abs(wt - 1.0 / n), axis=1))
        assert tv <= math.sqrt(n) * s2**t + 1e-12


def test_min_multistep_values():
    assert min_multistep_t(ring_matrix(30)) == 164
    assert multistep_lower_bound(0.5, 1) == 1
    assert min_multistep_t(complete_matrix(6)) == 1
    with pytest.raises(ValueError):
        multistep_lower_bound(1.0, 4)


def test_gap_ratio_below_sigma2():
    # (L - mu)/(L + mu) <= sigma2 for every valid mixing matrix
    mats = [ring_matrix(n) for n in (3, 5, 8, 30)]
    mats += [lazy(ring_matrix(12)), complete_matrix(7)]
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(4, 12))
        a = (rng.uniform(size=(n, n)) < 0.4).astype(float)
        a = np.triu(a, 1)
        a = a + a.T
        a[np.arange(n - 1), np.arange(1, n)] = 1.0
        a[np.arange(1, n), np.arange(n - 1)] = 1.0
        mats.append(metropolis_matrix(a, lazy_variant=bool(rng.integers(2))))
    for w in mats:
        if validate(w):
            continue
        p = spectral_profile(w, 1)
        assert (p.L - p.mu) / (p.L + p.mu) <= p.sigma2 + 1e-12


def test_validate_flags_violations():
    swap = MixingMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    problems = validate(swap)
    assert any("diagonal" in p for p in problems)
    assert any("-1" in p for p in problems)

    w = ring_matrix(5).entries.copy()
    w[0, 1] += 1e-6
    assert any("symmetric" in p for p in validate(MixingMatrix(w)))


def test_metropolis_validates():
    a = np.zeros((6, 6))
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]
    for i, j in edges:
        a[i, j] = a[j, i] = 1.0
    assert validate(metropolis_matrix(a)) == []
    assert validate(metropolis_matrix(a, lazy_variant=True)) == []


def test_edge_list_loading(tmp_path):
    path = tmp_path / "graph.txt"
    path.write_text("# a 4-cycle with a chord\n0 1\n1 2\n2 3\n3 0\n0 2\n")
    w = load_edge_list(path)
    assert w.N == 4
    assert validate(w) == []

    weighted = tmp_path / "weighted.txt"
    weighted.write_text("0 1 0.25\n1 2 0.25\n2 0 0.25\n")
    w2 = load_edge_list(weighted)
    assert validate(w2) == []
    assert w2.entries[0, 1] == 0.25

    disconnected = tmp_path / "disc.txt"
    disconnected.write_text("0 1\n2 3\n")
    with pytest.raises(ValueError, match="validation"):
        load_edge_list(disconnected)

    junk = tmp_path / "junk.txt"
    junk.write_text("0 1 2 3\n")
    with pytest.raises(ValueError):
        load_edge_list(junk)


def test_graph_spec():
    assert GraphSpec("ring", 30).build().N == 30
    assert GraphSpec("ring", 30, lazy=True).label() == "lazy_ring30"
    assert GraphSpec("complete", 4).build().entries[0, 0] == 0.25
    with pytest.raises(ValueError):
        GraphSpec("ring", 2)
    with pytest.raises(ValueError):
        GraphSpec("mesh", 5)
    with pytest.raises(ValueError):
        GraphSpec("custom")


def test_graph_spec_custom(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("0 1\n1 2\n2 0\n")
    spec = GraphSpec("custom", adjacency_path=str(path))
    assert spec.build().N == 3
