"""Communication matrices and their spectral profiles.

Builds symmetric doubly stochastic mixing matrices (ring, complete,
Metropolis weights from an adjacency list), the lazy variant (W + I)/2,
and the spectral quantities driving consensus rates: the gap constants
mu_t = 1 - lambda_2(W^t) and L_t = 1 - lambda_N(W^t), the second largest
singular value sigma_2, and the multi-step communication depth needed to
bring every row of W^t within total-variation distance 1/(2 sqrt(N)) of
uniform.

Matrices are immutable after construction and all operations are pure; a
dense symmetric eigensolver is used throughout (desk-scale N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SYMMETRY_TOL = 1e-12
STOCHASTIC_TOL = 1e-12
EIGEN_TOL = 1e-12
CONNECT_TOL = 1e-10


class NotConnectedError(ValueError):
    """The weighted graph induced by W is (numerically) disconnected."""


@dataclass(frozen=True)
class MixingMatrix:
    """An N x N communication matrix.

    Construction only checks shape and finiteness; use validate() for the
    full doubly-stochastic / connectivity audit (some operations, e.g. the
    lazy transform of a defective matrix, must be expressible so that
    validation can reject the result rather than the constructor).
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(np.asarray(self.entries, dtype=float))
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("entries must be finite")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the symmetrised matrix, descending."""
        return np.linalg.eigvalsh((self.entries + self.entries.T) / 2.0)[::-1]


@dataclass(frozen=True)
class SpectralProfile:
    """Spectral constants of W and of its t-th power.

    mu_t = 1 - lambda_2(W^t) and L_t = 1 - lambda_N(W^t) are computed from
    the powered eigenvalue multiset directly (no sign assumption on
    lambda_N); sigma2 is the second largest singular value of W, i.e. the
    second largest |eigenvalue|. mu and L are the t = 1 values.
    """

    t: int
    lambdas: np.ndarray
    mu_t: float
    L_t: float
    sigma2: float
    mu: float
    L: float

    @property
    def rate_optimal_alpha(self) -> float:
        """Stepsize 2/(mu_t + L_t) minimising the linear-rate bound."""
        return 2.0 / (self.mu_t + self.L_t)

    @property
    def rate_ratio(self) -> float:
        """(L_t - mu_t)/(L_t + mu_t), the rate at the optimal stepsize."""
        return (self.L_t - self.mu_t) / (self.L_t + self.mu_t)


@dataclass(frozen=True)
class GraphSpec:
    """Declarative description of a communication graph.

    kind is one of 'ring', 'complete' or 'custom'; custom graphs read a
    plain-text edge list (see load_edge_list). lazy applies (W + I)/2.
    """

    kind: str
    N: int = 0
    lazy: bool = False
    adjacency_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("ring", "complete", "custom"):
            raise ValueError(f"unknown graph kind {self.kind!r}")
        if self.kind == "ring" and self.N < 3:
            raise ValueError("ring graphs need N >= 3")
        if self.kind == "complete" and self.N < 2:
            raise ValueError("complete graphs need N >= 2")
        if self.kind == "custom" and not self.adjacency_path:
            raise ValueError("custom graphs need an adjacency file path")

    def build(self) -> MixingMatrix:
        if self.kind == "ring":
            w = ring_matrix(self.N)
        elif self.kind == "complete":
            w = complete_matrix(self.N)
        else:
            w = load_edge_list(self.adjacency_path)
        return lazy(w) if self.lazy else w

    def label(self) -> str:
        base = {"ring": f"ring{self.N}", "complete": f"complete{self.N}"}.get(
            self.kind, "custom"
        )
        return f"lazy_{base}" if self.lazy else base


def ring_matrix(N: int) -> MixingMatrix:
    """Circulant ring-graph matrix with weight 1/3 on self and both neighbours.

    Its eigenvalues are (1 + 2 cos(2 pi k / N)) / 3 for k = 0..N-1; for
    N = 3 the ring coincides with the complete graph on three nodes.
    """
    if N < 3:
        raise ValueError(f"ring matrix needs N >= 3, got {N}")
    w = np.zeros((N, N))
    idx = np.arange(N)
    w[idx, idx] = 1.0 / 3.0
    w[idx, (idx + 1) % N] = 1.0 / 3.0
    w[idx, (idx - 1) % N] = 1.0 / 3.0
    return MixingMatrix(w)


def complete_matrix(N: int) -> MixingMatrix:
    """Uniform averaging matrix J = (1/N) 11^T (rank-one projector)."""
    if N < 2:
        raise ValueError(f"complete matrix needs N >= 2, got {N}")
    return MixingMatrix(np.full((N, N), 1.0 / N))


def lazy(w: MixingMatrix) -> MixingMatrix:
    """Lazy variant (W + I)/2; maps every eigenvalue to (lambda + 1)/2 >= 0."""
    return MixingMatrix((w.entries + np.eye(w.N)) / 2.0)


def metropolis_matrix(adjacency: np.ndarray, lazy_variant: bool = False) -> MixingMatrix:
    """Metropolis-Hastings weights for an undirected 0/1 adjacency matrix.

    W_ij = 1/(1 + max(deg_i, deg_j)) on edges, diagonal fills each row to 1.
    A convenience constructor for arbitrary connected graphs; combine with
    lazy_variant=True for the lazy Metropolis matrix.
    """
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got {a.shape}")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    a = (a != 0).astype(float)
    np.fill_diagonal(a, 0.0)
    deg = a.sum(axis=1)
    n = a.shape[0]
    w = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if a[i, j]:
                w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    out = MixingMatrix(w)
    return lazy(out) if lazy_variant else out


def load_edge_list(path) -> MixingMatrix:
    """Read a plain-text edge list into a validated mixing matrix.

    One edge per line, `i j [weight]`, 0-indexed, `#` starts a comment.
    Unweighted lists get Metropolis weights; weighted lists use the given
    symmetric off-diagonal weights with the diagonal filling each row to 1.
    Raises ValueError (listing the violations) unless the result passes
    validate().
    """
    edges = []
    weighted = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 'i j [weight]', got {raw!r}")
            i, j = int(parts[0]), int(parts[1])
            if i < 0 or j < 0 or i == j:
                raise ValueError(f"{path}:{lineno}: bad edge ({i}, {j})")
            weight = None
            if len(parts) == 3:
                weight = float(parts[2])
                weighted = True
            edges.append((i, j, weight))
    if not edges:
        raise ValueError(f"{path}: no edges")
    n = max(max(i, j) for i, j, _ in edges) + 1
    if weighted:
        w = np.zeros((n, n))
        for i, j, weight in edges:
            if weight is None:
                raise ValueError(f"{path}: mixed weighted and unweighted edges")
            w[i, j] = w[j, i] = weight
        np.fill_diagonal(w, 1.0 - w.sum(axis=1))
        matrix = MixingMatrix(w)
    else:
        a = np.zeros((n, n))
        for i, j, _ in edges:
            a[i, j] = a[j, i] = 1.0
        matrix = metropolis_matrix(a)
    problems = validate(matrix)
    if problems:
        raise ValueError(f"{path}: matrix fails validation: {'; '.join(problems)}")
    return matrix


def validate(w: MixingMatrix) -> list:
    """Audit a matrix against the doubly-stochastic mixing assumptions.

    Returns the list of violated clauses (empty when the matrix is a
    symmetric doubly stochastic matrix with positive sub-unit diagonal,
    eigenvalues in (-1, 1], and a connected graph). Connectivity is read
    off the spectrum (lambda_2 < 1) so weighted near-disconnection is
    caught too.
    """
    problems = []
    entries = w.entries
    if np.linalg.norm(entries - entries.T) > SYMMETRY_TOL:
        problems.append("not symmetric")
    if np.any(entries < 0):
        problems.append("negative entries")
    diag = np.diag(entries)
    if np.any(diag <= 0) or np.any(diag >= 1):
        problems.append("diagonal not strictly inside (0, 1)")
    row_err = float(np.max(np.abs(entries.sum(axis=1) - 1.0)))
    if row_err > STOCHASTIC_TOL:
        problems.append(f"row sums deviate from 1 by {row_err:.3e}")
    lam = w.eigenvalues()
    if lam[-1] <= -1.0 + EIGEN_TOL:
        problems.append("eigenvalue at or below -1")
    if lam[0] > 1.0 + EIGEN_TOL:
        problems.append("eigenvalue above 1")
    if len(lam) > 1 and lam[1] >= 1.0 - CONNECT_TOL:
        problems.append("graph not connected (lambda_2 = 1)")
    return problems


def spectral_profile(w: MixingMatrix, t: int = 1) -> SpectralProfile:
    """Spectral constants of W and W^t from one symmetric eigendecomposition.

    W symmetric means W^t has eigenvalues lambda_i^t, so mu_t and L_t come
    from the powered multiset. Raises NotConnectedError when lambda_2 is
    within CONNECT_TOL of 1.
    """
    if t < 1:
        raise ValueError(f"power t must be >= 1, got {t}")
    lam = w.eigenvalues()
    if len(lam) > 1 and lam[1] >= 1.0 - CONNECT_TOL:
        raise NotConnectedError(f"lambda_2 = {lam[1]:.12f}; graph is not connected")
    powered = np.sort(lam**t)[::-1]
    mu_t = 1.0 - powered[1]
    L_t = 1.0 - powered[-1]
    sigma2 = float(np.max(np.abs(lam[1:])))
    return SpectralProfile(
        t=t,
        lambdas=lam,
        mu_t=float(mu_t),
        L_t=float(L_t),
        sigma2=sigma2,
        mu=float(1.0 - lam[1]),
        L=float(1.0 - lam[-1]),
    )


def matrix_power(w: MixingMatrix, t: int) -> MixingMatrix:
    """W^t by repeated squaring.

    Preferred at runtime over the eigenvector round trip; W^t stays
    symmetric doubly stochastic with sigma2(W^t) = sigma2(W)^t.
    """
    if t < 1:
        raise ValueError(f"power t must be >= 1, got {t}")
    result = None
    base = w.entries
    k = t
    while k:
        if k & 1:
            result = base.copy() if result is None else result @ base
        k >>= 1
        if k:
            base = base @ base
    return MixingMatrix(result)


def multistep_lower_bound(sigma2: float, N: int) -> int:
    """ceil(log_{sigma2}(1/(2 sqrt(N)))), the communication depth at which
    every row of W^t is within total-variation distance 1/2 of uniform
    (scaled by sqrt(N)). Returns 1 when sigma2 = 0 (already uniform)."""
    if not 0.0 <= sigma2 < 1.0:
        raise ValueError(f"sigma2 must lie in [0, 1), got {sigma2}")
    if sigma2 == 0.0:
        return 1
    t = math.ceil(math.log(1.0 / (2.0 * math.sqrt(N))) / math.log(sigma2))
    return max(1, t)


def min_multistep_t(w: MixingMatrix) -> int:
    """Smallest t with sqrt(N) sigma2^t <= 1/2 for this matrix."""
    profile = spectral_profile(w, 1)
    return multistep_lower_bound(profile.sigma2, w.N)
