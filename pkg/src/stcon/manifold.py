"""Stiefel manifold St(d, r) primitives.

St(d, r) is the set of d x r real matrices with orthonormal columns,
x^T x = I_r. This module provides tangent/normal projections, polar and
QR retractions, the orthogonal projection onto the manifold, uniform
random sampling, and the induced arithmetic mean of a stacked N-agent
configuration together with the distances derived from it.

All array functions accept a single (d, r) matrix or a batch shaped
(..., d, r) and broadcast over the leading axes. Everything is a pure
function of its inputs; values are safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHO_TOL = 1e-12
DEGENERATE_TOL = 1e-12
TANGENT_TOL = 1e-10


class DegenerateMeanError(Exception):
    """Raised when a matrix to be projected onto St(d, r) is rank deficient.

    The polar factor (and hence the induced arithmetic mean) is unique only
    while the smallest singular value is strictly positive; below the
    threshold the projection is ill-defined and callers must handle it.
    """


def _as_matrix(x) -> np.ndarray:
    """Coerce input (array or wrapper with .entries) to a float ndarray."""
    entries = getattr(x, "entries", x)
    return np.asarray(entries, dtype=float)


def orthonormality_defect(x) -> float:
    """Frobenius norm of x^T x - I_r, maximised over a batch."""
    x = _as_matrix(x)
    r = x.shape[-1]
    gram = np.swapaxes(x, -1, -2) @ x
    gram = gram - np.eye(r)
    defect = np.sqrt(np.sum(gram**2, axis=(-2, -1)))
    return float(np.max(defect))


@dataclass(frozen=True)
class StiefelPoint:
    """A single d x r frame with validated orthonormal columns.

    Raises ValueError if the entries are not orthonormal to within
    ORTHO_TOL. Entries are stored read-only; construct a new point rather
    than mutating (re-orthonormalisation is deliberately not performed, so
    that a defective retraction cannot hide behind the constructor).
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(_as_matrix(self.entries))
        if entries.ndim != 2:
            raise ValueError(f"expected a 2-d matrix, got shape {entries.shape}")
        d, r = entries.shape
        if r > d:
            raise ValueError(f"column count r={r} exceeds row count d={d}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("entries must be finite")
        defect = orthonormality_defect(entries)
        if defect > ORTHO_TOL:
            raise ValueError(
                f"columns not orthonormal: ||x^T x - I||_F = {defect:.3e} > {ORTHO_TOL}"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @property
    def r(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def random(cls, d: int, r: int, rng=None) -> "StiefelPoint":
        return cls(random_stiefel(d, r, rng))


@dataclass(frozen=True)
class TangentVector:
    """A tangent vector at a Stiefel point.

    Membership of T_x St(d, r) is the skew condition x^T v + v^T x = 0,
    checked to TANGENT_TOL at construction.
    """

    base: StiefelPoint
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(_as_matrix(self.entries))
        if entries.shape != self.base.entries.shape:
            raise ValueError(
                f"shape {entries.shape} does not match base {self.base.entries.shape}"
            )
        x = self.base.entries
        sym = x.T @ entries + entries.T @ x
        defect = float(np.linalg.norm(sym))
        if defect > TANGENT_TOL:
            raise ValueError(
                f"not tangent at base: ||x^T v + v^T x||_F = {defect:.3e} > {TANGENT_TOL}"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))


def _check_same_shape(x: np.ndarray, v: np.ndarray):
    if x.shape != v.shape:
        raise ValueError(f"shape mismatch: point {x.shape} vs vector {v.shape}")


def tangent_project(x, v) -> np.ndarray:
    """Orthogonal projection of v onto the tangent space at x.

    P_T(v) = v - x (x^T v + v^T x) / 2. Linear in v and idempotent; maps
    the normal space {x S : S symmetric} to zero.
    """
    x = _as_matrix(x)
    v = _as_matrix(v)
    _check_same_shape(x, v)
    xtv = np.swapaxes(x, -1, -2) @ v
    sym = xtv + np.swapaxes(xtv, -1, -2)
    return v - 0.5 * (x @ sym)


def normal_project(x, v) -> np.ndarray:
    """Orthogonal projection of v onto the normal space at x.

    P_N(v) = x (x^T v + v^T x) / 2, the complement of tangent_project:
    the two reconstruct v exactly.
    """
    x = _as_matrix(x)
    v = _as_matrix(v)
    _check_same_shape(x, v)
    xtv = np.swapaxes(x, -1, -2) @ v
    sym = xtv + np.swapaxes(xtv, -1, -2)
    return 0.5 * (x @ sym)


def stiefel_project(y) -> np.ndarray:
    """Orthogonal projection of an ambient matrix onto St(d, r).

    Returns the polar factor u v^T of the thin SVD y = u s v^T, which
    maximises <z, y> over z on the manifold. Raises DegenerateMeanError
    when the smallest singular value is at or below DEGENERATE_TOL, where
    the projection stops being unique.
    """
    y = _as_matrix(y)
    u, s, vt = np.linalg.svd(y, full_matrices=False)
    smallest = float(np.min(s[..., -1]))
    if smallest <= DEGENERATE_TOL:
        raise DegenerateMeanError(
            f"smallest singular value {smallest:.3e} <= {DEGENERATE_TOL}; "
            "projection onto the Stiefel manifold is not unique"
        )
    return u @ vt


def polar_retract(x, xi) -> np.ndarray:
    """Polar retraction Retr_x(xi) = (x + xi)(I + xi^T xi)^(-1/2).

    Computed as the orthogonal projection of x + xi onto the manifold
    (the two forms agree; the SVD route is better conditioned for large
    steps). For tangent xi, (x + xi)^T (x + xi) = I + xi^T xi is positive
    definite, so the retraction never degenerates.

    Second order: ||Retr_x(xi) - (x + xi)||_F <= ||xi||_F^2 whenever
    ||xi||_F <= 1, and ||Retr_x(xi) - y||_F <= ||x + xi - y||_F for every
    y on the manifold (non-expansiveness toward manifold points).
    """
    x = _as_matrix(x)
    xi = _as_matrix(xi)
    _check_same_shape(x, xi)
    return stiefel_project(x + xi)


def polar_retract_factor(x, xi) -> np.ndarray:
    """Polar retraction via the explicit (I + xi^T xi)^(-1/2) factor.

    Reference route used to cross-check polar_retract; the inverse square
    root comes from the eigendecomposition of the small r x r Gram matrix.
    """
    x = _as_matrix(x)
    xi = _as_matrix(xi)
    _check_same_shape(x, xi)
    r = x.shape[-1]
    gram = np.eye(r) + np.swapaxes(xi, -1, -2) @ xi
    w, v = np.linalg.eigh(gram)
    inv_sqrt = (v / np.sqrt(w)[..., None, :]) @ np.swapaxes(v, -1, -2)
    return (x + xi) @ inv_sqrt


def qr_retract(x, xi) -> np.ndarray:
    """QR retraction: the Q factor of x + xi with nonnegative R diagonal.

    Alternative to the polar retraction behind the same interface. It is
    second order with constant sqrt(10)/4 for ||xi||_F <= 1/2 but is not
    non-expansive toward manifold points.
    """
    x = _as_matrix(x)
    xi = _as_matrix(xi)
    _check_same_shape(x, xi)
    q, rmat = np.linalg.qr(x + xi)
    diag = np.diagonal(rmat, axis1=-2, axis2=-1)
    signs = np.where(diag < 0, -1.0, 1.0)
    return q * signs[..., None, :]


RETRACTIONS = {"polar": polar_retract, "qr": qr_retract}


def retract(x, xi, kind: str = "polar") -> np.ndarray:
    """Dispatch to a named retraction ('polar' or 'qr')."""
    try:
        fn = RETRACTIONS[kind]
    except KeyError:
        raise ValueError(f"unknown retraction {kind!r}; choose from {sorted(RETRACTIONS)}")
    return fn(x, xi)


def random_stiefel(d: int, r: int, rng=None) -> np.ndarray:
    """Draw a uniform (Haar) random point on St(d, r).

    Orthonormal factor of a d x r standard Gaussian matrix, with the sign
    convention that the R factor has nonnegative diagonal so a given seed
    reproduces bit-identically.
    """
    if r > d:
        raise ValueError(f"need r <= d, got r={r} > d={d}")
    rng = np.random.default_rng(rng)
    g = rng.standard_normal((d, r))
    q, rmat = np.linalg.qr(g)
    signs = np.where(np.diag(rmat) < 0, -1.0, 1.0)
    return q * signs


def _as_blocks(states) -> np.ndarray:
    """Coerce a NetworkState-like object or (N, d, r) array to an array."""
    blocks = _as_matrix(states)
    if blocks.ndim != 3:
        raise ValueError(f"expected a stacked (N, d, r) configuration, got {blocks.shape}")
    return blocks


def euclidean_mean(states) -> np.ndarray:
    """Arithmetic mean (1/N) sum_i x_i of the stacked blocks.

    The result lives in the ambient space; for Stiefel blocks its spectral
    norm is at most 1. An antipodal pair cancels to the zero matrix, which
    downstream projection rejects as degenerate.
    """
    return np.mean(_as_blocks(states), axis=0)


def iam(states) -> np.ndarray:
    """Induced arithmetic mean: projection of the Euclidean mean onto St(d, r).

    Equals argmin over manifold points y of sum_i ||y - x_i||_F^2.
    Raises DegenerateMeanError when the mean is rank deficient.
    """
    return stiefel_project(euclidean_mean(states))


def dist_sq(states, y) -> float:
    """Unnormalised squared distance sum_i ||x_i - y||_F^2.

    Callers divide by N where a per-agent average is wanted.
    """
    blocks = _as_blocks(states)
    y = _as_matrix(y)
    return float(np.sum((blocks - y) ** 2))


def dist_inf(states, y) -> float:
    """Largest blockwise distance max_i ||x_i - y||_F."""
    blocks = _as_blocks(states)
    y = _as_matrix(y)
    return float(np.max(np.sqrt(np.sum((blocks - y) ** 2, axis=(-2, -1)))))
