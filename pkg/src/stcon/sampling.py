"""Random configurations for verification campaigns.

States inside the certified neighbourhoods are produced by retracting
scaled random tangent noise off a random consensus point and rejecting
misses; the noise magnitude is found by bisection so that the acceptance
rate stays at or above 30% (small enough to land inside, large enough to
cover the region rather than hug the centre).

Per-sample seeds derive deterministically from a master generator, so
campaigns are reproducible and trivially parallel across samples.
"""

from __future__ import annotations

import math

import numpy as np

from . import manifold
from .analysis import RegionParams, _phi_pairwise
from .network import MixingMatrix, matrix_power, spectral_profile

ACCEPT_TARGET = 0.3
PROBE_BATCH = 32
MAX_BISECTIONS = 60


def random_state(n: int, d: int, r: int, rng=None) -> np.ndarray:
    """Stacked independent uniform Stiefel blocks, shape (N, d, r)."""
    rng = np.random.default_rng(rng)
    return np.stack([manifold.random_stiefel(d, r, rng) for _ in range(n)])


def perturbed_consensus(n: int, d: int, r: int, scale: float, rng=None,
                        center: np.ndarray | None = None) -> np.ndarray:
    """Retract per-block tangent noise of norm U(0, scale) off one point."""
    rng = np.random.default_rng(rng)
    y = manifold.random_stiefel(d, r, rng) if center is None else center
    blocks = np.broadcast_to(y, (n, d, r))
    noise = rng.standard_normal((n, d, r))
    xi = manifold.tangent_project(blocks, noise)
    norms = np.sqrt(np.sum(xi**2, axis=(1, 2), keepdims=True))
    target = rng.uniform(0.0, scale, size=(n, 1, 1))
    xi = xi / np.maximum(norms, 1e-300) * target
    return manifold.polar_retract(blocks, xi)


def _in_region(x: np.ndarray, region: str, params: RegionParams, mu_t: float,
               wt: np.ndarray) -> bool:
    n = x.shape[0]
    try:
        xbar = manifold.iam(x)
    except manifold.DegenerateMeanError:
        return False
    diffs = x - xbar
    dist2 = float(np.sum(diffs**2))
    if region == "NR":
        distinf = float(np.max(np.sqrt(np.sum(diffs**2, axis=(1, 2)))))
        return dist2 <= n * params.delta1**2 and distinf <= params.delta2
    if region == "Nl":
        return (
            dist2 <= n * params.delta3**2
            and _phi_pairwise(x, wt) <= mu_t / 4.0
        )
    raise ValueError(f"unknown region {region!r}")


def sample_in_region(w: MixingMatrix, t: int, d: int, r: int, region: str,
                     n_samples: int, rng=None, params: RegionParams | None = None,
                     wt=None, profile=None) -> list:
    """Rejection-sample configurations inside a certified neighbourhood.

    region is 'NR' (distance + blockwise caps) or 'Nl' (objective +
    distance caps). Returns a list of (N, d, r) arrays.
    """
    rng = np.random.default_rng(rng)
    n = w.N
    params = params or RegionParams.defaults(r, n)
    profile = profile or spectral_profile(w, t)
    wt = np.asarray(getattr(wt, "entries", wt), dtype=float) if wt is not None \
        else matrix_power(w, t).entries

    # bisection on the noise scale: shrink until a probe batch accepts >= 30%
    scale = params.delta1 if region == "NR" else params.delta3
    for _ in range(MAX_BISECTIONS):
        hits = sum(
            _in_region(perturbed_consensus(n, d, r, scale, rng), region, params,
                       profile.mu_t, wt)
            for _ in range(PROBE_BATCH)
        )
        if hits / PROBE_BATCH >= ACCEPT_TARGET:
            break
        scale *= 0.5
    else:
        raise RuntimeError(f"could not find a workable noise scale for {region}")

    out = []
    attempts = 0
    limit = 50 * n_samples + 1000
    while len(out) < n_samples:
        attempts += 1
        if attempts > limit:
            raise RuntimeError(f"rejection sampling stalled for region {region}")
        x = perturbed_consensus(n, d, r, scale, rng)
        if _in_region(x, region, params, profile.mu_t, wt):
            out.append(x)
    return out


def sample_with_precondition(n: int, d: int, r: int, rng=None,
                             max_dist_sq: float | None = None,
                             max_attempts: int = 10_000) -> np.ndarray:
    """Random stacked state with ||x - xbar||_F^2 below a cap.

    Draws independent blocks and rejects states outside the cap (default
    N/2, the precondition of the mean-drift bounds). Falls back to shrunk
    consensus perturbations when independent draws cannot satisfy a tight
    cap.
    """
    rng = np.random.default_rng(rng)
    cap = n / 2.0 if max_dist_sq is None else max_dist_sq
    for _ in range(max_attempts):
        x = random_state(n, d, r, rng)
        try:
            xbar = manifold.iam(x)
        except manifold.DegenerateMeanError:
            continue
        if float(np.sum((x - xbar) ** 2)) <= cap:
            return x
    scale = math.sqrt(cap / n)
    for _ in range(max_attempts):
        x = perturbed_consensus(n, d, r, scale, rng)
        try:
            xbar = manifold.iam(x)
        except manifold.DegenerateMeanError:
            continue
        if float(np.sum((x - xbar) ** 2)) <= cap:
            return x
    raise RuntimeError("could not sample a state satisfying the distance cap")


def hemisphere_start(n: int, d: int, margin: float, rng=None):
    """Initial spherical (r = 1) blocks sharing a hemisphere.

    Returns (x0, pole, delta): unit columns with <x_i, pole> >= margin and
    delta the realised minimum alignment.
    """
    rng = np.random.default_rng(rng)
    pole = manifold.random_stiefel(d, 1, rng)
    blocks = []
    while len(blocks) < n:
        v = rng.standard_normal((d, 1))
        v /= np.linalg.norm(v)
        if float((v * pole).sum()) >= margin:
            blocks.append(v)
    x0 = np.stack(blocks)
    delta = float(min((b * pole).sum() for b in blocks))
    return x0, pole, delta
