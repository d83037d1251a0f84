"""Numerical certificates for the consensus objective's local geometry.

Evaluators for the objective and its gradients, membership tests for the
neighbourhoods in which linear convergence is certified, and checks for
every identity and one-sided inequality the theory rests on: the
restricted secant inequality family (RSI-1, RSI-2 and their convex
combination), quadratic growth, the error bound, gradient dominance,
gradient norm bounds, the mean-versus-induced-mean relations, the
descent lemma, the polar-factor perturbation bound and the row-wise
total-variation bound for matrix powers.

Every inequality check is one-sided and reports its slack (lhs - rhs in
the favourable orientation), so near-violations stay visible; checks
whose preconditions fail report skipped(reason) instead of passing
vacuously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import manifold
from .consensus import NetworkState, _grad_from_power
from .network import MixingMatrix, matrix_power, min_multistep_t, spectral_profile

IDENTITY_TOL = 1e-10
# fp guard for one-sided checks whose mathematical slack can be exactly 0
SLACK_TOL = 1e-10


@dataclass(frozen=True)
class RegionParams:
    """Radii of the certified neighbourhoods.

    delta1 caps the summed distance (||x - xbar||_F^2 <= N delta1^2),
    delta2 the blockwise distance, delta3 the distance cap of the
    objective-capped region. Valid combinations satisfy
    delta1 <= delta2/(5 sqrt(r)), delta2 <= 1/6 and
    delta3 <= min(1/sqrt(N), 1/(4 sqrt(r))).
    """

    delta1: float
    delta2: float
    delta3: float

    @classmethod
    def defaults(cls, r: int, N: int) -> "RegionParams":
        """Largest certified radii: every bound taken with equality."""
        delta2 = 1.0 / 6.0
        return cls(
            delta1=delta2 / (5.0 * math.sqrt(r)),
            delta2=delta2,
            delta3=min(1.0 / math.sqrt(N), 1.0 / (4.0 * math.sqrt(r))),
        )

    def violations(self, r: int, N: int) -> list:
        eps = 1e-12
        out = []
        if not 0 < self.delta2 <= 1.0 / 6.0 + eps:
            out.append("delta2 outside (0, 1/6]")
        if not 0 < self.delta1 <= self.delta2 / (5.0 * math.sqrt(r)) + eps:
            out.append("delta1 exceeds delta2/(5 sqrt(r))")
        if not 0 < self.delta3 <= min(1.0 / math.sqrt(N), 1.0 / (4.0 * math.sqrt(r))) + eps:
            out.append("delta3 exceeds min(1/sqrt(N), 1/(4 sqrt(r)))")
        return out

    def require_valid(self, r: int, N: int):
        bad = self.violations(r, N)
        if bad:
            raise ValueError("invalid region radii: " + "; ".join(bad))


@dataclass
class CheckResult:
    """Outcome of one inequality/identity evaluation."""

    name: str
    status: str  # "pass" | "fail" | "skipped"
    slack: float = float("nan")
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def skipped(self) -> bool:
        return self.status == "skipped"


def _claim_ge(name: str, lhs: float, rhs: float, tol: float | None = None) -> CheckResult:
    """Check lhs >= rhs with a small relative fp guard; slack = lhs - rhs."""
    if tol is None:
        tol = SLACK_TOL * max(1.0, abs(lhs), abs(rhs))
    slack = lhs - rhs
    return CheckResult(name, "pass" if slack >= -tol else "fail", slack)


def _skip(name: str, reason: str) -> CheckResult:
    return CheckResult(name, "skipped", reason=reason)


@dataclass
class RegionFlags:
    n1: bool
    n2: bool
    nr: bool
    nl: bool


@dataclass
class RsiReport:
    """Measured secant-inequality data at one state.

    lhs is <x - xbar, grad>, pq_sum the nonnegative correction of the
    exact decomposition lhs = 2 phi - pq_sum (identity_residual tracks
    it), gamma_R / gamma_l the certified curvature constants and Phi the
    gradient-side constant of the active region. checks holds one
    CheckResult per inequality (RSI-1, RSI-2, RSI-I, QG, QG', ERB,
    dominance).
    """

    lhs: float
    phi: float
    pq_sum: float
    gamma_R: float
    gamma_l: float
    Phi: float
    region: str  # "NR", "Nl" or "" when outside both
    flags: RegionFlags
    identity_residual: float
    grad_norm_sq: float
    dist_sq: float
    checks: dict = field(default_factory=dict)

    def all_passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks.values())


@dataclass
class RateEstimate:
    """Terminal-window geometric-mean contraction ratio of a trace."""

    per_step_ratio: float
    window: tuple
    theoretical_targets: dict = field(default_factory=dict)


@dataclass
class KeyRelation:
    """Exact identity tying Riemannian and Euclidean gradient pairings."""

    residual: float
    correction: float
    inequality: CheckResult


@dataclass
class TvBound:
    """Row-wise deviation of W^t from uniform applied to a configuration."""

    lhs: float
    bound: float
    intermediate: float  # sqrt(N) sigma2^t delta2
    check: CheckResult


# --- shared internals ---


def _entries(state) -> np.ndarray:
    x = np.asarray(getattr(state, "entries", state), dtype=float)
    if x.ndim != 3:
        raise ValueError(f"expected a stacked (N, d, r) state, got shape {x.shape}")
    return x


def _power_entries(w: MixingMatrix, t: int, wt=None) -> np.ndarray:
    if wt is not None:
        return np.asarray(getattr(wt, "entries", wt), dtype=float)
    return matrix_power(w, t).entries


def _phi_pairwise(x: np.ndarray, wt: np.ndarray) -> float:
    """Quartic-free objective (1/4) sum_ij (W^t)_ij ||x_i - x_j||^2 from
    explicit block differences (stays accurate arbitrarily close to
    consensus, unlike the cancelling N r / 2 - h form)."""
    diffs = x[:, None] - x[None, :]
    d2 = np.sum(diffs**2, axis=(2, 3))
    return 0.25 * float(np.sum(wt * d2))


def _grad_pair(x: np.ndarray, wt: np.ndarray):
    g = _grad_from_power(wt, x)
    rg = manifold.tangent_project(x, g)
    return g, rg


def phi_value(state, w: MixingMatrix, t: int = 1, wt=None) -> float:
    """Objective value (1/4) sum_ij (W^t)_ij ||x_i - x_j||_F^2."""
    x = _entries(state)
    return _phi_pairwise(x, _power_entries(w, t, wt))


def h_value(state, w: MixingMatrix, t: int = 1, wt=None) -> float:
    """Alignment value (1/2) sum_ij (W^t)_ij <x_i, x_j>.

    Complements the objective exactly: phi + h = N r / 2 on the manifold.
    """
    x = _entries(state)
    wt = _power_entries(w, t, wt)
    flat = x.reshape(x.shape[0], -1)
    gram = flat @ flat.T
    return 0.5 * float(np.sum(wt * gram))


def fd_gradient_check(state, w: MixingMatrix, t: int = 1, n_directions: int = 20,
                      step: float = 1e-6, rng=None, wt=None) -> float:
    """Central finite differences of the objective along retraction curves.

    Compares [phi(Retr_x(h xi)) - phi(Retr_x(-h xi))]/(2h) against
    <grad, xi> over random unit tangent directions and returns the worst
    error, measured relative to max(1, |<grad, xi>|) so consensus states
    (both sides zero) are judged absolutely.
    """
    x = _entries(state)
    wt = _power_entries(w, t, wt)
    _, rg = _grad_pair(x, wt)
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(n_directions):
        xi = manifold.tangent_project(x, rng.standard_normal(x.shape))
        norm = np.linalg.norm(xi)
        if norm == 0.0:
            continue
        xi /= norm
        analytic = float(np.sum(rg * xi))
        plus = _phi_pairwise(manifold.polar_retract(x, step * xi), wt)
        minus = _phi_pairwise(manifold.polar_retract(x, -step * xi), wt)
        fd = (plus - minus) / (2.0 * step)
        err = abs(fd - analytic) / max(1.0, abs(analytic))
        worst = max(worst, err)
    return worst


def region_membership(state, w: MixingMatrix, t: int, params: RegionParams | None = None,
                      wt=None, profile=None) -> RegionFlags:
    """Membership flags for the distance, blockwise, intersection and
    objective-capped neighbourhoods of the consensus set."""
    x = _entries(state)
    n, _, r = x.shape
    params = params or RegionParams.defaults(r, n)
    params.require_valid(r, n)
    wt = _power_entries(w, t, wt)
    profile = profile or spectral_profile(w, t)
    xbar = manifold.iam(x)
    diffs = x - xbar
    dist2 = float(np.sum(diffs**2))
    distinf = float(np.max(np.sqrt(np.sum(diffs**2, axis=(1, 2)))))
    phi = _phi_pairwise(x, wt)
    n1 = dist2 <= n * params.delta1**2
    n2 = distinf <= params.delta2
    nl = phi <= profile.mu_t / 4.0 and dist2 <= n * params.delta3**2
    return RegionFlags(n1=n1, n2=n2, nr=n1 and n2, nl=nl)


def check_rsi(state, w: MixingMatrix, t: int, params: RegionParams | None = None,
              nu: float = 0.5, wt=None, profile=None) -> RsiReport:
    """Evaluate the full secant-inequality family at one state.

    Computes the pairing <x - xbar, grad>, the exact decomposition
    2 phi - sum_i <p_i, q_i>, the certified constants gamma_R, gamma_l
    and Phi, and the satisfaction of RSI-1/RSI-2/RSI-I (inside the
    regions; skipped outside), the error bound, gradient dominance, and
    the global/local quadratic-growth inequalities.
    """
    x = _entries(state)
    n, _, r = x.shape
    params = params or RegionParams.defaults(r, n)
    params.require_valid(r, n)
    wt = _power_entries(w, t, wt)
    profile = profile or spectral_profile(w, t)
    mu_t, l_t = profile.mu_t, profile.L_t

    xbar = manifold.iam(x)
    diffs = x - xbar
    dist2 = float(np.sum(diffs**2))
    dist = math.sqrt(dist2)
    distinf = float(np.max(np.sqrt(np.sum(diffs**2, axis=(1, 2)))))
    xhat = x.mean(axis=0)
    hat2 = float(np.sum((x - xhat) ** 2))

    _, rg = _grad_pair(x, wt)
    grad_sq = float(np.sum(rg**2))
    lhs = float(np.sum(diffs * rg))
    phi = _phi_pairwise(x, wt)

    # decomposition lhs = 2 phi - sum_i <p_i, q_i>
    pair_diffs = x[:, None] - x[None, :]
    grams = np.einsum("ijdk,ijdl->ijkl", pair_diffs, pair_diffs)
    q = 0.5 * np.einsum("ij,ijkl->ikl", wt, grams)
    p = 0.5 * np.einsum("idk,idl->ikl", diffs, diffs)
    pq_sum = float(np.sum(p * q))
    identity_residual = abs(lhs - (2.0 * phi - pq_sum))

    n1 = dist2 <= n * params.delta1**2
    n2 = distinf <= params.delta2
    nl = phi <= mu_t / 4.0 and dist2 <= n * params.delta3**2
    flags = RegionFlags(n1=n1, n2=n2, nr=n1 and n2, nl=nl)

    gamma_r = (1.0 - 4.0 * r * params.delta1**2) * (1.0 - params.delta2**2 / 2.0) * mu_t
    gamma_l = mu_t * (1.0 - 4.0 * r * params.delta3**2) - phi
    if flags.nr:
        region, gamma, big_phi = "NR", gamma_r, 2.0 - distinf**2
    elif flags.nl:
        region, gamma, big_phi = "Nl", gamma_l, 2.0 - dist2
    else:
        region, gamma, big_phi = "", float("nan"), float("nan")

    checks = {}
    if region:
        checks["RSI-1"] = _claim_ge("RSI-1", lhs, gamma * dist2)
        checks["RSI-2"] = _claim_ge("RSI-2", lhs, big_phi / (2.0 * l_t) * grad_sq)
        checks["RSI-I"] = _claim_ge(
            "RSI-I",
            lhs,
            nu * big_phi / (2.0 * l_t) * grad_sq + (1.0 - nu) * gamma * dist2,
        )
        checks["ERB"] = _claim_ge("ERB", (2.0 / mu_t) * math.sqrt(grad_sq), dist)
        checks["dominance"] = _claim_ge(
            "dominance", 3.0 / (2.0 * mu_t) * grad_sq, phi
        )
    else:
        reason = "state outside both certified neighbourhoods"
        for name in ("RSI-1", "RSI-2", "RSI-I", "ERB", "dominance"):
            checks[name] = _skip(name, reason)

    checks["QG"] = _claim_ge("QG", phi, mu_t / 4.0 * dist2)
    checks["QG-mean"] = _claim_ge("QG-mean", phi, mu_t / 2.0 * hat2)
    if dist2 <= n / (8.0 * r):
        checks["QG'"] = _claim_ge(
            "QG'", phi, mu_t / 2.0 * (1.0 - 4.0 * r / n * dist2) * dist2
        )
    else:
        checks["QG'"] = _skip("QG'", "||x - xbar||^2 > N/(8r)")

    return RsiReport(
        lhs=lhs, phi=phi, pq_sum=pq_sum, gamma_R=gamma_r, gamma_l=gamma_l,
        Phi=big_phi, region=region, flags=flags,
        identity_residual=identity_residual, grad_norm_sq=grad_sq,
        dist_sq=dist2, checks=checks,
    )


def check_euclidean_rsi(x, w: MixingMatrix) -> dict:
    """Secant inequality of unconstrained Euclidean consensus.

    For ambient stacked x (no manifold constraint): the pairing
    <x - xhat, grad> dominates the mu L/(mu+L), 1/(mu+L) combination, and
    mu ||x - xhat|| <= ||grad|| <= L ||x - xhat||.
    """
    x = _entries(x)
    profile = spectral_profile(w, 1)
    mu, big_l = profile.mu, profile.L
    xhat = x.mean(axis=0)
    centered = x - xhat
    g = _grad_from_power(w.entries, x)
    dist2 = float(np.sum(centered**2))
    grad_sq = float(np.sum(g**2))
    inner = float(np.sum(centered * g))
    return {
        "euclidean-RSI": _claim_ge(
            "euclidean-RSI",
            inner,
            mu * big_l / (mu + big_l) * dist2 + grad_sq / (mu + big_l),
        ),
        "grad-lower": _claim_ge(
            "grad-lower", math.sqrt(grad_sq), mu * math.sqrt(dist2)
        ),
        "grad-upper": _claim_ge(
            "grad-upper", big_l * math.sqrt(dist2), math.sqrt(grad_sq)
        ),
    }


def check_grad_bounds(state, w: MixingMatrix, t: int,
                      params: RegionParams | None = None, wt=None,
                      profile=None) -> dict:
    """Gradient norm bounds: the blocks' sum against the squared consensus
    distance, the total norm against the objective, and (inside the
    blockwise region) the per-block cap 2 delta2."""
    x = _entries(state)
    n, _, r = x.shape
    params = params or RegionParams.defaults(r, n)
    wt = _power_entries(w, t, wt)
    profile = profile or spectral_profile(w, t)
    _, rg = _grad_pair(x, wt)
    phi = _phi_pairwise(x, wt)
    xbar = manifold.iam(x)
    dist2 = float(np.sum((x - xbar) ** 2))
    distinf = float(np.max(np.sqrt(np.sum((x - xbar) ** 2, axis=(1, 2)))))
    out = {
        "grad-sum": _claim_ge(
            "grad-sum", profile.L_t * dist2, float(np.linalg.norm(rg.sum(axis=0)))
        ),
        "grad-vs-phi": _claim_ge(
            "grad-vs-phi", 2.0 * profile.L_t * phi, float(np.sum(rg**2))
        ),
    }
    if distinf <= params.delta2:
        worst_block = float(np.max(np.sqrt(np.sum(rg**2, axis=(1, 2)))))
        out["grad-blockwise"] = _claim_ge(
            "grad-blockwise", 2.0 * params.delta2, worst_block
        )
    else:
        out["grad-blockwise"] = _skip("grad-blockwise", "state outside N_2")
    return out


def check_mean_iam(state) -> dict:
    """Euclidean-mean versus induced-mean relations.

    The sandwich (1/2)||x - xbar||^2 <= ||x - xhat||^2 <= ||x - xbar||^2
    holds everywhere; the quadratic drift bound ||xbar - xhat|| <=
    2 sqrt(r) ||x - xbar||^2 / N and the refined lower bound need
    ||x - xbar||^2 <= N/2 and are skipped outside it.
    """
    x = _entries(state)
    n, _, r = x.shape
    xhat = x.mean(axis=0)
    hat2 = float(np.sum((x - xhat) ** 2))
    try:
        xbar = manifold.iam(x)
    except manifold.DegenerateMeanError:
        reason = "degenerate Euclidean mean (no induced mean)"
        return {name: _skip(name, reason)
                for name in ("sandwich-lower", "sandwich-upper", "mean-drift",
                             "refined-lower")}
    bar2 = float(np.sum((x - xbar) ** 2))
    out = {
        "sandwich-lower": _claim_ge("sandwich-lower", hat2, 0.5 * bar2),
        "sandwich-upper": _claim_ge("sandwich-upper", bar2, hat2),
    }
    if bar2 <= n / 2.0:
        drift = float(np.linalg.norm(xbar - xhat))
        out["mean-drift"] = _claim_ge(
            "mean-drift", 2.0 * math.sqrt(r) * bar2 / n, drift
        )
        out["refined-lower"] = _claim_ge(
            "refined-lower", hat2, bar2 - 4.0 * r * bar2**2 / n
        )
    else:
        reason = "||x - xbar||^2 > N/2"
        out["mean-drift"] = _skip("mean-drift", reason)
        out["refined-lower"] = _skip("refined-lower", reason)
    return out


def check_key_relation(state, other, w: MixingMatrix, t: int, wt=None) -> KeyRelation:
    """Identity <grad, y - x> = <egrad, y - x> + quartic correction.

    Returns the identity residual together with the nonnegative
    correction term and the one-sided consequence
    <egrad, y - x> <= <grad, y - x>.
    """
    x = _entries(state)
    y = _entries(other)
    if x.shape != y.shape:
        raise ValueError(f"state shapes differ: {x.shape} vs {y.shape}")
    wt = _power_entries(w, t, wt)
    g, rg = _grad_pair(x, wt)
    step = y - x
    lhs = float(np.sum(rg * step))
    euclid = float(np.sum(g * step))
    pair_diffs = x[:, None] - x[None, :]
    grams = np.einsum("ijdk,ijdl->ijkl", pair_diffs, pair_diffs)
    weighted = np.einsum("ij,ijkl->ikl", wt, grams)
    step_grams = np.einsum("idk,idl->ikl", step, step)
    correction = 0.25 * float(np.sum(weighted * step_grams))
    residual = abs(lhs - (euclid + correction))
    inequality = _claim_ge("euclid-le-riemann", lhs, euclid)
    return KeyRelation(residual=residual, correction=correction, inequality=inequality)


def check_descent(state, other, w: MixingMatrix, t: int, wt=None,
                  profile=None) -> CheckResult:
    """Descent lemma: phi(y) - phi(x) - <grad(x), y - x> <= (L_t/2)||y - x||^2."""
    x = _entries(state)
    y = _entries(other)
    wt = _power_entries(w, t, wt)
    profile = profile or spectral_profile(w, t)
    _, rg = _grad_pair(x, wt)
    gap = (
        _phi_pairwise(y, wt)
        - _phi_pairwise(x, wt)
        - float(np.sum(rg * (y - x)))
    )
    return _claim_ge("descent", profile.L_t / 2.0 * float(np.sum((y - x) ** 2)), gap)


def check_polar_perturbation(state, other, params: RegionParams | None = None) -> CheckResult:
    """Polar-factor perturbation: for two configurations inside the distance
    region, ||xbar - ybar|| <= ||xhat - yhat|| / (1 - 2 delta1^2)."""
    x = _entries(state)
    y = _entries(other)
    n, _, r = x.shape
    params = params or RegionParams.defaults(r, n)
    try:
        xbar, ybar = manifold.iam(x), manifold.iam(y)
    except manifold.DegenerateMeanError:
        return _skip("polar-perturbation", "degenerate Euclidean mean")
    cap = n * params.delta1**2
    if float(np.sum((x - xbar) ** 2)) > cap or float(np.sum((y - ybar) ** 2)) > cap:
        return _skip("polar-perturbation", "a state is outside N_1")
    lhs = float(np.linalg.norm(xbar - ybar))
    rhs = float(np.linalg.norm(x.mean(axis=0) - y.mean(axis=0)))
    return _claim_ge(
        "polar-perturbation", rhs / (1.0 - 2.0 * params.delta1**2), lhs
    )


def check_step_mean_drift(state, next_state, w: MixingMatrix, t: int, alpha: float,
                          params: RegionParams | None = None, retraction_m: float = 1.0,
                          wt=None, profile=None) -> CheckResult:
    """Consecutive-iterate mean drift along an actual update.

    For x_k in the intersection region and x_{k+1} in the distance region,
    ||xbar_k - xbar_{k+1}|| <= L_t/(1-2 delta1^2) (alpha + 2 M alpha^2 L_t)/N
    ||x_k - xbar_k||^2, with M the retraction's second-order constant.
    """
    x = _entries(state)
    y = _entries(next_state)
    n, _, r = x.shape
    params = params or RegionParams.defaults(r, n)
    profile = profile or spectral_profile(w, t)
    try:
        xbar, ybar = manifold.iam(x), manifold.iam(y)
    except manifold.DegenerateMeanError:
        return _skip("step-mean-drift", "degenerate Euclidean mean")
    dist2 = float(np.sum((x - xbar) ** 2))
    distinf = float(np.max(np.sqrt(np.sum((x - xbar) ** 2, axis=(1, 2)))))
    if dist2 > n * params.delta1**2 or distinf > params.delta2:
        return _skip("step-mean-drift", "x_k outside N_R")
    if float(np.sum((y - ybar) ** 2)) > n * params.delta1**2:
        return _skip("step-mean-drift", "x_{k+1} outside N_1")
    l_t = profile.L_t
    bound = (
        l_t / (1.0 - 2.0 * params.delta1**2)
        * (alpha + 2.0 * retraction_m * alpha**2 * l_t) / n * dist2
    )
    return _claim_ge("step-mean-drift", bound, float(np.linalg.norm(xbar - ybar)))


def check_tv_bound(state, w: MixingMatrix, t: int,
                   params: RegionParams | None = None, wt=None,
                   profile=None) -> TvBound:
    """Row-deviation bound max_i ||sum_j ((W^t)_ij - 1/N) x_j|| <= delta2/2.

    Certified only for states in the blockwise region and t at least the
    multi-step depth; the values (and the intermediate bound
    sqrt(N) sigma2^t delta2) are reported even when skipped, which shows
    why small t fails.
    """
    x = _entries(state)
    n, _, r = x.shape
    params = params or RegionParams.defaults(r, n)
    wt = _power_entries(w, t, wt)
    profile = profile or spectral_profile(w, 1)
    mixed = np.tensordot(wt - 1.0 / n, x, axes=(1, 0))
    lhs = float(np.max(np.sqrt(np.sum(mixed**2, axis=(1, 2)))))
    intermediate = math.sqrt(n) * profile.sigma2**t * params.delta2
    bound = params.delta2 / 2.0
    try:
        xbar = manifold.iam(x)
        distinf = float(np.max(np.sqrt(np.sum((x - xbar) ** 2, axis=(1, 2)))))
    except manifold.DegenerateMeanError:
        return TvBound(lhs, bound, intermediate,
                       _skip("tv-bound", "degenerate Euclidean mean"))
    if distinf > params.delta2:
        return TvBound(lhs, bound, intermediate,
                       _skip("tv-bound", "state outside N_2"))
    if t < min_multistep_t(w):
        return TvBound(lhs, bound, intermediate,
                       _skip("tv-bound", f"t={t} below multi-step depth"))
    return TvBound(lhs, bound, intermediate, _claim_ge("tv-bound", bound, lhs))


def classify_critical(state, w: MixingMatrix, t: int = 1, tol_grad: float | None = None,
                      wt=None) -> str:
    """Optimality class of a (near-)critical configuration.

    'not_critical' when the Riemannian gradient exceeds tol_grad
    (default 1e-8 sqrt(N r)); otherwise 'global_optimum' exactly when the
    worst blockwise distance to the induced mean is below sqrt(2)
    (equivalently min_i <x_i, xbar> > r - 1), else 'outside_L'.
    """
    x = _entries(state)
    n, _, r = x.shape
    if tol_grad is None:
        tol_grad = 1e-8 * math.sqrt(n * r)
    wt = _power_entries(w, t, wt)
    _, rg = _grad_pair(x, wt)
    if float(np.linalg.norm(rg)) > tol_grad:
        return "not_critical"
    xbar = manifold.iam(x)
    distinf = float(np.max(np.sqrt(np.sum((x - xbar) ** 2, axis=(1, 2)))))
    return "global_optimum" if distinf < math.sqrt(2.0) else "outside_L"


def estimate_rate(trace_or_values, window_fraction: float = 0.2,
                  targets: dict | None = None, min_length: int = 50) -> RateEstimate:
    """Geometric-mean per-step ratio of sqrt(consensus_sq) over the final
    window of a converged trace.

    Asymptotic-rate claims are terminal-phase claims, so only the last
    window_fraction of the pre-stop iterations enters. Raises ValueError
    for traces shorter than min_length or with nonpositive distances in
    the window. The caller supplies theoretical targets (the trace does
    not know its graph).
    """
    if hasattr(trace_or_values, "column"):
        values = trace_or_values.column("consensus_sq")
    else:
        values = np.asarray(list(trace_or_values), dtype=float)
    if len(values) < min_length:
        raise ValueError(
            f"trace too short for rate estimation: {len(values)} < {min_length}"
        )
    last = len(values) - 1
    start = int(math.floor((1.0 - window_fraction) * last))
    start = min(max(start, 0), last - 1)
    window = values[start : last + 1]
    if np.any(window <= 0) or not np.all(np.isfinite(window)):
        raise ValueError("window contains nonpositive or nonfinite distances")
    steps = last - start
    ratio = float((window[-1] / window[0]) ** (1.0 / (2.0 * steps)))
    return RateEstimate(
        per_step_ratio=ratio,
        window=(start, last),
        theoretical_targets=dict(targets or {}),
    )
