"""The distributed Riemannian consensus iteration and its Euclidean baseline.

Implements the per-node update

    x_{i,k+1} = Retr_{x_{i,k}}( -alpha * P_T( grad_i ) )

where grad_i is the multi-step Euclidean consensus gradient
x_i - sum_j (W^t)_ij x_j, assembled by t rounds of neighbour mixing, and
P_T is the tangent projection at x_i. Two execution modes produce the
same trajectory: a global matrix form (this module) and a message-passing
node simulation (stcon.message_passing). A projected-gradient Euclidean
consensus baseline is included for rate comparisons.

The matrix mode is single-threaded and deterministic given the seed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import manifold
from .manifold import DegenerateMeanError
from .network import GraphSpec, MixingMatrix, SpectralProfile, spectral_profile

GRAD_SUM_TOL = 1e-10
STATE_TOL = 1e-12

STAGNATION_WINDOW = 500
STAGNATION_IMPROVEMENT = 0.01
STAGNATION_LEVEL_FACTOR = 1e6

ALPHA_RULES = ("one_over_L", "two_over_mu_plus_L", "two_over_L", "unit")


class RunStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    STAGNATED = "stagnated"
    DEGENERATE_MEAN = "degenerate_mean"


@dataclass(frozen=True)
class NetworkState:
    """Stacked configuration of N agents on St(d, r), shape (N, d, r).

    Every block is validated against the orthonormality tolerance at
    construction; the array is stored read-only.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(np.asarray(self.entries, dtype=float))
        if entries.ndim != 3:
            raise ValueError(f"expected shape (N, d, r), got {entries.shape}")
        n, d, r = entries.shape
        if n < 2:
            raise ValueError(f"need at least 2 agents, got N={n}")
        if r > d:
            raise ValueError(f"block shape invalid: r={r} > d={d}")
        defect = manifold.orthonormality_defect(entries)
        if defect > manifold.ORTHO_TOL:
            raise ValueError(
                f"a block is not orthonormal: worst ||x^T x - I||_F = {defect:.3e}"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.entries.shape[1]

    @property
    def r(self) -> int:
        return self.entries.shape[2]

    def block(self, i: int) -> np.ndarray:
        return self.entries[i]

    @property
    def blocks(self) -> list:
        return [manifold.StiefelPoint(b) for b in self.entries]

    @classmethod
    def from_blocks(cls, blocks) -> "NetworkState":
        arrays = [np.asarray(getattr(b, "entries", b), dtype=float) for b in blocks]
        return cls(np.stack(arrays))

    @classmethod
    def consensus(cls, point, N: int) -> "NetworkState":
        p = np.asarray(getattr(point, "entries", point), dtype=float)
        return cls(np.broadcast_to(p, (N,) + p.shape).copy())

    @classmethod
    def random(cls, N: int, d: int, r: int, rng=None) -> "NetworkState":
        rng = np.random.default_rng(rng)
        return cls(np.stack([manifold.random_stiefel(d, r, rng) for _ in range(N)]))


@dataclass(frozen=True)
class GradientField:
    """Per-agent gradient blocks, tagged 'euclidean' or 'riemannian'.

    Euclidean fields of the consensus objective sum to zero across agents
    (rows of I - W^t sum to zero); Riemannian fields are tangent at the
    base state blockwise. Both facts are enforced at construction.
    """

    entries: np.ndarray
    kind: str
    base: NetworkState

    def __post_init__(self):
        entries = np.array(np.asarray(self.entries, dtype=float))
        if entries.shape != self.base.entries.shape:
            raise ValueError(
                f"gradient shape {entries.shape} does not match state "
                f"{self.base.entries.shape}"
            )
        if self.kind == "euclidean":
            total = float(np.linalg.norm(entries.sum(axis=0)))
            if total > GRAD_SUM_TOL:
                raise ValueError(f"euclidean blocks sum to {total:.3e}, expected 0")
        elif self.kind == "riemannian":
            x = self.base.entries
            sym = np.swapaxes(x, -1, -2) @ entries + np.swapaxes(entries, -1, -2) @ x
            worst = float(np.max(np.sqrt(np.sum(sym**2, axis=(-2, -1)))))
            if worst > GRAD_SUM_TOL:
                raise ValueError(f"a block is not tangent: defect {worst:.3e}")
        else:
            raise ValueError(f"unknown gradient kind {self.kind!r}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def norm_sq(self) -> float:
        return float(np.sum(self.entries**2))


@dataclass(frozen=True)
class RunConfig:
    """One experiment: graph, dimensions, stepsize rule and stopping rules.

    alpha_rule is one of one_over_L, two_over_mu_plus_L, two_over_L, unit,
    or 'custom:<value>'. Rules resolve against the t-adjusted spectral
    profile (1/L_t etc.). stop_tol applies to (1/N)||x - xbar||_F^2.
    """

    graph: GraphSpec
    d: int
    r: int
    t: int = 1
    alpha_rule: str = "one_over_L"
    retraction: str = "polar"
    max_iters: int = 200_000
    stop_tol: float = 2e-16
    seed: int = 0
    mode: str = "matrix"

    def __post_init__(self):
        if self.r > self.d or self.r < 1:
            raise ValueError(f"need 1 <= r <= d, got d={self.d}, r={self.r}")
        if self.t < 1:
            raise ValueError(f"multi-step depth t must be >= 1, got {self.t}")
        if self.stop_tol <= 0:
            raise ValueError("stop_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.retraction not in manifold.RETRACTIONS:
            raise ValueError(f"unknown retraction {self.retraction!r}")
        if self.mode not in ("matrix", "message_passing"):
            raise ValueError(f"unknown mode {self.mode!r}")
        resolve_alpha(self.alpha_rule, None)  # syntax check only


def resolve_alpha(rule: str, profile: SpectralProfile | None) -> float | None:
    """Map a stepsize rule to its value for a given t-adjusted profile.

    With profile None only the syntax is checked (returns None for named
    rules). custom:<x> requires x > 0.
    """
    if rule.startswith("custom:"):
        try:
            value = float(rule.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"cannot parse stepsize rule {rule!r}")
        if value <= 0:
            raise ValueError(f"custom stepsize must be positive, got {value}")
        return value
    if rule not in ALPHA_RULES:
        raise ValueError(f"unknown stepsize rule {rule!r}")
    if profile is None:
        return None
    return {
        "one_over_L": 1.0 / profile.L_t,
        "two_over_mu_plus_L": 2.0 / (profile.mu_t + profile.L_t),
        "two_over_L": 2.0 / profile.L_t,
        "unit": 1.0,
    }[rule]


@dataclass
class TraceRecord:
    """One iteration of a run: objective, gradient norm, consensus distances
    and membership flags for the certified neighbourhoods."""

    k: int
    phi: float
    grad_norm_sq: float
    consensus_sq: float
    consensus_inf: float
    in_N1: bool
    in_N2: bool
    in_NR: bool
    in_Nl: bool


CSV_HEADER = "k,phi,grad_norm_sq,consensus_sq,consensus_inf,in_N1,in_N2,in_NR,in_Nl"


@dataclass
class ConvergenceTrace:
    """Per-iteration record of a run plus its terminal status."""

    records: list = field(default_factory=list)
    status: RunStatus | None = None
    alpha: float = float("nan")

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(rec, name) for rec in self.records], dtype=float)

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    @property
    def iterations(self) -> int:
        """Number of update steps performed (final recorded k)."""
        return self.records[-1].k if self.records else 0

    def to_csv(self, path_or_file):
        """Write the trace; floats use shortest round-trip representation."""
        close = False
        if hasattr(path_or_file, "write"):
            fh = path_or_file
        else:
            fh = open(path_or_file, "w")
            close = True
        try:
            fh.write(CSV_HEADER + "\n")
            for rec in self.records:
                fh.write(
                    f"{rec.k},{rec.phi!r},{rec.grad_norm_sq!r},"
                    f"{rec.consensus_sq!r},{rec.consensus_inf!r},"
                    f"{int(rec.in_N1)},{int(rec.in_N2)},{int(rec.in_NR)},{int(rec.in_Nl)}\n"
                )
        finally:
            if close:
                fh.close()


@dataclass
class RunResult:
    trace: ConvergenceTrace
    final_state: NetworkState
    states: list | None = None  # raw (N, d, r) arrays when recording was requested
    log: object = None  # message log, set by the message-passing mode


# --- array kernels (hot path; public wrappers validate at the boundary) ---


def _mix(w_entries: np.ndarray, x: np.ndarray) -> np.ndarray:
    """sum_j W_ij x_j for stacked blocks x of shape (N, d, r)."""
    return np.tensordot(w_entries, x, axes=(1, 0))


def _grad_onestep(w_entries: np.ndarray, x: np.ndarray) -> np.ndarray:
    return x - _mix(w_entries, x)


def _grad_multistep(w_entries: np.ndarray, x: np.ndarray, t: int) -> np.ndarray:
    """Multi-step consensus gradient by the t-round mixing recursion.

    g^1 = x - Wx, then g^l = g^1 + W g^(l-1), which telescopes to
    x - W^t x.
    """
    g1 = _grad_onestep(w_entries, x)
    g = g1
    for _ in range(t - 1):
        g = g1 + _mix(w_entries, g)
    return g


def _grad_from_power(wt_entries: np.ndarray, x: np.ndarray) -> np.ndarray:
    """x - W^t x evaluated directly from a precomputed power (oracle route)."""
    return x - _mix(wt_entries, x)


def _phi_from_grad(x: np.ndarray, g: np.ndarray) -> float:
    """Objective value via the identity phi = <grad, x>/2 for the
    quadratic consensus objective (equals N r / 2 minus the alignment
    term)."""
    return 0.5 * float(np.sum(x * g))


# --- public operations ---


def _check_dims(state: NetworkState, w: MixingMatrix):
    if w.N != state.N:
        raise ValueError(f"matrix size {w.N} does not match state N={state.N}")


def euclidean_grad_onestep(state: NetworkState, w: MixingMatrix) -> GradientField:
    """One-round Euclidean gradient block x_i - sum_j W_ij x_j."""
    _check_dims(state, w)
    return GradientField(_grad_onestep(w.entries, state.entries), "euclidean", state)


def multistep_grad(state: NetworkState, w: MixingMatrix, t: int) -> GradientField:
    """t-round Euclidean gradient, block i equal to x_i - sum_j (W^t)_ij x_j."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    _check_dims(state, w)
    return GradientField(_grad_multistep(w.entries, state.entries, t), "euclidean", state)


def riemannian_grad(state: NetworkState, eg: GradientField) -> GradientField:
    """Tangent projection of a Euclidean gradient field, blockwise."""
    if eg.kind != "euclidean":
        raise ValueError("expected a Euclidean gradient field")
    projected = manifold.tangent_project(state.entries, eg.entries)
    return GradientField(projected, "riemannian", state)


def drcs_step(
    state: NetworkState,
    w: MixingMatrix,
    t: int,
    alpha: float,
    retraction: str = "polar",
) -> NetworkState:
    """One synchronous update of every agent.

    Each block moves along minus alpha times its projected multi-step
    gradient and is retracted back onto the manifold. A consensus state is
    a fixed point (zero gradient).
    """
    if alpha <= 0:
        raise ValueError(f"stepsize must be positive, got {alpha}")
    g = _grad_multistep(w.entries, state.entries, t)
    rg = manifold.tangent_project(state.entries, g)
    moved = manifold.retract(state.entries, -alpha * rg, retraction)
    return NetworkState(moved)


@dataclass(frozen=True)
class _RegionThresholds:
    """Precomputed constants for the per-iteration membership flags."""

    delta1_sq: float
    delta2: float
    delta3_sq: float
    phi_cap: float  # mu_t / 4

    @classmethod
    def from_profile(cls, profile: SpectralProfile, r: int, N: int):
        delta2 = 1.0 / 6.0
        delta1 = delta2 / (5.0 * np.sqrt(r))
        delta3 = min(1.0 / np.sqrt(N), 1.0 / (4.0 * np.sqrt(r)))
        return cls(delta1**2, delta2, delta3**2, profile.mu_t / 4.0)


class _MatrixEngine:
    """Matrix-form execution: gradients by global mixing, batched retraction."""

    def __init__(self, w: MixingMatrix, t: int, retraction: str, x0: np.ndarray):
        self.w = w.entries
        self.t = t
        self.retraction = retraction
        self.x = x0.copy()
        self._rg = None

    def state(self) -> np.ndarray:
        return self.x.copy()

    def gradients(self):
        g = _grad_multistep(self.w, self.x, self.t)
        rg = manifold.tangent_project(self.x, g)
        self._rg = rg
        return g, rg

    def advance(self, alpha: float):
        self.x = manifold.retract(self.x, -alpha * self._rg, self.retraction)


def _drive(engine, config: RunConfig, profile: SpectralProfile, record_states: bool):
    """Shared outer loop for both execution modes.

    Records one row per iterate (k = 0 included), stops on consensus,
    iteration budget, stagnation of the gradient norm, or a degenerate
    mean, and re-validates feasibility of every iterate.
    """
    alpha = resolve_alpha(config.alpha_rule, profile)
    n = _n_of(engine)
    thresholds = _RegionThresholds.from_profile(profile, config.r, n)
    trace = ConvergenceTrace(alpha=alpha)
    states = [] if record_states else None
    grad_history = []

    for k in range(config.max_iters + 1):
        x = engine.state()
        defect = manifold.orthonormality_defect(x)
        if defect > manifold.ORTHO_TOL:
            raise ArithmeticError(
                f"iterate left the manifold at k={k}: defect {defect:.3e}"
            )
        if record_states:
            states.append(x)
        g, rg = engine.gradients()
        phi = _phi_from_grad(x, g)
        grad_sq = float(np.sum(rg**2))
        grad_history.append(grad_sq)
        try:
            xbar = manifold.iam(x)
        except DegenerateMeanError:
            trace.records.append(
                TraceRecord(k, phi, grad_sq, float("nan"), float("nan"),
                            False, False, False, False)
            )
            trace.status = RunStatus.DEGENERATE_MEAN
            break
        diffs = x - xbar
        dist_sq_total = float(np.sum(diffs**2))
        consensus_sq = dist_sq_total / n
        consensus_inf = float(np.max(np.sqrt(np.sum(diffs**2, axis=(-2, -1)))))
        in_n1 = consensus_sq <= thresholds.delta1_sq
        in_n2 = consensus_inf <= thresholds.delta2
        in_nl = phi <= thresholds.phi_cap and consensus_sq <= thresholds.delta3_sq
        trace.records.append(
            TraceRecord(k, phi, grad_sq, consensus_sq, consensus_inf,
                        in_n1, in_n2, in_n1 and in_n2, in_nl)
        )
        if consensus_sq <= config.stop_tol:
            trace.status = RunStatus.CONVERGED
            break
        if k == config.max_iters:
            trace.status = RunStatus.MAX_ITERS
            break
        if _stagnated(grad_history, k, config.stop_tol):
            trace.status = RunStatus.STAGNATED
            break
        engine.advance(alpha)

    final_state = NetworkState(engine.state())
    return RunResult(trace=trace, final_state=final_state, states=states)


def _n_of(engine) -> int:
    return engine.x.shape[0] if hasattr(engine, "x") else engine.size


def _stagnated(grad_history, k: int, stop_tol: float) -> bool:
    """Divergence detector for stepsizes past the descent threshold.

    Compares the best gradient norm of the two most recent full windows;
    fires when the latest window is both far from criticality
    (> 1e6 * stop_tol) and less than 1% better than the one before.
    """
    w = STAGNATION_WINDOW
    if (k + 1) < 2 * w or (k + 1) % w:
        return False
    recent = min(grad_history[-w:])
    previous = min(grad_history[-2 * w : -w])
    return recent > STAGNATION_LEVEL_FACTOR * stop_tol and recent > (
        1.0 - STAGNATION_IMPROVEMENT
    ) * previous


def run_drcs(config: RunConfig, record_states: bool = False,
             initial_state: NetworkState | None = None) -> RunResult:
    """Run the consensus iteration in matrix mode.

    Starts from a seeded uniform-random configuration unless
    initial_state overrides it. Stops when
    (1/N)||x_k - xbar_k||_F^2 <= stop_tol, at the iteration budget, on
    stagnation, or if the mean degenerates mid-run (status records
    which). Deterministic given the seed. For
    config.mode == 'message_passing' the node simulation is dispatched
    instead (same trace semantics).
    """
    if config.mode == "message_passing":
        from .message_passing import node_sim_run

        return node_sim_run(config, record_states=record_states,
                            initial_state=initial_state)
    w = config.graph.build()
    profile = spectral_profile(w, config.t)
    x0 = initial_state or NetworkState.random(w.N, config.d, config.r, config.seed)
    if x0.N != w.N:
        raise ValueError(f"initial state has N={x0.N}, graph has N={w.N}")
    engine = _MatrixEngine(w, config.t, config.retraction, x0.entries)
    return _drive(engine, config, profile, record_states)


# --- Euclidean projected-gradient baseline ---


def _project_convex(x: np.ndarray, projection) -> np.ndarray:
    """Blockwise projection onto the constraint set: 'identity' or
    ('ball', radius) for radial clipping."""
    if projection == "identity" or projection is None:
        return x
    if isinstance(projection, tuple) and projection[0] == "ball":
        radius = float(projection[1])
        norms = np.sqrt(np.sum(x**2, axis=(-2, -1), keepdims=True))
        scale = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
        return x * scale
    raise ValueError(f"unknown projection {projection!r}")


def euclidean_pgd_step(x, w: MixingMatrix, alpha: float, projection="identity"):
    """One projected-gradient step of Euclidean consensus.

    The gradient is (I - W)x, so the step is the convex combination
    (1 - alpha) x + alpha W x followed by the projection; at alpha = 1
    this is exactly one mixing multiply.
    """
    if alpha <= 0:
        raise ValueError(f"stepsize must be positive, got {alpha}")
    x = np.asarray(getattr(x, "entries", x), dtype=float)
    mixed = _mix(w.entries, x)
    stepped = (1.0 - alpha) * x + alpha * mixed
    return _project_convex(stepped, projection)


def run_euclidean_pgd(x0, w: MixingMatrix, alpha: float, iters: int,
                      projection="identity"):
    """Iterate the baseline and report per-step distances to the mean.

    Returns (consensus_sq list, final x); consensus_sq holds
    (1/N)||x_k - xhat_k||_F^2 for k = 0..iters.
    """
    x = np.array(np.asarray(getattr(x0, "entries", x0), dtype=float))
    n = x.shape[0]
    history = []
    for _ in range(iters):
        xhat = x.mean(axis=0)
        history.append(float(np.sum((x - xhat) ** 2)) / n)
        x = euclidean_pgd_step(x, w, alpha, projection)
    xhat = x.mean(axis=0)
    history.append(float(np.sum((x - xhat) ** 2)) / n)
    return history, x
