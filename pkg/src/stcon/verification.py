"""Seeded verification campaigns over the package's numerical claims.

Each suite draws its samples from a master seed, evaluates a family of
identities/inequalities, and reports one line per check in the
machine-readable format

    check_name,config_id,samples,passes,skips,min_slack

where min_slack is the worst observed margin (negative means a
violation). Checks whose preconditions fail count as skips, never as
passes. Campaign sampling is deterministic given the master seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import analysis, manifold
from .analysis import RegionParams
from .consensus import (
    NetworkState,
    RunConfig,
    RunStatus,
    _grad_from_power,
    _grad_multistep,
    drcs_step,
    run_drcs,
    run_euclidean_pgd,
)
from .message_passing import node_sim_run
from .network import (
    GraphSpec,
    matrix_power,
    metropolis_matrix,
    min_multistep_t,
    ring_matrix,
    spectral_profile,
)
from .sampling import (
    hemisphere_start,
    perturbed_consensus,
    random_state,
    sample_in_region,
)

REPORT_HEADER = "check_name,config_id,samples,passes,skips,min_slack"


@dataclass
class CheckLine:
    check_name: str
    config_id: str
    samples: int
    passes: int
    skips: int
    min_slack: float

    @property
    def fails(self) -> int:
        return self.samples - self.passes - self.skips

    def format(self) -> str:
        return (
            f"{self.check_name},{self.config_id},{self.samples},"
            f"{self.passes},{self.skips},{self.min_slack!r}"
        )


class _Tally:
    """Accumulates pass/skip/slack over a campaign's samples."""

    def __init__(self, name: str, config_id: str):
        self.name = name
        self.config_id = config_id
        self.samples = 0
        self.passes = 0
        self.skips = 0
        self.min_slack = math.inf

    def add_slack(self, slack: float, tol: float = 0.0):
        slack = float(slack)
        self.samples += 1
        self.min_slack = min(self.min_slack, slack)
        if slack >= -tol:
            self.passes += 1

    def add_result(self, result: analysis.CheckResult):
        self.samples += 1
        if result.skipped:
            self.skips += 1
            return
        if not math.isnan(result.slack):
            self.min_slack = min(self.min_slack, result.slack)
        if result.passed:
            self.passes += 1

    def add_skip(self):
        self.samples += 1
        self.skips += 1

    def line(self) -> CheckLine:
        slack = self.min_slack if self.min_slack is not math.inf else float("nan")
        return CheckLine(self.name, self.config_id, self.samples,
                         self.passes, self.skips, slack)


def _random_tangent(x, rng, norm):
    xi = manifold.tangent_project(x, rng.standard_normal(x.shape))
    return xi / np.linalg.norm(xi) * norm


def manifold_suite(seed: int = 0, samples: int = 1000) -> list:
    """Projection identities and retraction bounds on St(5, 2)."""
    rng = np.random.default_rng(seed)
    cid = "st(5,2)"
    split = _Tally("projection_split", cid)
    second = _Tally("projection_second_order", cid)
    polar_m1 = _Tally("polar_second_order_m1", cid)
    nonexp = _Tally("polar_nonexpansive", cid)
    qr_bound = _Tally("qr_second_order", cid)
    routes = _Tally("polar_routes_agree", cid)
    for _ in range(samples):
        x = manifold.random_stiefel(5, 2, rng)
        v = rng.standard_normal((5, 2))
        recon = manifold.tangent_project(x, v) + manifold.normal_project(x, v)
        split.add_slack(1e-13 - float(np.linalg.norm(recon - v)))

        y = manifold.random_stiefel(5, 2, rng)
        gap = np.linalg.norm(manifold.tangent_project(x, x - y) - (x - y))
        second.add_slack(0.5 * float(np.linalg.norm(x - y) ** 2) - gap, tol=1e-12)

        xi = _random_tangent(x, rng, rng.uniform(0.0, 1.0))
        moved = manifold.polar_retract(x, xi)
        polar_m1.add_slack(
            float(np.linalg.norm(xi)) ** 2 - float(np.linalg.norm(moved - (x + xi))),
            tol=1e-13,
        )
        nonexp.add_slack(
            float(np.linalg.norm(x + xi - y)) - float(np.linalg.norm(moved - y)),
            tol=1e-13,
        )

        xi_half = _random_tangent(x, rng, rng.uniform(0.0, 0.5))
        qr_moved = manifold.qr_retract(x, xi_half)
        qr_bound.add_slack(
            math.sqrt(10.0) / 4.0 * float(np.linalg.norm(xi_half)) ** 2
            - float(np.linalg.norm(qr_moved - (x + xi_half))),
            tol=1e-13,
        )

        xi_big = _random_tangent(x, rng, rng.uniform(0.0, 3.0))
        diff = np.max(
            np.abs(
                manifold.polar_retract(x, xi_big)
                - manifold.polar_retract_factor(x, xi_big)
            )
        )
        routes.add_slack(1e-12 - float(diff))

    chain = []
    for name in ("sandwich-lower", "sandwich-upper", "mean-drift", "refined-lower"):
        chain.append(_Tally(f"mean_iam_{name}", "st(5,2)^6"))
    for _ in range(samples):
        state = perturbed_consensus(6, 5, 2, scale=0.9, rng=rng)
        out = analysis.check_mean_iam(state)
        for tally, name in zip(chain, ("sandwich-lower", "sandwich-upper",
                                       "mean-drift", "refined-lower")):
            tally.add_result(out[name])

    tallies = [split, second, polar_m1, nonexp, qr_bound, routes] + chain
    return [t.line() for t in tallies]


def network_suite(seed: int = 0, samples: int = 50) -> list:
    """Spectral scaling, total-variation rows and the gap/sigma2 ordering."""
    rng = np.random.default_rng(seed)
    out = []

    w = ring_matrix(30)
    s2 = spectral_profile(w, 1).sigma2
    power = _Tally("sigma2_power_scaling", "ring30")
    for t in range(1, min(samples, 50) + 1):
        st = spectral_profile(matrix_power(w, t), 1).sigma2
        power.add_slack(1e-10 - abs(st - s2**t))
    out.append(power.line())

    tv = _Tally("tv_row_bound", "ring30")
    for t in (1, 10, 164):
        wt = matrix_power(w, t).entries
        deviation = float(np.max(np.sum(np.abs(wt - 1.0 / 30.0), axis=1)))
        tv.add_slack(math.sqrt(30.0) * s2**t - deviation, tol=1e-12)
    out.append(tv.line())

    lazy_pos = _Tally("lazy_eigenvalues_nonnegative", "metropolis")
    gap = _Tally("gap_ratio_vs_sigma2", "metropolis")
    for _ in range(samples):
        n = int(rng.integers(4, 14))
        a = (rng.uniform(size=(n, n)) < 0.4).astype(float)
        a = np.triu(a, 1)
        a = a + a.T
        a[np.arange(n - 1), np.arange(1, n)] = 1.0
        a[np.arange(1, n), np.arange(n - 1)] = 1.0
        m = metropolis_matrix(a)
        lam_lazy = np.linalg.eigvalsh((m.entries + np.eye(n)) / 2.0)
        lazy_pos.add_slack(float(np.min(lam_lazy)), tol=1e-12)
        p = spectral_profile(m, 1)
        gap.add_slack(p.sigma2 - (p.L - p.mu) / (p.L + p.mu), tol=1e-12)
    out.append(lazy_pos.line())
    out.append(gap.line())
    return out


def consensus_suite(seed: int = 0, samples: int = 1000) -> list:
    """Gradient-route equivalences, execution-mode agreement, descent and
    decrease along trajectories, hemisphere invariance, random-start
    convergence."""
    rng = np.random.default_rng(seed)
    out = []

    w8 = ring_matrix(8)
    wt10 = matrix_power(w8, 10).entries
    recursion = _Tally("multistep_vs_matrix_power", "ring8_t10")
    for _ in range(min(samples, 200)):
        x = random_state(8, 4, 2, rng)
        diff = np.max(np.abs(_grad_multistep(w8.entries, x, 10)
                             - _grad_from_power(wt10, x)))
        recursion.add_slack(1e-12 - float(diff))
    out.append(recursion.line())

    routes = _Tally("descent_vs_ascent_route", "ring8_t3")
    wt3 = matrix_power(w8, 3).entries
    for _ in range(min(samples, 200)):
        x = random_state(8, 4, 2, rng)
        descent_route = manifold.polar_retract(
            x, -0.8 * manifold.tangent_project(x, _grad_from_power(wt3, x))
        )
        ascent_route = manifold.polar_retract(
            x, 0.8 * manifold.tangent_project(x, np.tensordot(wt3, x, axes=(1, 0)))
        )
        routes.add_slack(1e-13 - float(np.max(np.abs(descent_route - ascent_route))))
    out.append(routes.line())

    cfg = RunConfig(graph=GraphSpec("ring", 8), d=3, r=2, t=3, alpha_rule="unit",
                    max_iters=50, stop_tol=1e-300, seed=seed)
    matrix_run = run_drcs(cfg, record_states=True)
    node_run = node_sim_run(cfg, record_states=True)
    modes = _Tally("mode_equivalence", "ring8_t3")
    for a, b in zip(matrix_run.states, node_run.states):
        modes.add_slack(1e-12 - float(np.max(np.abs(a - b))))
    out.append(modes.line())

    locality = _Tally("message_locality", "ring8_t3")
    locality.add_slack(-float(len(node_run.log.non_neighbor_messages())))
    out.append(locality.line())

    counting = _Tally("message_count", "ring8_t3")
    expected = cfg.t * 2 * 8 * (node_run.trace.iterations + 1)
    counting.add_slack(-abs(node_run.log.total - expected))
    out.append(counting.line())

    feas = _Tally("iterate_feasibility", "ring8")
    desc = _Tally("descent_along_trajectory", "ring8")
    cfg2 = RunConfig(graph=GraphSpec("ring", 8), d=5, r=2, alpha_rule="unit",
                     max_iters=400, stop_tol=2e-16, seed=seed + 1)
    traj = run_drcs(cfg2, record_states=True)
    for x in traj.states:
        feas.add_slack(1e-12 - manifold.orthonormality_defect(x))
    for x, y in zip(traj.states[:-1], traj.states[1:]):
        desc.add_result(analysis.check_descent(
            NetworkState(x), NetworkState(y), w8, 1))
    out.append(feas.line())
    out.append(desc.line())

    # sufficient decrease with the analytic gradient cap G <= 2 sqrt(N r)
    profile8 = spectral_profile(w8, 1)
    g_cap = 2.0 * math.sqrt(8 * 2)
    beta = 0.5
    alpha = 0.99 * (1.0 - beta) / (g_cap + profile8.L_t / 2.0)
    cfg3 = RunConfig(graph=GraphSpec("ring", 8), d=5, r=2,
                     alpha_rule=f"custom:{alpha}", max_iters=300,
                     stop_tol=2e-16, seed=seed + 2)
    traj3 = run_drcs(cfg3, record_states=True)
    decrease = _Tally("sufficient_decrease", "ring8")
    for x, y in zip(traj3.states[:-1], traj3.states[1:]):
        phi_x = analysis.phi_value(x, w8, 1)
        phi_y = analysis.phi_value(y, w8, 1)
        g = manifold.tangent_project(x, x - np.tensordot(w8.entries, x, axes=(1, 0)))
        grad_sq = float(np.sum(g**2))
        decrease.add_slack(
            phi_x - alpha * beta * grad_sq - phi_y,
            tol=1e-10 * max(1.0, phi_x),
        )
    out.append(decrease.line())

    # monotone consensus distance inside the intersection region, alpha <= Phi/L_t
    monotone = _Tally("monotone_consensus_distance", "ring8_t8")
    t8 = min_multistep_t(w8)
    profile_t8 = spectral_profile(w8, t8)
    alpha_m = 1.0 / profile_t8.L_t
    wt8 = matrix_power(w8, t8)
    for s in sample_in_region(w8, t8, 5, 2, "NR", min(samples, 200), rng=rng,
                              wt=wt8):
        before = float(np.linalg.norm(s - manifold.iam(s)))
        stepped = drcs_step(NetworkState(s), w8, t8, alpha_m).entries
        after = float(np.linalg.norm(stepped - manifold.iam(stepped)))
        monotone.add_slack(before - after, tol=1e-12)
    out.append(monotone.line())

    # hemisphere invariance on the sphere, r = 1
    hemi = _Tally("hemisphere_invariance", "ring10_s2")
    for run_seed in range(50):
        x0, pole, delta = hemisphere_start(10, 3, margin=0.15,
                                           rng=seed * 1000 + run_seed)
        cfg_h = RunConfig(graph=GraphSpec("ring", 10), d=3, r=1,
                          alpha_rule="unit", max_iters=1000, stop_tol=1e-300,
                          seed=run_seed)
        res = run_drcs(cfg_h, record_states=True,
                       initial_state=NetworkState(x0))
        worst = min(
            float(np.min(np.sum(x * pole, axis=(1, 2)))) for x in res.states
        )
        hemi.add_slack(worst - delta, tol=1e-12)
    out.append(hemi.line())

    # random restarts all reach consensus (r <= 2d/3 - 1 holds for d=5, r=2)
    restarts = _Tally("random_restart_consensus", "ring8_d5_r2")
    for run_seed in range(100):
        cfg_r = RunConfig(graph=GraphSpec("ring", 8), d=5, r=2,
                          alpha_rule="one_over_L", max_iters=5000,
                          stop_tol=2e-16, seed=run_seed)
        res = run_drcs(cfg_r)
        converged = res.trace.status is RunStatus.CONVERGED
        restarts.add_slack(1.0 if converged else -1.0)
    out.append(restarts.line())
    return out


def _rsi_campaign(w, t, d, r, region, samples, rng) -> list:
    cid = f"ring{w.N}_t{t}_{region}"
    wt = matrix_power(w, t)
    profile = spectral_profile(w, t)
    params = RegionParams.defaults(r, w.N)
    names = ("RSI-1", "RSI-2", "RSI-I", "QG", "QG'", "ERB", "dominance")
    tallies = {name: _Tally(name, cid) for name in names}
    identity = _Tally("rsi_decomposition_identity", cid)
    states = sample_in_region(w, t, d, r, region, samples, rng=rng,
                              params=params, wt=wt, profile=profile)
    for s in states:
        rep = analysis.check_rsi(s, w, t, params=params, wt=wt, profile=profile)
        identity.add_slack(1e-10 - rep.identity_residual)
        for name in names:
            tallies[name].add_result(rep.checks[name])
    return [identity.line()] + [tallies[name].line() for name in names]


def rsi_suite(seed: int = 0, samples: int = 1000) -> list:
    """In-region secant-inequality family plus the supporting identities,
    bounds and perturbation lemmas."""
    rng = np.random.default_rng(seed)
    out = []

    for n in (8, 30):
        w = ring_matrix(n)
        for t in (1, min_multistep_t(w)):
            for region in ("NR", "Nl"):
                out.extend(_rsi_campaign(w, t, 5, 2, region, samples, rng))

    w6 = ring_matrix(6)
    phi_h = _Tally("phi_plus_h_identity", "ring6")
    key_rel = _Tally("key_relation_identity", "ring6")
    key_ineq = _Tally("key_relation_inequality", "ring6")
    key_corr = _Tally("key_relation_correction_sign", "ring6")
    for _ in range(samples):
        s = random_state(6, 4, 2, rng)
        total = analysis.phi_value(s, w6, 3) + analysis.h_value(s, w6, 3)
        phi_h.add_slack(1e-10 - abs(total - 6 * 2 / 2.0))
        y = random_state(6, 4, 2, rng)
        rel = analysis.check_key_relation(s, y, w6, 3)
        key_rel.add_slack(1e-10 - rel.residual)
        key_ineq.add_result(rel.inequality)
        key_corr.add_slack(rel.correction, tol=1e-12)
    out += [phi_h.line(), key_rel.line(), key_ineq.line(), key_corr.line()]

    w30 = ring_matrix(30)
    grad_tallies = {
        name: _Tally(name, "ring30") for name in ("grad-sum", "grad-vs-phi")
    }
    block = _Tally("grad-blockwise", "ring30_near")
    for t in (1, 10):
        wt = matrix_power(w30, t)
        profile = spectral_profile(w30, t)
        for _ in range(samples // 4):
            s = random_state(30, 5, 2, rng)
            res = analysis.check_grad_bounds(s, w30, t, wt=wt, profile=profile)
            grad_tallies["grad-sum"].add_result(res["grad-sum"])
            grad_tallies["grad-vs-phi"].add_result(res["grad-vs-phi"])
        for _ in range(samples // 4):
            s = perturbed_consensus(30, 5, 2, scale=0.04, rng=rng)
            res = analysis.check_grad_bounds(s, w30, t, wt=wt, profile=profile)
            block.add_result(res["grad-blockwise"])
    out += [t.line() for t in grad_tallies.values()] + [block.line()]

    w10 = ring_matrix(10)
    eucl = {name: _Tally(name, "ring10")
            for name in ("euclidean-RSI", "grad-lower", "grad-upper")}
    for _ in range(samples):
        x = rng.standard_normal((10, 3, 2))
        res = analysis.check_euclidean_rsi(x, w10)
        for name, tally in eucl.items():
            tally.add_result(res[name])
    out += [t.line() for t in eucl.values()]

    perturb = _Tally("polar_perturbation", "ring8")
    w8 = ring_matrix(8)
    for _ in range(samples // 2):
        x = perturbed_consensus(8, 5, 2, scale=0.02, rng=rng)
        y = perturbed_consensus(8, 5, 2, scale=0.02, rng=rng,
                                center=manifold.iam(x))
        perturb.add_result(analysis.check_polar_perturbation(x, y))
    out.append(perturb.line())

    tvb = _Tally("tv_bound_states", "ring30_t164")
    wt164 = matrix_power(w30, 164)
    p164 = spectral_profile(w30, 1)
    for _ in range(samples // 4):
        s = perturbed_consensus(30, 5, 2, scale=0.05, rng=rng)
        res = analysis.check_tv_bound(s, w30, 164, wt=wt164, profile=p164)
        tvb.add_result(res.check)
    out.append(tvb.line())

    drift = _Tally("step_mean_drift", "ring8_t8")
    t8 = min_multistep_t(w8)
    profile8 = spectral_profile(w8, t8)
    alpha = min(1.0, 1.0 / profile8.L_t)
    for start_seed in range(10):
        start = sample_in_region(w8, t8, 5, 2, "NR", 1,
                                 rng=rng)[0]
        cfg = RunConfig(graph=GraphSpec("ring", 8), d=5, r=2, t=t8,
                        alpha_rule=f"custom:{alpha}", max_iters=60,
                        stop_tol=2e-16, seed=start_seed)
        res = run_drcs(cfg, record_states=True, initial_state=NetworkState(start))
        for x, y in zip(res.states[:-1], res.states[1:]):
            drift.add_result(analysis.check_step_mean_drift(
                NetworkState(x), NetworkState(y), w8, t8, alpha))
    out.append(drift.line())
    return out


def rates_suite(seed: int = 0, samples: int = 150) -> list:
    """Baseline and manifold convergence-rate checks."""
    rng = np.random.default_rng(seed)
    out = []

    w10 = ring_matrix(10)
    p10 = spectral_profile(w10, 1)
    contraction = _Tally("pgd_alpha1_contraction", "ring10")
    x0 = rng.standard_normal((10, 3, 2))
    history, _ = run_euclidean_pgd(x0, w10, alpha=1.0, iters=min(samples, 150))
    values = np.sqrt(history)
    for a, b in zip(values[:-1], values[1:]):
        contraction.add_slack(p10.sigma2 + 1e-6 - b / a)
    out.append(contraction.line())

    opt_rate = _Tally("pgd_optimal_rate", "ring10")
    history2, _ = run_euclidean_pgd(x0, w10, alpha=2.0 / (p10.mu + p10.L),
                                    iters=120)
    est = analysis.estimate_rate(history2, window_fraction=0.2)
    target = (p10.L - p10.mu) / (p10.L + p10.mu)
    opt_rate.add_slack(0.05 - abs(est.per_step_ratio / target - 1.0))
    out.append(opt_rate.line())

    w30 = ring_matrix(30)
    p30 = spectral_profile(w30, 1)
    for rule, target, name in (
        ("unit", p30.sigma2, "drcs_rate_alpha1"),
        ("two_over_mu_plus_L", p30.rate_ratio, "drcs_rate_optimal"),
    ):
        tally = _Tally(name, "ring30")
        cfg = RunConfig(graph=GraphSpec("ring", 30), d=5, r=2,
                        alpha_rule=rule, seed=seed + 7)
        res = run_drcs(cfg)
        est = analysis.estimate_rate(res.trace, window_fraction=0.2)
        tally.add_slack(0.05 - abs(est.per_step_ratio / target - 1.0))
        out.append(tally.line())

    speedup = _Tally("multistep_speedup", "ring30")
    runs = {}
    for t in (1, 10):
        cfg = RunConfig(graph=GraphSpec("ring", 30), d=5, r=2, t=t,
                        alpha_rule="unit", seed=seed + 7)
        runs[t] = run_drcs(cfg).trace.iterations
    ratio = runs[10] / runs[1]
    speedup.add_slack(min(ratio - 1.0 / 20.0, 1.0 / 5.0 - ratio))
    out.append(speedup.line())
    return out


SUITES = {
    "manifold": manifold_suite,
    "network": network_suite,
    "consensus": consensus_suite,
    "rsi": rsi_suite,
    "rates": rates_suite,
}


def run_suites(names, seed: int = 0, samples: int = 1000) -> list:
    """Run the selected suites ('all', 'none', or suite names)."""
    if isinstance(names, str):
        names = [names]
    selected = []
    for name in names:
        if name == "none":
            continue
        if name == "all":
            selected.extend(SUITES)
        elif name in SUITES:
            selected.append(name)
        else:
            raise ValueError(f"unknown suite {name!r}; choose from "
                             f"{sorted(SUITES)} or 'all'/'none'")
    lines = []
    for name in selected:
        lines.extend(SUITES[name](seed=seed, samples=samples))
    return lines


def format_report(lines) -> str:
    return "\n".join([REPORT_HEADER] + [line.format() for line in lines]) + "\n"


def has_failures(lines) -> bool:
    return any(line.fails > 0 for line in lines)
