"""Experiment orchestration: single runs, the two-graph stepsize
comparison bundle, spectra tables and their file artifacts.

Every run writes one CSV trace; bundles add a summary table (status,
iterations-to-stop, terminal rate estimate and the theoretical targets
per run), a rendered PNG and a gnuplot script over the same CSVs.
Identical invocations produce byte-identical CSVs and summaries.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

from . import plotting
from .analysis import RegionParams, estimate_rate
from .consensus import NetworkState, RunConfig, RunResult, run_drcs
from .network import GraphSpec, min_multistep_t, spectral_profile

STEPSIZE_RULES = ("one_over_L", "two_over_mu_plus_L", "two_over_L", "unit")

SUMMARY_HEADER = (
    "name,graph,t,alpha_rule,alpha,status,iterations,rate_estimate,"
    "target_sigma2_t,target_gap_ratio,target_theorem_sq"
)


@dataclass
class ExperimentSpec:
    """A named batch of runs sharing graph dimensions and seed."""

    name: str
    configs: list
    out_dir: str

    def __post_init__(self):
        if not self.configs:
            raise ValueError("experiment needs at least one run config")
        dims = {(c.d, c.r, c.seed) for c in self.configs}
        if len(dims) != 1:
            raise ValueError("configs must share d, r and seed")


@dataclass
class FigureBundle:
    """Artifacts of a comparison experiment."""

    out_dir: str
    csv_paths: list = field(default_factory=list)
    summary_path: str = ""
    script_path: str = ""
    png_path: str = ""
    rows: list = field(default_factory=list)


def rate_targets(config: RunConfig, profile, nu: float = 0.5) -> dict:
    """Theoretical contraction targets for one run.

    sigma2_pow_t and the gap ratio bound the per-step ratio of the
    unsquared distance; the certified theorem rate 1 - 2 alpha (1 - nu)
    gamma_t bounds the squared distance, with gamma_t the intersection-
    region constant at the default radii.
    """
    from .consensus import resolve_alpha

    alpha = resolve_alpha(config.alpha_rule, profile)
    params = RegionParams.defaults(config.r, config.graph.N or 2)
    gamma = (
        (1.0 - 4.0 * config.r * params.delta1**2)
        * (1.0 - params.delta2**2 / 2.0)
        * profile.mu_t
    )
    return {
        "sigma2_pow_t": profile.sigma2**config.t,
        "gap_ratio": profile.rate_ratio,
        "theorem_sq": 1.0 - 2.0 * alpha * (1.0 - nu) * gamma,
    }


def run_name(config: RunConfig) -> str:
    alpha = config.alpha_rule.replace(":", "_").replace(".", "p")
    return f"{config.graph.label()}_t{config.t}_{alpha}_seed{config.seed}"


def execute_run(config: RunConfig, out_dir: str, name: str | None = None,
                initial_state: NetworkState | None = None,
                render: bool = True):
    """Run one config, write its CSV (and PNG unless render=False), and
    return (summary row dict, RunResult, csv path)."""
    os.makedirs(out_dir, exist_ok=True)
    name = name or run_name(config)
    result = run_drcs(config, initial_state=initial_state)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    result.trace.to_csv(csv_path)
    w = config.graph.build()
    profile = spectral_profile(w, config.t)
    targets = rate_targets(config, profile)
    trace = result.trace
    rate = float("nan")
    if trace.status.value == "converged" and len(trace) >= 50:
        rate = estimate_rate(trace, targets=targets).per_step_ratio
    row = {
        "name": name,
        "graph": config.graph.label(),
        "t": config.t,
        "alpha_rule": config.alpha_rule,
        "alpha": trace.alpha,
        "status": trace.status.value,
        "iterations": trace.iterations,
        "rate_estimate": rate,
        "target_sigma2_t": targets["sigma2_pow_t"],
        "target_gap_ratio": targets["gap_ratio"],
        "target_theorem_sq": targets["theorem_sq"],
    }
    if render:
        plotting.render_run_figure(csv_path, os.path.join(out_dir, f"{name}.png"),
                                   title=name)
    return row, result, csv_path


def format_summary(rows) -> str:
    lines = [SUMMARY_HEADER]
    for row in rows:
        lines.append(
            f"{row['name']},{row['graph']},{row['t']},{row['alpha_rule']},"
            f"{row['alpha']!r},{row['status']},{row['iterations']},"
            f"{row['rate_estimate']!r},{row['target_sigma2_t']!r},"
            f"{row['target_gap_ratio']!r},{row['target_theorem_sq']!r}"
        )
    return "\n".join(lines) + "\n"


def comparison_configs(seed: int, d: int = 5, r: int = 2, n: int = 30,
                       stop_tol: float = 2e-16, max_iters: int = 200_000) -> list:
    """The 2 x 5 grid: both ring variants, four stepsizes at t = 1 plus the
    ten-round multi-step run at unit stepsize."""
    configs = []
    for lazy_variant in (False, True):
        graph = GraphSpec("ring", n, lazy=lazy_variant)
        for rule in STEPSIZE_RULES:
            configs.append(RunConfig(graph=graph, d=d, r=r, t=1, alpha_rule=rule,
                                     stop_tol=stop_tol, max_iters=max_iters,
                                     seed=seed))
        configs.append(RunConfig(graph=graph, d=d, r=r, t=10, alpha_rule="unit",
                                 stop_tol=stop_tol, max_iters=max_iters,
                                 seed=seed))
    return configs


def cmd_fig1(seed: int = 7, out_dir: str = "stcon-out", d: int = 5, r: int = 2,
             n: int = 30) -> FigureBundle:
    """Produce the full comparison bundle.

    One shared random initial state per graph (all stepsizes start from
    the same configuration, declared by the shared seed in the summary),
    one CSV per run, a summary table, a rendered PNG and a gnuplot script.
    """
    os.makedirs(out_dir, exist_ok=True)
    bundle = FigureBundle(out_dir=out_dir)
    groups = []
    for lazy_variant in (False, True):
        graph_label = GraphSpec("ring", n, lazy=lazy_variant).label()
        graph_runs = []
        init = NetworkState.random(n, d, r, seed)
        for config in comparison_configs(seed, d=d, r=r, n=n):
            if config.graph.lazy != lazy_variant:
                continue
            row, _, csv_path = execute_run(config, out_dir,
                                           initial_state=init, render=False)
            bundle.rows.append(row)
            bundle.csv_paths.append(csv_path)
            label = f"t={config.t}, {config.alpha_rule}"
            graph_runs.append((label, csv_path))
        groups.append((graph_label, graph_runs))

    bundle.summary_path = os.path.join(out_dir, "summary.csv")
    with open(bundle.summary_path, "w") as fh:
        fh.write(format_summary(bundle.rows))
    bundle.script_path = os.path.join(out_dir, "comparison.gp")
    with open(bundle.script_path, "w") as fh:
        fh.write(plotting.gnuplot_script(groups))
    bundle.png_path = os.path.join(out_dir, "comparison.png")
    plotting.render_comparison_figure(groups, bundle.png_path)
    return bundle


def spectra_table(graph: GraphSpec, t: int = 1) -> dict:
    """All spectral quantities the stepsize menu depends on."""
    w = graph.build()
    profile = spectral_profile(w, t)
    return {
        "graph": graph.label(),
        "N": w.N,
        "t": t,
        "lambda_2": float(profile.lambdas[1]),
        "lambda_N": float(profile.lambdas[-1]),
        "mu_t": profile.mu_t,
        "L_t": profile.L_t,
        "sigma2": profile.sigma2,
        "sigma2_pow_t": profile.sigma2**t,
        "gap_ratio": profile.rate_ratio,
        "min_multistep_t": min_multistep_t(w),
        "alpha_one_over_L": 1.0 / profile.L_t,
        "alpha_two_over_mu_plus_L": 2.0 / (profile.mu_t + profile.L_t),
        "alpha_two_over_L": 2.0 / profile.L_t,
        "alpha_unit": 1.0,
    }


def format_spectra(table: dict) -> str:
    lines = [f"spectra for {table['graph']} (t = {table['t']})"]
    for key in ("N", "lambda_2", "lambda_N", "mu_t", "L_t", "sigma2",
                "sigma2_pow_t", "gap_ratio", "min_multistep_t"):
        value = table[key]
        lines.append(f"  {key:24s} {value!r}")
    lines.append("  stepsize menu")
    for key in ("alpha_one_over_L", "alpha_two_over_mu_plus_L",
                "alpha_two_over_L", "alpha_unit"):
        lines.append(f"    {key:22s} {table[key]!r}")
    return "\n".join(lines) + "\n"
