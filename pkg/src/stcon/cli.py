"""Command-line entry point.

Subcommands:
  run      one consensus run -> CSV trace, summary row, rendered figure
  fig1     the two-graph stepsize comparison bundle
  verify   seeded verification campaigns -> line-oriented report
  spectra  spectral constants and the stepsize menu for a graph

Exit codes: 0 converged/all-pass, 2 stagnated, 3 max_iters,
4 degenerate mean, 5 configuration error, 6 verification failure.
The STCON_OUT environment variable overrides the output directory.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import harness, verification
from .consensus import RunConfig, RunStatus
from .network import GraphSpec

EXIT_BY_STATUS = {
    RunStatus.CONVERGED: 0,
    RunStatus.STAGNATED: 2,
    RunStatus.MAX_ITERS: 3,
    RunStatus.DEGENERATE_MEAN: 4,
}
EXIT_CONFIG_ERROR = 5
EXIT_VERIFY_FAILURE = 6

RUN_KEYS = {
    "graph": str, "N": int, "lazy": bool, "adjacency": str,
    "d": int, "r": int, "t": int, "alpha": str, "retraction": str,
    "mode": str, "max_iters": int, "stop": float, "seed": int,
    "name": str, "out": str,
}
RUN_DEFAULTS = {
    "graph": "ring", "N": 30, "lazy": False, "adjacency": None,
    "d": 5, "r": 2, "t": 1, "alpha": "one_over_L", "retraction": "polar",
    "mode": "matrix", "max_iters": 200_000, "stop": 2e-16, "seed": 0,
    "name": None, "out": None,
}


class ConfigError(ValueError):
    pass


def read_config_file(path: str) -> dict:
    """Flat key=value file, one setting per line, '#' comments."""
    values = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}")
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in RUN_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            caster = RUN_KEYS[key]
            try:
                if caster is bool:
                    values[key] = value.lower() in ("1", "true", "yes", "on")
                else:
                    values[key] = caster(value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}")
    return values


def _resolve_out_dir(explicit: str | None) -> str:
    env = os.environ.get("STCON_OUT")
    if env:
        return env
    return explicit or "stcon-out"


def _merge_run_settings(args) -> dict:
    settings = dict(RUN_DEFAULTS)
    if args.config:
        settings.update(read_config_file(args.config))
    for key in RUN_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    return settings


def _build_config(settings: dict) -> RunConfig:
    try:
        graph = GraphSpec(
            settings["graph"],
            N=settings["N"],
            lazy=bool(settings["lazy"]),
            adjacency_path=settings["adjacency"],
        )
        return RunConfig(
            graph=graph,
            d=settings["d"],
            r=settings["r"],
            t=settings["t"],
            alpha_rule=settings["alpha"],
            retraction=settings["retraction"],
            max_iters=settings["max_iters"],
            stop_tol=settings["stop"],
            seed=settings["seed"],
            mode=settings["mode"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def cmd_run(args) -> int:
    settings = _merge_run_settings(args)
    config = _build_config(settings)
    out_dir = _resolve_out_dir(settings["out"])
    row, result, csv_path = harness.execute_run(config, out_dir,
                                                name=settings["name"])
    summary_path = os.path.join(out_dir, f"{row['name']}_summary.csv")
    with open(summary_path, "w") as fh:
        fh.write(harness.format_summary([row]))
    print(f"wrote {csv_path}")
    print(f"status={row['status']} iterations={row['iterations']} "
          f"alpha={row['alpha']!r}")
    return EXIT_BY_STATUS[result.trace.status]


def cmd_fig1(args) -> int:
    out_dir = _resolve_out_dir(args.out)
    bundle = harness.cmd_fig1(seed=args.seed, out_dir=out_dir)
    print(f"wrote {len(bundle.csv_paths)} traces, {bundle.summary_path}, "
          f"{bundle.script_path}, {bundle.png_path}")
    for row in bundle.rows:
        print(f"  {row['name']}: {row['status']} in {row['iterations']} iterations")
    return 0


def cmd_verify(args) -> int:
    lines = verification.run_suites(args.suite, seed=args.seed,
                                    samples=args.samples)
    report = verification.format_report(lines)
    sys.stdout.write(report)
    if args.out:
        path = args.out
        env = os.environ.get("STCON_OUT")
        if env and not os.path.isabs(path):
            path = os.path.join(env, path)
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w") as fh:
            fh.write(report)
    return EXIT_VERIFY_FAILURE if verification.has_failures(lines) else 0


def cmd_spectra(args) -> int:
    try:
        graph = GraphSpec(args.graph, N=args.N, lazy=args.lazy,
                          adjacency_path=args.adjacency)
        table = harness.spectra_table(graph, t=args.t)
    except ValueError as exc:
        raise ConfigError(str(exc))
    sys.stdout.write(harness.format_spectra(table))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stcon",
        description="Distributed Riemannian consensus on the Stiefel manifold",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one consensus run")
    run.add_argument("--config", help="key=value config file; flags override")
    run.add_argument("--graph", choices=("ring", "complete", "custom"))
    run.add_argument("--N", type=int)
    run.add_argument("--lazy", action="store_const", const=True, default=None,
                     help="use the lazy variant (W + I)/2")
    run.add_argument("--adjacency", help="edge-list file for custom graphs")
    run.add_argument("--d", type=int)
    run.add_argument("--r", type=int)
    run.add_argument("--t", type=int, help="multi-step communication depth")
    run.add_argument("--alpha", help="one_over_L | two_over_mu_plus_L | "
                                     "two_over_L | unit | custom:<x>")
    run.add_argument("--retraction", choices=("polar", "qr"))
    run.add_argument("--mode", choices=("matrix", "message_passing"))
    run.add_argument("--max-iters", dest="max_iters", type=int)
    run.add_argument("--stop", type=float, help="tolerance on (1/N)||x-xbar||^2")
    run.add_argument("--seed", type=int)
    run.add_argument("--name", help="artifact base name")
    run.add_argument("--out", help="output directory (STCON_OUT overrides)")
    run.set_defaults(func=cmd_run)

    fig1 = sub.add_parser("fig1", help="two-graph stepsize comparison bundle")
    fig1.add_argument("--seed", type=int, default=7)
    fig1.add_argument("--out", help="output directory (STCON_OUT overrides)")
    fig1.set_defaults(func=cmd_fig1)

    verify = sub.add_parser("verify", help="run verification campaigns")
    verify.add_argument("--suite", action="append", required=True,
                        help="manifold | network | consensus | rsi | rates | "
                             "all | none (repeatable)")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--samples", type=int, default=1000)
    verify.add_argument("--out", help="also write the report to this file")
    verify.set_defaults(func=cmd_verify)

    spectra = sub.add_parser("spectra", help="print spectral constants")
    spectra.add_argument("--graph", choices=("ring", "complete", "custom"),
                         default="ring")
    spectra.add_argument("--N", type=int, default=30)
    spectra.add_argument("--lazy", action="store_true")
    spectra.add_argument("--adjacency")
    spectra.add_argument("--t", type=int, default=1)
    spectra.set_defaults(func=cmd_spectra)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
