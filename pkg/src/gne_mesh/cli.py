"""Command-line entry point: ``gne-mesh <command> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 bad configuration or arguments,
3 failed step-size validation.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .analysis import adjacency_experiment
from .config import (
    DEFAULT_SEED,
    PRESETS,
    ConfigError,
    ExperimentConfig,
    PrivacyConfig,
    defaults_reference,
    emit_config,
    load_config,
    load_preset,
    resolve,
)
from .engine import CONSERVATION, LITERAL, ScheduleError, validate_schedule
from .experiments import (
    AGGREGATE_HEADER,
    SUMMARY_HEADER,
    aggregate_rows,
    ordering_rows,
    residual_curve,
    residual_table,
    run_many,
    summary_rows,
    trigger_rows,
    write_csv,
)
from .game import EnergyCost

log = logging.getLogger("gne_mesh")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_VALIDATION = 0, 1, 2, 3


class _Null:
    def write(self, _):
        return 0


_NULL = _Null()


def _common(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="experiment JSON file")
    src.add_argument("--preset", choices=PRESETS, help="shipped experiment preset")
    p.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
    p.add_argument("--runs", type=int, help="Monte-Carlo runs")
    p.add_argument("--horizon", type=int, help="iterations K")
    p.add_argument("--out", type=Path, default=Path("out"), help="artifact directory")
    p.add_argument("--force", action="store_true", help="run despite failed step-size checks")
    p.add_argument("--mode", choices=(LITERAL, CONSERVATION), help="consensus self-term")
    p.add_argument("--workers", type=int, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gne-mesh", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "Monte-Carlo runs of the configured compressor"),
        ("sweep", "compare the compressors listed under 'sweep'"),
        ("baseline", "full-information primal-dual iteration"),
        ("privacy-audit", "coupled runs on adjacent games"),
        ("validate", "step-size and graph checks only"),
    ):
        _common(sub.add_parser(name, help=help_))
    cp = sub.add_parser("config", help="print the resolved configuration or the defaults table")
    _common(cp)
    cp.add_argument("--defaults", action="store_true", help="print every key with its default")
    return ap


def _load(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = load_preset(args.preset or "energy-demand")
    changes = {}
    for key in ("seed", "runs", "horizon", "mode", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            changes[key] = v
    return cfg.replace(**changes) if changes else cfg


def _validate(cfg: ExperimentConfig, force: bool, out=None) -> bool:
    out = out or sys.stdout
    setup = resolve(cfg, force=True)
    rep = validate_schedule(setup.schedule, setup.trigger, setup.mixing, k_max=1000, force=True)
    for line in rep.lines():
        print(line, file=out)
    g = setup.game
    print(f"graph: {g.n_players} nodes, rho2 = {setup.mixing.rho2:.6g}", file=out)
    print("multiplier caps: " + " ".join(f"{v:.6g}" for v in setup.lambda_cap), file=out)
    if not rep.ok and not force:
        raise ScheduleError(rep.failed()[0].name, rep.failed()[0].detail)
    return rep.ok


def cmd_validate(cfg, args) -> int:
    _validate(cfg, force=False)
    return EXIT_OK


def _emit_runs(groups, cfg, out: Path, fig_name: str) -> None:
    T = cfg.window
    header, rows = residual_table(groups, T)
    write_csv(out / "residual.csv", header, rows)
    write_csv(out / "summary.csv", SUMMARY_HEADER, summary_rows(groups, T))
    curves = {n: residual_curve(r, T) for n, r in groups.items()}
    plotting.residual_figure(curves, out / f"{fig_name}.svg", T)
    first = next(iter(groups.values()))
    run0 = next((r for r in first if r.ok), None)
    write_csv(out / "triggers.csv", ["player", "iteration"], trigger_rows(run0) if run0 else [])
    if run0 is not None:
        plotting.trigger_figure(run0.fired, out / "triggers.svg")


def _report_failures(groups) -> None:
    for name, results in groups.items():
        bad = [r for r in results if not r.ok]
        if bad:
            print(f"{name}: {len(bad)} of {len(results)} runs aborted (quantizer range)", file=sys.stderr)


def cmd_run(cfg, args) -> int:
    _validate(cfg, args.force, out=_NULL)
    groups = {cfg.compressor.name: run_many(cfg, force=args.force)}
    _emit_runs(groups, cfg, args.out, "residual")
    _report_failures(groups)
    for row in aggregate_rows(groups, cfg.window):
        print(dict(zip(AGGREGATE_HEADER, row)))
    return EXIT_OK


def cmd_sweep(cfg, args) -> int:
    _validate(cfg, args.force, out=_NULL)
    groups = {name: run_many(cfg, name, force=args.force) for name in cfg.sweep}
    _emit_runs(groups, cfg, args.out, "residual")
    write_csv(args.out / "aggregate.csv", AGGREGATE_HEADER, aggregate_rows(groups, cfg.window))
    write_csv(
        args.out / "ordering.csv",
        ["better", "worse", "wins", "pairs", "p_value"],
        ordering_rows(groups, cfg.window),
    )
    _report_failures(groups)
    for row in aggregate_rows(groups, cfg.window):
        print(dict(zip(AGGREGATE_HEADER, row)))
    return EXIT_OK


def cmd_baseline(cfg, args) -> int:
    if args.horizon is not None:
        cfg = cfg.replace(baseline_horizon=args.horizon)
    groups = {"baseline": run_many(cfg, kind="baseline")}
    T = cfg.window
    header, rows = residual_table(groups, T)
    write_csv(args.out / "residual.csv", header, rows)
    write_csv(args.out / "summary.csv", SUMMARY_HEADER, summary_rows(groups, T))
    plotting.residual_figure({"baseline": residual_curve(groups["baseline"], T)}, args.out / "residual.svg", T)
    r0 = groups["baseline"][0]
    print("x_K (run 0): " + " ".join(f"{v:.6f}" for v in r0.x_final.ravel()))
    return EXIT_OK


def cmd_privacy(cfg, args) -> int:
    _validate(cfg, args.force, out=_NULL)
    p: PrivacyConfig = cfg.privacy
    horizon = args.horizon if args.horizon is not None else p.horizon
    setup = resolve(cfg, force=args.force)
    setup.horizon = horizon
    base = setup.game.costs[p.player]
    if not isinstance(base, EnergyCost):
        raise ConfigError("privacy", "nominal shift needs an energy-demand game")
    pert = EnergyCost(base.nominal + p.nominal_shift, base.p0, base.p1, base.n_players)
    audit = adjacency_experiment(setup, p.player, pert)
    write_csv(args.out / "privacy.csv", ["k", "delta", "dy", "bound", "tight_bound"], audit.rows())
    plotting.privacy_figure(audit.k, audit.dy_series, audit.bound_series, audit.tight_bound_series,
                            args.out / "privacy.svg")
    print(f"player {audit.i0}: max ||dy|| = {audit.dy_series.max():.6g}")
    print(f"closed-form bound exceeded at {audit.bound_violations.size} iterations"
          + (f" (first k = {int(audit.bound_violations[0])})" if audit.bound_violations.size else ""))
    print(f"side condition ||dy|| <= 2 theta violated at {audit.side_violations.size} iterations")
    return EXIT_OK


def cmd_config(cfg, args) -> int:
    sys.stdout.write(defaults_reference() if args.defaults else emit_config(cfg))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "baseline": cmd_baseline,
    "privacy-audit": cmd_privacy,
    "validate": cmd_validate,
    "config": cmd_config,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = os.environ.get("GNE_MESH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command not in ("validate", "config"):
        args.out.mkdir(parents=True, exist_ok=True)
    np.seterr(over="raise", invalid="raise")
    try:
        return COMMANDS[args.command](cfg, args)
    except ScheduleError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
