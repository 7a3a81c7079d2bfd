"""Command-line driver.

Exit codes: 0 success, 2 configuration or usage error, 3 violated model
assumption or degeneracy, 4 numerical failure (including a failed
``validate`` check).
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .config import PRESETS, RunConfig, _merge, load_config
from .exceptions import AcoustoElectricError, InvalidArgumentError
from .mesh import normalize_sides
from .pipeline import (EXPERIMENTS, Scenario, experiment_config, run_experiment, run_reconstruction,
                       validate, write_forward_artifacts, write_run_artifacts)
from .reconstruct import check_independence

logger = logging.getLogger("acoustoelectric")

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_NUMERICAL = 0, 2, 3, 4


def _mesh_arg(text):
    try:
        nx, ny = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected <nx>x<ny>, got {text!r}") from None
    if nx < 1 or ny < 1:
        raise argparse.ArgumentTypeError("mesh resolution must be positive")
    return nx, ny


def _sides_arg(text):
    try:
        return list(normalize_sides([s.strip() for s in text.split(",") if s.strip()]))
    except InvalidArgumentError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON or YAML run configuration")
    common.add_argument("--preset", choices=sorted(PRESETS),
                        help="start from a named preset instead of a config file")
    common.add_argument("--out", type=Path, help="output directory (config key 'output')")
    common.add_argument("--seed", type=int, help="noise seed (noise.seed)")
    common.add_argument("--optimize", action="store_true", default=None,
                        help="optimize the boundary sources first (optimize.enabled)")
    common.add_argument("--partial", type=_sides_arg, metavar="SIDES",
                        help="comma-separated sides without data, e.g. 'bottom' "
                             "(data.mode=partial, data.excluded_sides)")
    common.add_argument("--beta", type=float, help="elasto-electric constant (beta)")
    common.add_argument("--noise", type=float, help="noise level (noise.level)")
    common.add_argument("--mesh", type=_mesh_arg, metavar="NXxNY", help="mesh resolution")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="acoustoelectric",
        description="Acousto-electric current-density imaging: simulation and reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("forward", parents=[common],
                   help="simulate the fields and internal functionals")
    sub.add_parser("reconstruct", parents=[common],
                   help="simulate measurements and reconstruct the source current")
    p = sub.add_parser("experiment", parents=[common],
                       help="run one of the four reference experiments")
    p.add_argument("n", type=int, help=f"experiment number, one of {sorted(EXPERIMENTS)}")
    p = sub.add_parser("validate", parents=[common],
                       help="boundary cross-check, stability audit and refinement sweep")
    p.add_argument("--flip-h2", action="store_true", default=None,
                   help="debug: negate the second internal functional in the cross-check")
    sub.add_parser("optimize-sources", parents=[common],
                   help="optimize the boundary source pair and write it out")
    return parser


def overrides_from_args(args) -> dict:
    """Config fragment for the flags that were given, one key per flag."""
    out: dict = {}
    if args.beta is not None:
        out["beta"] = args.beta
    if args.seed is not None:
        out.setdefault("noise", {})["seed"] = args.seed
    if args.noise is not None:
        out.setdefault("noise", {})["level"] = args.noise
    if args.optimize:
        out["optimize"] = {"enabled": True}
    if args.partial is not None:
        out["data"] = {"mode": "partial", "excluded_sides": args.partial}
    if args.mesh is not None:
        out["mesh"] = {"nx": args.mesh[0], "ny": args.mesh[1]}
    if args.out is not None:
        out["output"] = str(args.out)
    if getattr(args, "flip_h2", None):
        out["validate"] = {"flip_h2": True}
    return out


def resolve_config(args) -> RunConfig:
    over = overrides_from_args(args)
    if args.config is not None and args.preset is not None:
        raise InvalidArgumentError("give either --config or --preset, not both")
    if args.config is not None:
        return load_config(args.config, over)
    name = args.preset or "default"
    return RunConfig.from_dict(_merge(PRESETS[name], over), source=f"preset {name}")


def _print_report(rows):
    width = max(len(k) for k, _ in rows)
    for key, val in rows:
        if isinstance(val, float):
            val = f"{val:.6g}"
        print(f"{key:<{width}}  {val}")


def cmd_forward(cfg: RunConfig) -> int:
    out = Path(cfg["output"])
    sc = Scenario(cfg)
    g1, g2 = sc.initial_sources()
    v1 = v2 = None
    if cfg["optimize"]["enabled"]:
        opt = sc.optimize(g1, g2)
        g1, g2, v1, v2 = opt.g1, opt.g2, opt.v1, opt.v2
    meas = sc.measure(g1, g2, v1, v2)
    write_forward_artifacts(out, sc, meas)
    min_det, _ = check_independence(meas.v1, meas.v2)
    _print_report([("output", str(out)), ("min_abs_det", min_det),
                   ("max_abs_H1", float(np.abs(meas.H1.values).max())),
                   ("max_abs_H2", float(np.abs(meas.H2.values).max()))])
    return EXIT_OK


def cmd_reconstruct(cfg: RunConfig) -> int:
    out = Path(cfg["output"])
    outcome = run_reconstruction(cfg)
    write_run_artifacts(out, outcome)
    res = outcome.result
    rows = [("output", str(out)), ("min_abs_det", res.min_abs_det)]
    if res.relative_l2_error is not None:
        rows.append(("relative_l2_error", res.relative_l2_error))
    _print_report(rows)
    return EXIT_OK


def cmd_experiment(n: int, cfg_overrides: dict) -> int:
    cfg = experiment_config(n, cfg_overrides)
    out = Path(cfg["output"])
    outcome = run_experiment(n, cfg_overrides)
    write_run_artifacts(out, outcome.initial, prefix="initial_")
    write_run_artifacts(out, outcome.optimized, prefix="optimized_")
    io.write_json(out / "report.json", outcome.report())
    rep = outcome.report()
    _print_report([("experiment", n), ("output", str(out)),
                   ("initial_error", rep["initial_error"]),
                   ("optimized_error", rep["optimized_error"]),
                   ("initial_min_abs_det", rep["initial_min_abs_det"]),
                   ("optimized_min_abs_det", rep["optimized_min_abs_det"])])
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    out = Path(cfg["output"])
    checks = validate(cfg)
    io.write_json(out / "validate.json",
                  {c.name: {"passed": c.passed, **c.detail} for c in checks})
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL'}")
    if all(c.passed for c in checks):
        return EXIT_OK
    print("validation failed", file=sys.stderr)
    return EXIT_NUMERICAL


def cmd_optimize_sources(cfg: RunConfig) -> int:
    out = Path(cfg["output"])
    sc = Scenario(cfg)
    g1, g2 = sc.initial_sources()
    res = sc.optimize(g1, g2)
    io.write_boundary_csv(out / "g1.csv", res.g1)
    io.write_boundary_csv(out / "g2.csv", res.g2)
    io.write_history_csv(out / "history.csv", res.history)
    io.write_nodal_csv(out / "v1.csv", res.v1)
    io.write_nodal_csv(out / "v2.csv", res.v2)
    first, last = res.history[0], res.history[-1]
    io.write_json(out / "report.json", {
        "reason": res.reason, "fallback": res.fallback, "half_steps": len(res.history) - 1,
        "initial": dict(zip(res.HISTORY_COLUMNS[2:], first[2:])),
        "final": dict(zip(res.HISTORY_COLUMNS[2:], last[2:])),
    })
    _print_report([("output", str(out)), ("reason", res.reason),
                   ("initial_objective", float(first[2])), ("final_objective", float(last[2])),
                   ("initial_min_abs_det", float(first[4])), ("final_min_abs_det", float(last[4]))])
    return EXIT_OK


def _provenance(exc: BaseException) -> str:
    tb = exc.__traceback__
    name = "acoustoelectric"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("acoustoelectric"):
            name = mod
        tb = tb.tb_next
    return name


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "experiment" and args.n not in EXPERIMENTS:
        parser.error(f"unknown experiment {args.n}; valid experiments are "
                     + ", ".join(str(k) for k in sorted(EXPERIMENTS)))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            if args.command == "experiment":
                if args.config is not None or args.preset is not None:
                    raise InvalidArgumentError("experiment runs its own preset; "
                                               "use flags to override keys")
                return cmd_experiment(args.n, overrides_from_args(args))
            cfg = resolve_config(args)
            if args.command == "forward":
                return cmd_forward(cfg)
            if args.command == "reconstruct":
                return cmd_reconstruct(cfg)
            if args.command == "validate":
                return cmd_validate(cfg)
            return cmd_optimize_sources(cfg)
    except AcoustoElectricError as exc:
        print(f"error [{_provenance(exc)}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error [{_provenance(exc)}]: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
