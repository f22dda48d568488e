import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

import numpy as np
import pydantic
import yaml

from ..analysis import ESTIMATE_IDS, StoppingRule, check_estimate, compare_solutions, tanaka_check
from ..common.errors import ConfigError, LabError, SolverError
from ..common.setup import setup
from ..lattice import build_lattice, sample_paths
from ..picard import picard_solve
from ..problem import offset_problem, scenario
from ..reflect import solve_penalized, solve_projected, solve_shifted
from .config import RunConfig, parse_config, read_config, run_id
from .fixtures import FIXTURES_PATH, pin_fixture
from .oracles import american_dp_oracle, exhaustive_stopping_oracle
from .results import METHOD_EXACT, ResultRow, estimate_rows, rows_frame, write_csv
from .studies import calibrate_constants, convergence_study, picard_rows, solve_from_config, solve_rows

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_INTERNAL = 1

COMMANDS = ("solve", "sweep", "picard", "estimates", "compare", "tanaka", "oracle")

def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")

def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")

def _stopping(text: str) -> StoppingRule:
    if text in ("T", "terminal"):
        return StoppingRule()
    kind, _, level = text.partition(":")
    try:
        return StoppingRule(kind=kind, level=float(level))
    except (ValueError, pydantic.ValidationError):
        raise argparse.ArgumentTypeError(f"expected T, hit_above:LEVEL or hit_below:LEVEL, got {text!r}")

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--scenario", help="Catalog scenario name")
    common.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="Scenario parameter, repeatable")
    common.add_argument("--steps", type=int, help="Lattice steps N")
    common.add_argument("--p", type=float, help="Integrability exponent")
    common.add_argument("--beta-list", type=_float_list, help="Comma-separated beta exponents")
    common.add_argument("--levels", type=_float_list, help="Comma-separated penalty levels")
    common.add_argument("--chat", type=float, help="Stability constant of the Picard block mesh")
    common.add_argument("--mode", help="Norm mode: auto, enumerate, augmented, sampled or slice")
    common.add_argument("--count", type=int, help="Sample count for sampled norms")
    common.add_argument("--workers", type=int, help="Solve penalty levels on this many threads")
    common.add_argument("--seed", type=int, help="Sampling seed")
    common.add_argument("--out", help="CSV output path, stdout when unset")

    parser = argparse.ArgumentParser(prog="rbsde-lab", description="Reflected BSDE lattice lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="Solve one problem")
    p.add_argument("--solver", choices=["projected", "penalized", "plain", "shifted"])
    p.add_argument("--level", type=float, help="Penalty level of the penalized solver")
    p.add_argument("--shift", type=float, help="Exponential shift rate a")

    p = sub.add_parser("sweep", parents=[common], help="Penalization sweep and convergence study")
    p.add_argument("--refine", type=_int_list, help="Comma-separated step counts for N-refinement")
    p.add_argument("--shift", type=float, help="Also check the exercise region of the shifted solve")

    p = sub.add_parser("picard", parents=[common], help="Picard iteration over z")
    p.add_argument("--stop-tol", type=float)
    p.add_argument("--max-sweeps", type=int)
    p.add_argument("--blocks", type=_int_list, help="Explicit block boundaries as grid steps")

    p = sub.add_parser("estimates", parents=[common], help="A priori estimate ratios")
    p.add_argument("--ids", help="Comma-separated estimate ids")
    p.add_argument("--beta", type=float, default=0.5, help="Exponent of P5.1ii")
    p.add_argument("--stopping", type=_stopping, action="append", default=[],
                   help="T, hit_above:LEVEL or hit_below:LEVEL, repeatable")
    p.add_argument("--calibrate", action="store_true", help="Calibrate constants over the catalog instead")

    p = sub.add_parser("compare", parents=[common], help="Ordering of two solutions")
    p.add_argument("--xi-offset", type=float)
    p.add_argument("--f-offset", type=float)
    p.add_argument("--L-offset", type=float)
    p.add_argument("--relation", choices=["Y_le", "dK_ge", "dK_interval_ge"])
    p.add_argument("--penalty", type=float, help="Compare penalized solves at this level")

    p = sub.add_parser("tanaka", parents=[common], help="Discrete Tanaka identity on sampled paths")
    p.add_argument("--paths", type=int)
    p.add_argument("--level-a", type=float, help="Level a, random lattice level per path when unset")
    p.add_argument("--grid-levels", type=int, help="Cells of the occupation grid")

    p = sub.add_parser("oracle", parents=[common], help="Independent reference values")
    p.add_argument("--kind", choices=["american", "stopping"], default="american")
    p.add_argument("--pin", action="store_true", help="Record the american put value in the fixtures file")
    p.add_argument("--fixtures", default=None, help="Fixtures file for --pin")
    return parser

def _parse_params(items: List[str]) -> Dict[str, Any]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}", key=item)
        out[key.strip()] = yaml.safe_load(value)
    return out

def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Config file values overridden by the flags that were given"""
    data = read_config(args.config).model_dump() if args.config else {}
    params = dict(data.get("params", {}))
    params.update(_parse_params(args.param))
    data["params"] = params

    def put(key, value):
        if value is not None:
            data[key] = value

    put("scenario", args.scenario)
    put("steps", args.steps)
    put("p", args.p)
    put("betas", args.beta_list)
    put("levels", args.levels)
    put("norm_mode", args.mode)
    put("count", args.count)
    put("workers", args.workers)
    put("seed", args.seed)
    put("out", args.out)
    put("solver", getattr(args, "solver", None))
    put("level", getattr(args, "level", None))
    put("shift", getattr(args, "shift", None))
    put("refine", getattr(args, "refine", None))

    picard = dict(data.get("picard", {}))
    for key, value in (("chat", args.chat), ("stop_tol", getattr(args, "stop_tol", None)),
                       ("max_sweeps", getattr(args, "max_sweeps", None)), ("blocks", getattr(args, "blocks", None))):
        if value is not None:
            picard[key] = value
    data["picard"] = picard

    compare = dict(data.get("compare", {}))
    for key, attr in (("xi_offset", "xi_offset"), ("f_offset", "f_offset"), ("L_offset", "L_offset"),
                      ("relation", "relation"), ("penalty", "penalty")):
        value = getattr(args, attr, None)
        if value is not None:
            compare[key] = value
    data["compare"] = compare

    tanaka = dict(data.get("tanaka", {}))
    for key, attr in (("paths", "paths"), ("level", "level_a"), ("grid_levels", "grid_levels")):
        value = getattr(args, attr, None)
        if value is not None:
            tanaka[key] = value
    data["tanaka"] = tanaka

    ids = getattr(args, "ids", None)
    if ids:
        data["estimates"] = [x.strip() for x in ids.split(",") if x.strip()]
    if args.command == "oracle" and args.kind == "american" and "scenario" not in data:
        data["scenario"] = "american-put"
    return parse_config(data)

def _run_solve(args, cfg: RunConfig, run: str) -> List[ResultRow]:
    problem = scenario(cfg.scenario, cfg.params, cfg.steps, cfg.p)
    triple = solve_from_config(problem, cfg)
    return solve_rows(run, problem, triple, cfg)

def _run_sweep(args, cfg: RunConfig, run: str) -> List[ResultRow]:
    if not cfg.levels and not cfg.refine and cfg.shift is None:
        raise ConfigError("sweep needs --levels, --refine or --shift", key="levels")
    return convergence_study(cfg, run).rows

def _run_picard(args, cfg: RunConfig, run: str) -> List[ResultRow]:
    p = cfg.p if cfg.p is not None else cfg.picard.p
    problem = scenario(cfg.scenario, cfg.params, cfg.steps, p)
    pcfg = cfg.picard.model_copy(update={"p": p, "norm_mode": cfg.norm_mode, "count": cfg.count,
                                         "seed": cfg.seed})
    triple, trace = picard_solve(problem, pcfg)
    return picard_rows(run, problem, triple, trace)

def _run_estimates(args, cfg: RunConfig, run: str) -> List[ResultRow]:
    if args.calibrate:
        rep = calibrate_constants(p=cfg.p if cfg.p is not None else 2.0, steps=cfg.steps, ids=cfg.estimates,
                                  levels=cfg.levels or (1, 4, 16, 64))
        return [ResultRow(run_id=run, scenario="catalog", N=cfg.steps, quantity=f"{id}.C_emp", value=c,
                          note=f"max ratio {rep.max_ratios[id]:.6g}, margin {rep.margin:g}")
                for id, c in rep.constants.items()]
    problem = scenario(cfg.scenario, cfg.params, cfg.steps, cfg.p)
    triple = solve_from_config(problem, cfg)
    rules = args.stopping or [StoppingRule()]
    rows = []
    for id in cfg.estimates:
        for tau in (rules if id in ("P2.1", "P4.2") else [StoppingRule()]):
            rep = check_estimate(id, problem, triple, tau=tau, beta=args.beta,
                                 mode="auto" if cfg.norm_mode in ("augmented", "slice") else cfg.norm_mode,
                                 count=cfg.count, seed=cfg.seed)
            rows.extend(estimate_rows(run, problem.N, rep))
    return rows

def _run_compare(args, cfg: RunConfig, run: str) -> List[ResultRow]:
    req = cfg.compare
    A = scenario(cfg.scenario, cfg.params, cfg.steps, cfg.p)
    B = offset_problem(A, req.xi_offset, req.f_offset, req.L_offset)
    if req.penalty is not None:
        tA, tB = solve_penalized(A, req.penalty), solve_penalized(B, req.penalty)
    else:
        tA, tB = solve_projected(A), solve_projected(B)
    intervals = None if req.intervals is None else [tuple(x) for x in req.intervals]
    rep = compare_solutions(tA, tB, req.relation, intervals)
    note = f"worst node {rep.worst_node}" if rep.worst_node is not None else ""
    return [
        ResultRow(run_id=run, scenario=A.name, N=A.N, quantity=f"{rep.relation}.max_violation",
                  value=rep.max_violation, level=req.penalty, note=note),
        ResultRow(run_id=run, scenario=A.name, N=A.N, quantity=f"{rep.relation}.checked", value=rep.checked,
                  level=req.penalty),
    ]

def _run_tanaka(args, cfg: RunConfig, run: str) -> List[ResultRow]:
    req = cfg.tanaka
    lattice = build_lattice(cfg.params.get("T", 1.0), cfg.steps)
    n = lattice.N
    level_rng = np.random.default_rng([cfg.seed, 1])
    rows = []
    k = 0
    for batch in sample_paths(lattice, req.paths, seed=cfg.seed):
        for X in batch.w():
            a = req.level if req.level is not None else float(level_rng.integers(-n, n + 1)) * lattice.grid.sqrt_h
            rep = tanaka_check(X, a, levels=req.grid_levels)
            base = dict(run_id=run, scenario="W", N=n, sweep=k, note=f"a={a:.6g}")
            rows.append(ResultRow(quantity="local_time", value=rep.local_time, **base))
            rows.append(ResultRow(quantity="identity_residual", value=rep.identity_residual, **base))
            rows.append(ResultRow(quantity="min_increment", value=rep.min_increment, **base))
            rows.append(ResultRow(quantity="occupation_relative", value=rep.occupation_relative, **base))
            k += 1
    return rows

def _run_oracle(args, cfg: RunConfig, run: str) -> List[ResultRow]:
    problem = scenario(cfg.scenario, cfg.params, cfg.steps, cfg.p)
    base = dict(run_id=run, scenario=problem.name, N=problem.N)
    if args.kind == "american":
        if cfg.scenario != "american-put":
            raise ConfigError("The american oracle needs the american-put scenario", key="scenario")
        prm = cfg.params
        price = american_dp_oracle(prm["r"], prm["sigma"], prm["x0"], prm["strike"], prm["T"], cfg.steps)
        solved = solve_shifted(problem, -prm["r"]).Y0
        if args.pin:
            pin_fixture(args.fixtures or FIXTURES_PATH, "american_put", price,
                        note=f"american_dp_oracle N={cfg.steps}")
        return [
            ResultRow(quantity="oracle.american_put", value=price, note="dynamic programming", **base),
            ResultRow(quantity="solver.Y0", value=solved, note=f"shift a={-prm['r']:g}", **base),
            ResultRow(quantity="abs_diff", value=abs(price - solved), **base),
        ]
    if args.pin:
        raise ConfigError("--pin applies to the american oracle only", key="pin")
    value = exhaustive_stopping_oracle(problem)
    solved = solve_projected(problem).Y0
    return [
        ResultRow(quantity="oracle.stopping", value=value, note="path tree", **base),
        ResultRow(quantity="solver.Y0", value=solved, note="projected", **base),
        ResultRow(quantity="abs_diff", value=abs(value - solved), **base),
    ]

RUNNERS = {
    "solve": _run_solve,
    "sweep": _run_sweep,
    "picard": _run_picard,
    "estimates": _run_estimates,
    "compare": _run_compare,
    "tanaka": _run_tanaka,
    "oracle": _run_oracle,
}

def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the rbsde-lab command.

    Returns:
        0 on success, 2 on invalid input, 3 when a solver fails, 1 on any other error
    """
    setup()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_INVALID

    try:
        cfg = config_from_args(args)
        run = run_id(cfg, args.command)
        logger.info(f"Run {run}: {args.command} on {cfg.scenario} N={cfg.steps}")
        rows = RUNNERS[args.command](args, cfg, run)
        if cfg.out:
            write_csv(rows, cfg.out)
        else:
            rows_frame(rows).to_csv(sys.stdout, index=False, lineterminator="\n", float_format="%.17g")
    except SolverError as e:
        logger.error(f"Solver failure: {e}")
        return EXIT_SOLVER
    except ConfigError as e:
        logger.error(f"Invalid configuration{'' if e.key is None else f' ({e.key})'}: {e}")
        return EXIT_INVALID
    except (LabError, ValueError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_INVALID
    except Exception as e:
        logger.exception(f"Internal error in {args.command}: {e}")
        return EXIT_INTERNAL
    return EXIT_OK
