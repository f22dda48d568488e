import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from ..analysis import ESTIMATE_IDS, EstimateReport, StoppingRule, check_estimate, norm_report
from ..bsde import StepConfig, solve_bsde
from ..common.errors import ConfigError
from ..common.limits import EXACT_TOL
from ..lattice import METHOD_SAMPLED, constant_process
from ..picard import PicardTrace
from ..problem import Problem, scenario, scenario_names
from ..reflect import (
    SolutionTriple,
    SweepReport,
    penalization_sweep,
    skorokhod_report,
    solve_penalized,
    solve_projected,
    solve_shifted,
)
from .config import RunConfig
from .results import METHOD_EXACT, ResultRow, entry_row

logger = logging.getLogger(__name__)

MODE_PLAIN = "plain"

class StudyReport(BaseModel):
    rows: List[ResultRow] = Field(default_factory=list)
    verdicts: Dict[str, bool] = Field(default_factory=dict)

class ShiftCheck(BaseModel):
    """Direct solve against shift, solve, unshift"""
    a: float
    max_abs_diff: float
    region_identical: bool
    mismatches: int
    # mismatches at nodes whose continuation value is farther from L than max_abs_diff
    unexplained: int

class CalibrationReport(BaseModel):
    constants: Dict[str, float]
    max_ratios: Dict[str, float]
    margin: float
    reports: List[EstimateReport] = Field(default_factory=list)

def solve_from_config(problem: Problem, cfg: RunConfig, step_cfg: Optional[StepConfig] = None) -> SolutionTriple:
    """Run the solver a config selects"""
    if cfg.solver == "projected":
        return solve_projected(problem, step_cfg)
    if cfg.solver == "penalized":
        return solve_penalized(problem, cfg.level, step_cfg)
    if cfg.solver == "shifted":
        return solve_shifted(problem, cfg.shift, step_cfg)
    pair = solve_bsde(problem, step_cfg)
    n = problem.N
    return SolutionTriple(Y=pair.Y, Z=pair.Z, dK=constant_process(problem.lattice, 0.0, 0, n - 1),
                          mode=MODE_PLAIN, cfg=pair.cfg)

def _flag(run: str, problem: Problem, name: str, ok: bool, note: str = "") -> ResultRow:
    return ResultRow(run_id=run, scenario=problem.name, N=problem.N, quantity=f"verdict.{name}",
                     value=1.0 if ok else 0.0, method=METHOD_EXACT, note=note)

def solve_rows(run: str, problem: Problem, triple: SolutionTriple, cfg: RunConfig) -> List[ResultRow]:
    """Y0, norms and the Skorokhod pairing of one solution"""
    base = dict(run_id=run, scenario=problem.name, N=problem.N, level=triple.level, note=triple.label())
    rows = [ResultRow(quantity="Y0", value=triple.Y0, **base)]
    p = cfg.p if cfg.p is not None else problem.p
    rep = norm_report(triple.Y, triple.Z, p, cfg.betas, mode=cfg.norm_mode, count=cfg.count, seed=cfg.seed)
    rows.append(entry_row(run, problem.name, problem.N, rep.sp, level=triple.level))
    rows.append(entry_row(run, problem.name, problem.N, rep.hp, level=triple.level))
    rows.append(ResultRow(quantity="D(Y)", value=rep.dnorm, **base))
    for entry in rep.betas.values():
        rows.append(entry_row(run, problem.name, problem.N, entry, level=triple.level))
    if problem.obstacle.is_finite:
        sk = skorokhod_report(triple, problem)
        rows.append(ResultRow(quantity="skorokhod", value=sk.residual, **base))
        rows.append(ResultRow(quantity="max_violation", value=sk.max_violation, **base))
    return rows

def sweep_rows(run: str, problem: Problem, report: SweepReport) -> List[ResultRow]:
    """Per-level distances and residuals, then the sweep's verdicts"""
    N = problem.N
    name = problem.name
    rows = [
        ResultRow(run_id=run, scenario=name, N=N, quantity="reference.Y0", value=report.reference_Y0),
        entry_row(run, name, N, report.reference_sp, note="projected"),
        ResultRow(run_id=run, scenario=name, N=N, quantity="reference.skorokhod", value=report.reference_residual),
    ]
    for k, row in enumerate(report.rows):
        base = dict(run_id=run, scenario=name, N=N, level=row.level, sweep=k)
        rows.append(ResultRow(quantity="Y0", value=row.Y0, **base))
        rows.append(entry_row(run, name, N, row.sp_dist, level=row.level, sweep=k))
        rows.append(entry_row(run, name, N, row.hp_dist, level=row.level, sweep=k))
        if row.k_dist is not None:
            rows.append(entry_row(run, name, N, row.k_dist, level=row.level, sweep=k))
        rows.append(ResultRow(quantity="skorokhod", value=row.residual, **base))
        rows.append(ResultRow(quantity="max_violation", value=row.max_violation, **base))
        for entry in row.betas.values():
            rows.append(entry_row(run, name, N, entry, level=row.level, sweep=k))
    if len(report.rows) > 1:
        rows.append(_flag(run, problem, "sp_decreasing", report.sp_decreasing))
        rows.append(_flag(run, problem, "hp_decreasing", report.hp_decreasing))
        rows.append(_flag(run, problem, "residual_decreasing", report.residual_decreasing))
        rows.append(_flag(run, problem, "monotone", report.monotone_violation <= EXACT_TOL,
                          note=f"violation={report.monotone_violation:.3g}"))
    return rows

def picard_rows(run: str, problem: Problem, triple: SolutionTriple, trace: PicardTrace) -> List[ResultRow]:
    N = problem.N
    rows = [ResultRow(run_id=run, scenario=problem.name, N=N, quantity="Y0", value=triple.Y0, note="picard")]
    for s in trace.sweeps:
        note = f"block={s.block} [{s.start},{s.stop}]"
        sampled = s.method == METHOD_SAMPLED
        if s.hp_diff is not None:
            rows.append(ResultRow(run_id=run, scenario=problem.name, N=N, quantity="H(dZ)", value=s.hp_diff,
                                  method=s.method, stderr=(s.hp_stderr or 0.0) if sampled else None,
                                  sweep=s.sweep, note=note))
        if s.ratio is not None:
            rows.append(ResultRow(run_id=run, scenario=problem.name, N=N, quantity="ratio", value=s.ratio,
                                  method="ratio-of-sampled" if sampled else METHOD_EXACT, sweep=s.sweep, note=note))
    return rows

def exercise_region_check(problem: Problem, a: float, step_cfg: Optional[StepConfig] = None) -> ShiftCheck:
    """
    Compare a direct projected solve with shift, solve, unshift at rate a.

    The exercise region is the set of nodes with dK > 0. A node can only
    switch sides when its continuation value is within max |dY| of L.
    """
    direct = solve_projected(problem, step_cfg)
    shifted = solve_shifted(problem, a, step_cfg)
    with np.errstate(invalid="ignore"):
        diff = float(np.nanmax(np.abs(direct.Y.values - shifted.Y.values)))
        region_a = np.nan_to_num(direct.dK.values, nan=0.0) > 0
        region_b = np.nan_to_num(shifted.dK.values, nan=0.0) > 0
        cont = direct.Y.values - np.nan_to_num(direct.dK.values, nan=0.0)
        near = np.abs(cont - problem.L.values) <= diff + EXACT_TOL
    mismatch = region_a != region_b
    check = ShiftCheck(
        a=a,
        max_abs_diff=diff,
        region_identical=not mismatch.any(),
        mismatches=int(mismatch.sum()),
        unexplained=int((mismatch & ~near).sum()),
    )
    logger.info(f"Shift check a={a}: max |dY| {diff:.3g}, {check.mismatches} region mismatches")
    return check

def convergence_study(cfg: RunConfig, run: str = "", step_cfg: Optional[StepConfig] = None) -> StudyReport:
    """
    Penalty-level and N-refinement convergence tables.

    Levels in cfg.levels are compared with the projected reference on cfg.steps;
    step counts in cfg.refine are compared with the finest one and with their
    predecessor. A single point gives rows but no verdict. When cfg.shift is
    set, the exercise-region agreement of the shifted solve is added.
    """
    report = StudyReport()
    if cfg.levels:
        problem = scenario(cfg.scenario, cfg.params, cfg.steps, cfg.p)
        sweep = penalization_sweep(problem, cfg.levels, step_cfg, p=cfg.p, betas=cfg.betas, mode=cfg.norm_mode,
                                   count=cfg.count, seed=cfg.seed, workers=cfg.workers)
        report.rows.extend(sweep_rows(run, problem, sweep))
        if len(cfg.levels) > 1:
            report.verdicts.update(
                sp_decreasing=sweep.sp_decreasing,
                hp_decreasing=sweep.hp_decreasing,
                residual_decreasing=sweep.residual_decreasing,
                monotone=sweep.monotone_violation <= EXACT_TOL,
            )

    if cfg.refine:
        steps = list(cfg.refine)
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ConfigError(f"Refinement step counts must increase strictly, got {steps}", key="refine")
        values = []
        for k, n in enumerate(steps):
            problem = scenario(cfg.scenario, cfg.params, n, cfg.p)
            y0 = solve_from_config(problem, cfg, step_cfg).Y0
            values.append(y0)
            report.rows.append(ResultRow(run_id=run, scenario=problem.name, N=n, quantity="Y0", value=y0, sweep=k,
                                         note=cfg.solver))
        finest = values[-1]
        successive = [abs(b - a) for a, b in zip(values, values[1:])]
        for k, (n, y0) in enumerate(zip(steps[:-1], values[:-1])):
            report.rows.append(ResultRow(run_id=run, scenario=cfg.scenario, N=n, quantity="abs_err_vs_finest",
                                         value=abs(y0 - finest), sweep=k, note=f"finest N={steps[-1]}"))
            report.rows.append(ResultRow(run_id=run, scenario=cfg.scenario, N=steps[k + 1], quantity="abs_step_diff",
                                         value=successive[k], sweep=k + 1))
        if len(successive) > 1:
            report.verdicts["refine_decreasing"] = all(b < a for a, b in zip(successive, successive[1:]))

    if cfg.shift is not None:
        problem = scenario(cfg.scenario, cfg.params, cfg.steps, cfg.p)
        check = exercise_region_check(problem, cfg.shift, step_cfg)
        base = dict(run_id=run, scenario=problem.name, N=problem.N, note=f"a={cfg.shift:g}")
        report.rows.append(ResultRow(quantity="shift.max_abs_diff", value=check.max_abs_diff, **base))
        report.rows.append(ResultRow(quantity="shift.region_mismatches", value=check.mismatches, **base))
        report.rows.append(ResultRow(quantity="shift.region_unexplained", value=check.unexplained, **base))
        report.verdicts["region_identical"] = check.region_identical
        report.verdicts["region_explained"] = check.unexplained == 0

    for name, ok in report.verdicts.items():
        logger.info(f"Verdict {name}: {'pass' if ok else 'fail'}")
    return report

def calibrate_constants(
    scenarios: Optional[Sequence[str]] = None,
    ids: Sequence[str] = ESTIMATE_IDS,
    p: float = 2.0,
    steps: int = 12,
    levels: Sequence[float] = (1, 4, 16, 64),
    margin: float = 2.0,
    stopping: Sequence[StoppingRule] = (StoppingRule(), StoppingRule(kind="hit_above", level=0.5)),
) -> CalibrationReport:
    """
    Largest LHS/RHS ratio per estimate over the catalog, times a margin.

    P4.2 is evaluated on the penalized solutions at every level so that one
    constant covers them all; the other ids use the projected solution. The
    stopped estimates use every rule in `stopping`.
    """
    names = list(scenarios) if scenarios is not None else scenario_names()
    reports: List[EstimateReport] = []
    for name in names:
        problem = scenario(name, steps=steps, p=p)
        projected = solve_projected(problem)
        penalized = [solve_penalized(problem, n) for n in levels]
        for id in ids:
            triples = penalized if id == "P4.2" else [projected]
            rules = stopping if id in ("P2.1", "P4.2") else [StoppingRule()]
            for triple in triples:
                for tau in rules:
                    reports.append(check_estimate(id, problem, triple, tau=tau, p=p))
    max_ratios = {id: max((r.ratio for r in reports if r.id == id), default=0.0) for id in ids}
    constants = {id: margin * max(v, 1.0) for id, v in max_ratios.items()}
    logger.info(f"Calibrated constants {constants}")
    return CalibrationReport(constants=constants, max_ratios=max_ratios, margin=margin, reports=reports)
