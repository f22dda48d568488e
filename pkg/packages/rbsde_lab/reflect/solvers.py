import logging
from typing import Optional

from ..bsde import StepConfig, backward_sweep
from ..bsde.solver import SweepResult
from ..common.errors import ProblemError
from ..lattice import process_from_rows
from ..problem import Problem, exp_shift
from .triple import MODE_PENALIZED, MODE_PROJECTED, SolutionTriple, unshift_solution

logger = logging.getLogger(__name__)

def triple_from_sweep(problem: Problem, res: SweepResult, mode: str, cfg: StepConfig,
                      level: Optional[float] = None) -> SolutionTriple:
    lattice = problem.lattice
    return SolutionTriple(
        Y=process_from_rows(lattice, res.Y, res.start, res.stop),
        Z=process_from_rows(lattice, res.Z, res.start, res.stop - 1),
        dK=process_from_rows(lattice, res.dK, res.start, res.stop - 1),
        mode=mode,
        cfg=cfg,
        level=level,
    )

def solve_projected(problem: Problem, cfg: Optional[StepConfig] = None) -> SolutionTriple:
    """
    Reflected solve by projection onto the obstacle after each implicit step.

    Y_i = max(ycand, L_i) with ycand the implicit step from E[Y_{i+1}], and
    dK_i = Y_i - ycand. With the sentinel obstacle this is the plain solver.

    Args:
        problem: The problem
        cfg: Step configuration

    Returns:
        SolutionTriple in projected mode
    """
    cfg = cfg or StepConfig()
    res = backward_sweep(problem, cfg, project=True)
    triple = triple_from_sweep(problem, res, MODE_PROJECTED, cfg)
    logger.debug(f"Projected solve of {problem.name} N={problem.N}: Y0={triple.Y0}")
    return triple

def solve_penalized(problem: Problem, n: float, cfg: Optional[StepConfig] = None) -> SolutionTriple:
    """
    Penalized solve: y - h f(t, y, z) - h n (y - L)^- = E[Y_{i+1} | node] at each node.

    Args:
        problem: The problem
        n: Penalty level >= 0
        cfg: Step configuration

    Returns:
        SolutionTriple in penalized mode with dK_i = n h (Y_i - L_i)^-
    """
    if not (n >= 0):
        raise ProblemError(f"Penalty level must be >= 0, got {n}")
    cfg = cfg or StepConfig()
    res = backward_sweep(problem, cfg, penalty=float(n))
    triple = triple_from_sweep(problem, res, MODE_PENALIZED, cfg, level=float(n))
    logger.debug(f"Penalized solve of {problem.name} N={problem.N} n={n}: Y0={triple.Y0}")
    return triple

def solve_shifted(problem: Problem, a: float, cfg: Optional[StepConfig] = None, mode: str = MODE_PROJECTED,
                  level: Optional[float] = None) -> SolutionTriple:
    """
    Solve the exponentially shifted problem and map the solution back.

    Args:
        problem: The problem
        a: Shift rate
        cfg: Step configuration
        mode: "projected" or "penalized"
        level: Penalty level for penalized mode

    Returns:
        The unshifted SolutionTriple
    """
    shifted = exp_shift(problem, a)
    if mode == MODE_PROJECTED:
        triple = solve_projected(shifted, cfg)
    elif mode == MODE_PENALIZED:
        if level is None:
            raise ProblemError("Penalized mode needs a penalty level")
        triple = solve_penalized(shifted, level, cfg)
    else:
        raise ProblemError(f"Unknown solver mode {mode!r}")
    return unshift_solution(triple, a)
