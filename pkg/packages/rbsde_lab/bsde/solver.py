import logging
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from ..common.errors import LatticeError
from ..lattice import LatticeProcess, cond_expect, empty_values, process_from_rows
from ..problem import Problem, no_obstacle
from .step import StepConfig, check_step_condition, solve_implicit

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class SolutionPair:
    """Y on all steps, Z on steps 0..N-1"""
    Y: LatticeProcess
    Z: LatticeProcess
    cfg: StepConfig

    @property
    def Y0(self) -> float:
        return float(self.Y.row(self.Y.first)[0])

def z_extract(Y_next: Union[LatticeProcess, np.ndarray], i: int) -> np.ndarray:
    """
    Z at step i from the step-(i + 1) values: (Y(i+1, j+1) - Y(i+1, j)) / (2 sqrt(h)).

    Args:
        Y_next: A LatticeProcess defined at step i + 1
        i: The step

    Returns:
        The i + 1 node values of Z at step i
    """
    if not isinstance(Y_next, LatticeProcess):
        raise LatticeError("z_extract needs a LatticeProcess to know the step size")
    if i < 0 or i + 1 > Y_next.last:
        raise LatticeError(f"Step {i} has no successor in {Y_next.first}..{Y_next.last}")
    nxt = Y_next.row(i + 1)
    return (nxt[1:] - nxt[:-1]) / (2.0 * Y_next.lattice.grid.sqrt_h)

def _z_from_row(nxt: np.ndarray, sqrt_h: float) -> np.ndarray:
    return (nxt[1:] - nxt[:-1]) / (2.0 * sqrt_h)

@dataclass(frozen=True)
class SweepResult:
    Y: np.ndarray
    Z: np.ndarray
    dK: np.ndarray
    start: int
    stop: int

def backward_sweep(
    problem: Problem,
    cfg: StepConfig,
    start: int = 0,
    stop: Optional[int] = None,
    terminal: Optional[np.ndarray] = None,
    frozen_z: Optional[LatticeProcess] = None,
    penalty: float = 0.0,
    project: bool = False,
) -> SweepResult:
    """
    Backward recursion on steps stop-1 down to start.

    At each step yhat = E[Y_{i+1} | node], z is the difference quotient and the
    candidate solves y - h f(t_i, y, z) - h n (L_i - y)^+ = yhat. With project
    set, Y_i = max(candidate, L_i) and dK_i = Y_i - candidate; with a penalty,
    dK_i = n h (Y_i - L_i)^-. With frozen_z the driver is evaluated at V_i
    instead of the extracted z.

    Args:
        problem: The problem
        cfg: Step configuration
        start: First step to compute
        stop: Step holding the terminal values, defaults to N
        terminal: Values at step stop, defaults to xi (stop must then be N)
        frozen_z: Exogenous z argument defined on start..stop-1
        penalty: Penalty level n >= 0
        project: Apply the obstacle projection

    Returns:
        SweepResult with writable arrays of the lattice shape
    """
    lattice = problem.lattice
    n = lattice.N
    stop = n if stop is None else stop
    if not (0 <= start < stop <= n):
        raise LatticeError(f"Invalid sweep interval {start}..{stop} for N={n}")
    h = lattice.h
    sqrt_h = lattice.grid.sqrt_h
    gen = problem.gen
    check_step_condition(gen, h, cfg)

    if terminal is None:
        if stop != n:
            raise LatticeError("Terminal values are required for a sweep ending before N")
        terminal = problem.xi_T
    terminal = np.asarray(terminal, dtype=float)
    if terminal.shape != (stop + 1,):
        raise LatticeError(f"Expected {stop + 1} terminal values, got shape {terminal.shape}")

    reflect = problem.obstacle.is_finite
    L = problem.L.values
    Y = empty_values(lattice)
    Z = empty_values(lattice)
    dK = empty_values(lattice)
    Y[stop, : stop + 1] = terminal

    for i in range(stop - 1, start - 1, -1):
        nxt = Y[i + 1, : i + 2]
        yhat = cond_expect(nxt, i)
        z = _z_from_row(nxt, sqrt_h)
        z_arg = z if frozen_z is None else frozen_z.row(i)
        L_i = L[i, : i + 1]
        t = lattice.grid.t(i)
        cand = solve_implicit(yhat, t, z_arg, gen, h, cfg,
                              penalty=penalty if reflect else 0.0,
                              L=L_i if reflect else None)
        if project and reflect:
            y = np.maximum(cand, L_i)
            dk = y - cand
        else:
            y = cand
            if penalty > 0 and reflect:
                dk = penalty * h * np.maximum(L_i - y, 0.0)
            else:
                dk = np.zeros(i + 1)
        Y[i, : i + 1] = y
        Z[i, : i + 1] = z
        dK[i, : i + 1] = dk
    return SweepResult(Y=Y, Z=Z, dK=dK, start=start, stop=stop)

def solve_bsde(problem: Problem, cfg: Optional[StepConfig] = None) -> SolutionPair:
    """
    Solve the non-reflected equation Y_i = E[Y_{i+1}] + h f(t_i, Y_i, Z_i), Y_N = xi.

    A finite obstacle is ignored.

    Args:
        problem: The problem
        cfg: Step configuration, defaults from settings

    Returns:
        SolutionPair
    """
    cfg = cfg or StepConfig()
    if problem.obstacle.is_finite:
        logger.warning(f"solve_bsde ignores the obstacle of {problem.name}")
    lattice = problem.lattice
    plain = problem if not problem.obstacle.is_finite else _without_obstacle(problem)
    res = backward_sweep(plain, cfg)
    n = lattice.N
    pair = SolutionPair(
        Y=process_from_rows(lattice, res.Y),
        Z=process_from_rows(lattice, res.Z, 0, n - 1),
        cfg=cfg,
    )
    logger.debug(f"Solved {problem.name} without reflection: Y0={pair.Y0}")
    return pair

def _without_obstacle(problem: Problem) -> Problem:
    return replace(problem, obstacle=no_obstacle())
