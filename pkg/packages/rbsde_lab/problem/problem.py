import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Union

import numpy as np

from ..common.errors import ProblemError
from ..common.limits import EXACT_TOL
from ..lattice import (
    AugmentedLattice,
    BinomialLattice,
    LatticeProcess,
    NodeFunction,
    augment_running_max,
    process_from_function,
)
from .generator import Generator, offset_generator
from .obstacle import Obstacle, offset_obstacle

logger = logging.getLogger(__name__)

@dataclass(frozen=True, eq=False)
class Problem:
    """
    Data (xi, f, L) of a reflected backward equation on a lattice.

    xi is defined on step N only. L is tabulated once at construction.
    """
    lattice: BinomialLattice
    xi: LatticeProcess
    gen: Generator
    obstacle: Obstacle
    p: float = 2.0
    name: str = "custom"
    params: Dict[str, Any] = field(default_factory=dict)
    L: LatticeProcess = field(init=False, repr=False)

    def __post_init__(self):
        n = self.lattice.N
        if not (1 <= self.p <= 2):
            raise ProblemError(f"Integrability exponent p must lie in [1, 2], got {self.p}")
        if self.xi.lattice.grid != self.lattice.grid or self.xi.last != n or self.xi.first > n:
            raise ProblemError("Terminal value must be a process on the problem lattice defined at step N")
        xi_T = self.xi.row(n)
        if not np.all(np.isfinite(xi_T)):
            raise ProblemError("Terminal value has non-finite entries")
        L = self.obstacle.on_lattice(self.lattice)
        L_T = L.row(n)
        slack = EXACT_TOL * (1.0 + np.abs(xi_T))
        bad = np.nonzero(L_T > xi_T + slack)[0]
        if bad.size:
            j = int(bad[0])
            raise ProblemError(f"Obstacle exceeds terminal value at node ({n},{j}): L_T={L_T[j]} > xi={xi_T[j]}")
        object.__setattr__(self, "L", L)

    @property
    def N(self) -> int:
        return self.lattice.N

    @property
    def T(self) -> float:
        return self.lattice.T

    @property
    def xi_T(self) -> np.ndarray:
        return self.xi.row(self.lattice.N)

def terminal_process(lattice: BinomialLattice, fn: NodeFunction) -> LatticeProcess:
    """xi as a process defined on the last step only"""
    return process_from_function(lattice, fn, first=lattice.N, last=lattice.N)

def make_problem(
    lattice: BinomialLattice,
    xi: Union[NodeFunction, float],
    gen: Generator,
    obstacle: Obstacle,
    p: float = 2.0,
    name: str = "custom",
    params: Optional[Dict[str, Any]] = None,
) -> Problem:
    """
    Build a problem from node functions.

    Args:
        lattice: The lattice
        xi: Terminal value as f(T, w) or a constant
        gen: The driver
        obstacle: The barrier
        p: Integrability exponent in [1, 2]
        name: Label used in logs and result rows
        params: Parameters recorded with the problem

    Returns:
        The validated problem
    """
    if not callable(xi):
        c = float(xi)
        xi = lambda t, w: np.full(np.shape(w), c)
    return Problem(
        lattice=lattice,
        xi=terminal_process(lattice, xi),
        gen=gen,
        obstacle=obstacle,
        p=p,
        name=name,
        params=dict(params or {}),
    )

def lift_to_lattice(
    problem: Problem,
    expr: Union[str, NodeFunction, float],
    running_max: bool = False,
) -> Union[LatticeProcess, AugmentedLattice]:
    """
    Tabulate a time-node expression on the problem lattice.

    Args:
        problem: The problem
        expr: "L" for the obstacle, "xi" for the terminal value, a constant, or f(t, w)
        running_max: Return the running-max augmentation of the expression instead

    Returns:
        A LatticeProcess, or an AugmentedLattice when running_max is set
    """
    lattice = problem.lattice
    if isinstance(expr, str):
        if expr in ("L", "obstacle"):
            proc = problem.L
        elif expr == "xi":
            proc = problem.xi
        else:
            raise ProblemError(f"Unknown named expression {expr!r}")
    elif callable(expr):
        proc = process_from_function(lattice, expr)
    else:
        c = float(expr)
        proc = process_from_function(lattice, lambda t, w: np.full(w.shape, c))
    if not running_max:
        return proc
    if proc.first != 0 or proc.last != lattice.N:
        raise ProblemError("Running max needs an expression defined on every step")
    return augment_running_max(lattice, proc)

def offset_problem(
    problem: Problem,
    xi_offset: Union[float, NodeFunction] = 0.0,
    f_offset: float = 0.0,
    L_offset: float = 0.0,
    name: Optional[str] = None,
) -> Problem:
    """
    Shift the data of a problem: xi + xi_offset, f + f_offset, L + L_offset.

    Nonnegative offsets give a problem whose solution dominates the original.
    """
    n = problem.N
    if callable(xi_offset):
        extra = process_from_function(problem.lattice, xi_offset, first=n, last=n)
        xi = problem.xi + extra
    else:
        xi = problem.xi + float(xi_offset)
    return replace(
        problem,
        xi=xi,
        gen=offset_generator(problem.gen, float(f_offset)),
        obstacle=offset_obstacle(problem.obstacle, float(L_offset)),
        name=name or f"{problem.name}+offset",
        params={**problem.params, "xi_offset": xi_offset if not callable(xi_offset) else "node",
                "f_offset": f_offset, "L_offset": L_offset},
    )

def obstacle_sup_along(problem: Problem, nodes: np.ndarray) -> np.ndarray:
    """
    Running max of L^+ along paths.

    Args:
        problem: The problem
        nodes: Node indices (M, N + 1)

    Returns:
        Array (M, N + 1) with entry i = max_{k <= i} max(L_k, 0)
    """
    lp = np.maximum(problem.L.along(nodes), 0.0)
    return np.maximum.accumulate(lp, axis=1)

def driver_at_obstacle_sup(problem: Problem, nodes: np.ndarray) -> np.ndarray:
    """
    Integrand |f(t_i, L^{+,*}_i, 0)| * h on steps 0..N-1 along paths.

    Returns:
        Array (M, N); cumulative sums give the time integral up to each step
    """
    n = problem.N
    lstar = obstacle_sup_along(problem, nodes)[:, :n]
    times = problem.lattice.grid.times[None, :n]
    return np.abs(problem.gen.evaluate(times, lstar, np.zeros_like(lstar))) * problem.lattice.h
