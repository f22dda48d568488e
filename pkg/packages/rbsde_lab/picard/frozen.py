import logging
from typing import Optional

import numpy as np

from ..bsde import StepConfig, backward_sweep
from ..lattice import LatticeProcess
from ..problem import Problem
from ..reflect.solvers import triple_from_sweep
from ..reflect.triple import MODE_FROZEN, SolutionTriple

logger = logging.getLogger(__name__)

def solve_z_frozen(
    problem: Problem,
    V: LatticeProcess,
    cfg: Optional[StepConfig] = None,
    start: int = 0,
    stop: Optional[int] = None,
    terminal: Optional[np.ndarray] = None,
) -> SolutionTriple:
    """
    Projected reflected solve with the driver's z argument frozen at V.

    The effective driver is g(t, y) = f(t, y, V_t); the returned Z is still the
    extracted martingale integrand of Y.

    Args:
        problem: The problem
        V: Exogenous z process defined on start..stop-1
        cfg: Step configuration
        start: First step of the interval
        stop: Last step of the interval, defaults to N
        terminal: Y at step stop, defaults to xi

    Returns:
        SolutionTriple on start..stop
    """
    cfg = cfg or StepConfig()
    res = backward_sweep(problem, cfg, start=start, stop=stop, terminal=terminal, frozen_z=V, project=True)
    return triple_from_sweep(problem, res, MODE_FROZEN, cfg)
