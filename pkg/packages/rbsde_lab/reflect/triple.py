import math
import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from ..bsde import StepConfig
from ..common.errors import LatticeError
from ..lattice import LatticeProcess, process_from_rows
from ..problem import Obstacle, Problem

logger = logging.getLogger(__name__)

MODE_PROJECTED = "projected"
MODE_PENALIZED = "penalized"
MODE_FROZEN = "z-frozen"
MODE_PICARD = "picard"

@dataclass(frozen=True)
class SolutionTriple:
    """
    (Y, Z, K) on the lattice.

    K is path dependent, so it is stored through its increments: dK(i, j) is
    the push applied at node (i, j) on the way from step i to step i + 1, and
    K_i = sum_{k < i} dK_k along a path.
    """
    Y: LatticeProcess
    Z: LatticeProcess
    dK: LatticeProcess
    mode: str
    cfg: StepConfig
    level: Optional[float] = None

    @property
    def lattice(self):
        return self.Y.lattice

    @property
    def Y0(self) -> float:
        return float(self.Y.row(self.Y.first)[0])

    def K_along(self, nodes: np.ndarray) -> np.ndarray:
        """
        Cumulative K along paths.

        Args:
            nodes: Node indices (M, N + 1)

        Returns:
            Array (M, N + 1) with K_0 = 0
        """
        inc = np.nan_to_num(self.dK.along(nodes), nan=0.0)
        K = np.zeros_like(inc)
        np.cumsum(inc[:, :-1], axis=1, out=K[:, 1:])
        return K

    def label(self) -> str:
        return self.mode if self.level is None else f"{self.mode}({self.level:g})"

class SkorokhodLevel(BaseModel):
    level: float
    residual: float
    max_violation: float

class SkorokhodReport(BaseModel):
    """
    Skorokhod pairing E[sum_i (Y_i - L_i) dK_i] and obstacle violation.

    The pairing is signed: it is 0 for the projected scheme and <= 0 for
    penalized solutions, whose pushes happen below the obstacle.
    """
    mode: str
    level: Optional[float] = None
    residual: float
    abs_residual: float
    max_violation: float
    min_gap: float
    levels: List[SkorokhodLevel] = Field(default_factory=list)

def _obstacle_values(triple: SolutionTriple, obstacle: Union[LatticeProcess, Obstacle, Problem]) -> LatticeProcess:
    if isinstance(obstacle, Problem):
        return obstacle.L
    if isinstance(obstacle, Obstacle):
        return obstacle.on_lattice(triple.lattice)
    if obstacle.lattice.grid != triple.lattice.grid:
        raise LatticeError("Obstacle and triple live on different lattices")
    return obstacle

def skorokhod_report(triple: SolutionTriple, obstacle: Union[LatticeProcess, Obstacle, Problem]) -> SkorokhodReport:
    """
    Skorokhod residual and violation metrics, exact slice by slice.

    Args:
        triple: A solution
        obstacle: L as a process, an Obstacle or the problem it belongs to

    Returns:
        SkorokhodReport
    """
    L = _obstacle_values(triple, obstacle)
    lattice = triple.lattice
    residual = 0.0
    for i in triple.dK.steps:
        dk = triple.dK.row(i)
        gap = triple.Y.row(i) - L.row(i)
        with np.errstate(invalid="ignore"):
            # No push means no contribution, also where L is the sentinel
            term = np.where(dk == 0, 0.0, gap * dk)
        residual += lattice.expect(term, i)
    gaps = []
    for i in triple.Y.steps:
        g = triple.Y.row(i) - L.row(i)
        gaps.append(np.min(g[np.isfinite(g)]) if np.isfinite(g).any() else math.inf)
    min_gap = float(min(gaps)) if gaps else math.inf
    return SkorokhodReport(
        mode=triple.mode,
        level=triple.level,
        residual=float(residual),
        abs_residual=abs(float(residual)),
        max_violation=max(0.0, -min_gap),
        min_gap=min_gap,
    )

def shift_solution(triple: SolutionTriple, a: float) -> SolutionTriple:
    """(e^{at} Y, e^{at} Z, e^{a t_i} dK_i), the solution of the shifted problem"""
    if a == 0:
        return triple
    lattice = triple.lattice
    factor = np.exp(a * lattice.grid.times)[:, None]
    return replace(
        triple,
        Y=process_from_rows(lattice, triple.Y.values * factor, triple.Y.first, triple.Y.last),
        Z=process_from_rows(lattice, triple.Z.values * factor, triple.Z.first, triple.Z.last),
        dK=process_from_rows(lattice, triple.dK.values * factor, triple.dK.first, triple.dK.last),
    )

def unshift_solution(triple: SolutionTriple, a: float) -> SolutionTriple:
    """Inverse of shift_solution"""
    return shift_solution(triple, -a)
