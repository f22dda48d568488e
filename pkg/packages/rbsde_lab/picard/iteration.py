import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ..analysis.norms import hp_norm, sp_norm
from ..bsde import StepConfig
from ..common.errors import PicardDivergenceError, ProblemError
from ..lattice import constant_process, empty_values, process_from_rows
from ..problem import Problem
from ..reflect.triple import MODE_PICARD, SolutionTriple
from .frozen import solve_z_frozen
from .schedule import BlockSchedule, PicardConfig, block_schedule

logger = logging.getLogger(__name__)

class PicardSweep(BaseModel):
    block: int
    start: int
    stop: int
    sweep: int
    hp_diff: Optional[float] = None
    hp_stderr: Optional[float] = None
    sp_diff: Optional[float] = None
    ratio: Optional[float] = None
    method: Optional[str] = None

class PicardTrace(BaseModel):
    """Successive differences and contraction ratios, block by block"""
    schedule: BlockSchedule
    sweeps: List[PicardSweep] = Field(default_factory=list)
    converged: bool = False

    def block_sweeps(self, block: int) -> List[PicardSweep]:
        return [s for s in self.sweeps if s.block == block]

    def ratios(self, block: Optional[int] = None) -> List[float]:
        rows = self.sweeps if block is None else self.block_sweeps(block)
        return [s.ratio for s in rows if s.ratio is not None]

def picard_solve(
    problem: Problem,
    pcfg: Optional[PicardConfig] = None,
    cfg: Optional[StepConfig] = None,
) -> Tuple[SolutionTriple, PicardTrace]:
    """
    Reflected solve by Picard iteration over the z argument, block by block.

    Blocks are processed backward in time. Inside a block the driver is frozen
    at the previous sweep's Z, starting from Z = 0, until the H^p distance of
    successive Z falls below stop_tol. The initial-time Y of each block is the
    terminal value of the block before it.

    Args:
        problem: The problem
        pcfg: Picard configuration
        cfg: Step configuration

    Returns:
        (glued SolutionTriple, PicardTrace)

    Raises:
        PicardDivergenceError: A block did not reach stop_tol within max_sweeps
    """
    pcfg = pcfg or PicardConfig()
    cfg = cfg or StepConfig()
    gen = problem.gen
    if gen.h5 is not None and gen.h5.alpha * pcfg.p >= 1:
        raise ProblemError(f"Need alpha * p < 1, got alpha={gen.h5.alpha} p={pcfg.p}")
    lattice = problem.lattice
    n = lattice.N

    if pcfg.blocks is not None:
        if pcfg.blocks[-1] != n:
            raise ProblemError(f"Block boundaries must end at N={n}, got {pcfg.blocks}")
        schedule = BlockSchedule(delta=max(b - a for a, b in zip(pcfg.blocks, pcfg.blocks[1:])) * lattice.h,
                                 steps=list(pcfg.blocks), times=[s * lattice.h for s in pcfg.blocks])
    else:
        schedule = block_schedule(problem.T, gen.lam, pcfg.chat, n)
    trace = PicardTrace(schedule=schedule)
    logger.info(f"Picard solve of {problem.name}: {schedule.count} blocks, p={pcfg.p}, chat={pcfg.chat}")

    Y = empty_values(lattice)
    Z = empty_values(lattice)
    dK = empty_values(lattice)
    terminal = problem.xi_T
    zero = constant_process(lattice, 0.0, 0, n - 1)

    bounds = list(zip(schedule.steps, schedule.steps[1:]))
    for block in range(len(bounds) - 1, -1, -1):
        a, b = bounds[block]
        V = zero
        prev: Optional[SolutionTriple] = None
        prev_diff: Optional[float] = None
        done = False
        for sweep in range(1, pcfg.max_sweeps + 1):
            tri = solve_z_frozen(problem, V, cfg, start=a, stop=b, terminal=terminal)
            row = PicardSweep(block=block, start=a, stop=b, sweep=sweep)
            if prev is not None:
                dz = hp_norm(tri.Z - prev.Z, pcfg.p, mode=pcfg.norm_mode, count=pcfg.count, seed=pcfg.seed)
                dy = sp_norm(tri.Y - prev.Y, pcfg.p, mode=pcfg.norm_mode, count=pcfg.count, seed=pcfg.seed)
                row.hp_diff = dz.value
                row.hp_stderr = dz.stderr
                row.sp_diff = dy.value
                row.method = dz.method
                if prev_diff is not None:
                    row.ratio = 0.0 if prev_diff == 0 else dz.value / prev_diff
                prev_diff = dz.value
                done = dz.value <= pcfg.stop_tol
            trace.sweeps.append(row)
            logger.debug(f"Block {block} sweep {sweep}: H diff {row.hp_diff} ratio {row.ratio}")
            prev = tri
            V = process_from_rows(lattice, np.nan_to_num(tri.Z.values, nan=0.0), 0, n - 1)
            if done:
                break
        if not done:
            raise PicardDivergenceError(
                f"Block {block} [{a},{b}] did not contract to {pcfg.stop_tol} in {pcfg.max_sweeps} sweeps; "
                f"ratios {trace.ratios(block)}",
                trace=trace,
            )
        Y[a: b + 1] = np.where(np.isnan(prev.Y.values[a: b + 1]), Y[a: b + 1], prev.Y.values[a: b + 1])
        Z[a: b] = prev.Z.values[a: b]
        dK[a: b] = prev.dK.values[a: b]
        terminal = prev.Y.row(a)

    trace.converged = True
    triple = SolutionTriple(
        Y=process_from_rows(lattice, Y),
        Z=process_from_rows(lattice, Z, 0, n - 1),
        dK=process_from_rows(lattice, dK, 0, n - 1),
        mode=MODE_PICARD,
        cfg=cfg,
    )
    logger.info(f"Picard solve done: Y0={triple.Y0}, {len(trace.sweeps)} sweeps")
    return triple, trace
