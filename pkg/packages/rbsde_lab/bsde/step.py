import logging
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..common.errors import RootFindingError, StepConditionError
from ..common.limits import FD_REL_STEP, MAX_BRACKET_DOUBLINGS
from ..common.settings import get_settings
from ..problem import Generator

logger = logging.getLogger(__name__)

class StepConfig(BaseModel):
    """Controls for the implicit scalar step"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    root_tol: float = Field(default_factory=lambda: get_settings().root_tol, gt=0)
    max_iter: int = Field(default_factory=lambda: get_settings().max_iter, ge=1)
    step_condition: bool = True

def check_step_condition(gen: Generator, h: float, cfg: StepConfig) -> None:
    """Require h * max(mu, 0) <= 1/2 so that y - h f(t, y, z) has slope >= 1/2"""
    if cfg.step_condition and h * max(gen.mu, 0.0) > 0.5:
        raise StepConditionError(
            f"Step condition violated: h*max(mu,0) = {h * max(gen.mu, 0.0):.6g} > 1/2 "
            f"(h={h}, mu={gen.mu}); refine the grid"
        )

def _derivative(gen: Generator, t: float, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    if gen.dfdy is not None:
        return np.broadcast_to(np.asarray(gen.dfdy(t, y, z), dtype=float), y.shape)
    d = FD_REL_STEP * np.maximum(1.0, np.abs(y))
    return (gen.evaluate(t, y + d, z) - gen.evaluate(t, y - d, z)) / (2.0 * d)

def solve_implicit(
    yhat: np.ndarray,
    t: float,
    z: np.ndarray,
    gen: Generator,
    h: float,
    cfg: StepConfig,
    penalty: float = 0.0,
    L: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Solve y - h f(t, y, z) - h n (L - y)^+ = yhat elementwise.

    The map is increasing in y when h * max(mu, 0) <= 1/2, so each equation
    has a unique root. Newton steps are kept inside a bracket grown by doubling
    from yhat +- max(1, |yhat|) and replaced by bisection when they leave it.

    Args:
        yhat: Right-hand sides, one per node
        t: Slice time
        z: z argument per node
        gen: Driver
        h: Step size
        cfg: Tolerance and iteration cap
        penalty: Penalty level n >= 0
        L: Obstacle values per node, required when penalty > 0

    Returns:
        The roots, same shape as yhat
    """
    yhat = np.asarray(yhat, dtype=float)
    z = np.broadcast_to(np.asarray(z, dtype=float), yhat.shape)
    use_penalty = penalty > 0 and L is not None
    if use_penalty:
        L = np.broadcast_to(np.asarray(L, dtype=float), yhat.shape)
        # The sentinel obstacle never activates the penalty
        active_L = np.where(np.isfinite(L), L, -np.inf)

    def F(y):
        val = y - h * gen.evaluate(t, y, z) - yhat
        if use_penalty:
            with np.errstate(invalid="ignore"):
                val = val - h * penalty * np.maximum(active_L - y, 0.0)
        return val

    y = yhat.copy()
    fy = F(y)
    done = fy == 0
    if np.all(done):
        return y

    # Grow the bracket [lo, hi] with F(lo) <= 0 <= F(hi)
    width = np.maximum(1.0, np.abs(yhat))
    lo = yhat - width
    hi = yhat + width
    f_lo = F(lo)
    f_hi = F(hi)
    for k in range(MAX_BRACKET_DOUBLINGS):
        bad_lo = (f_lo > 0) & ~done
        bad_hi = (f_hi < 0) & ~done
        if not (bad_lo.any() or bad_hi.any()):
            break
        width = np.where(bad_lo | bad_hi, 2.0 * width, width)
        lo = np.where(bad_lo, yhat - width, lo)
        hi = np.where(bad_hi, yhat + width, hi)
        f_lo = np.where(bad_lo, F(lo), f_lo)
        f_hi = np.where(bad_hi, F(hi), f_hi)
    else:
        raise RootFindingError(
            f"Could not bracket the implicit step at t={t} after {MAX_BRACKET_DOUBLINGS} doublings; "
            f"the driver may violate its declared mu={gen.mu}"
        )
    if np.any(~np.isfinite(f_lo) | ~np.isfinite(f_hi)):
        raise RootFindingError(f"Implicit step at t={t} produced non-finite values on the bracket")

    tol = cfg.root_tol
    for it in range(cfg.max_iter):
        active = ~done
        if not active.any():
            return y
        lo = np.where(active & (fy < 0), y, lo)
        hi = np.where(active & (fy > 0), y, hi)
        slope = 1.0 - h * _derivative(gen, t, y, z)
        if use_penalty:
            slope = slope + h * penalty * (y < active_L)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = y - fy / slope
        inside = np.isfinite(newton) & (slope > 0) & (newton > lo) & (newton < hi)
        y_new = np.where(inside, newton, 0.5 * (lo + hi))
        y_new = np.where(active, y_new, y)
        scale = np.maximum(1.0, np.abs(y_new))
        step_small = np.abs(y_new - y) <= tol * scale
        narrow = (hi - lo) <= tol * scale
        y = y_new
        fy = np.where(active, F(y), fy)
        done = done | (active & (step_small | narrow | (fy == 0)))
    if np.all(done):
        return y
    worst = float(np.max(np.abs(np.where(done, 0.0, fy))))
    raise RootFindingError(
        f"Implicit step at t={t} did not converge in {cfg.max_iter} iterations (residual {worst:.3g})"
    )

def implicit_step(
    yhat: float,
    t: float,
    z: float,
    gen: Generator,
    h: float,
    cfg: Optional[StepConfig] = None,
    penalty: float = 0.0,
    L: Union[float, None] = None,
) -> float:
    """
    Scalar form of the implicit step: the unique y with y - h f(t, y, z) = yhat.

    Raises:
        RootFindingError: When the bracket or the iteration cap is exhausted
    """
    cfg = cfg or StepConfig()
    y = solve_implicit(np.array([yhat], dtype=float), t, np.array([z], dtype=float), gen, h, cfg,
                       penalty=penalty, L=None if L is None else np.array([L], dtype=float))
    return float(y[0])
