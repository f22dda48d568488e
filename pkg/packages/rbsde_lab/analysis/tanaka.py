import logging
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel

from ..common.errors import EstimateError

logger = logging.getLogger(__name__)

SecondDerivative = Callable[[np.ndarray], np.ndarray]

class TanakaReport(BaseModel):
    level: float
    local_time: float
    min_increment: float
    identity_residual: float
    occupation_residual: float
    occupation_relative: float
    quadratic_integral: float
    levels: int

def _path(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 1 or X.size < 2:
        raise EstimateError(f"Expected a single path with at least two points, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise EstimateError("Path has non-finite values")
    return X

def local_time_increments(X, a: float) -> np.ndarray:
    """
    Symmetric discrete local time increments at level a.

    |X_{k+1} - a| - |X_k - a| - sgn(X_k - a)(X_{k+1} - X_k) with sgn(0) = 0.
    Each increment is >= 0 by the triangle inequality.
    """
    X = _path(X)
    d = X - a
    return np.abs(d[1:]) - np.abs(d[:-1]) - np.sign(d[:-1]) * np.diff(X)

def local_time(X, a: float) -> np.ndarray:
    """L_i for i = 0..N, starting at 0"""
    inc = local_time_increments(X, a)
    return np.concatenate(([0.0], np.cumsum(inc)))

def _terminal_local_times(X: np.ndarray, grid: np.ndarray) -> np.ndarray:
    d = X[None, :] - grid[:, None]
    dx = np.diff(X)
    return np.abs(d[:, -1]) - np.abs(d[:, 0]) - (np.sign(d[:, :-1]) * dx).sum(axis=1)

def occupation_sides(X, g2: Optional[SecondDerivative] = None, levels: Optional[int] = None):
    """
    Both sides of the discrete occupation formula.

    The left side integrates the terminal local time against g'' over a
    midpoint grid of `levels` cells spanning the path range; the right side is
    sum_i g''(X_i) (X_{i+1} - X_i)^2.

    Returns:
        (grid integral, quadratic-variation integral)
    """
    X = _path(X)
    g2 = g2 or (lambda x: np.full(np.shape(x), 2.0))
    n = X.size - 1
    levels = 4 * n if levels is None else int(levels)
    if levels < 1:
        raise EstimateError(f"Need at least one level, got {levels}")
    qv = float(np.sum(g2(X[:-1]) * np.diff(X) ** 2))
    lo, hi = float(X.min()), float(X.max())
    if hi == lo:
        return 0.0, qv
    da = (hi - lo) / levels
    grid = lo + (np.arange(levels) + 0.5) * da
    lt = _terminal_local_times(X, grid)
    return float(np.sum(lt * g2(grid)) * da), qv

def tanaka_check(
    X,
    a: float,
    g2: Optional[SecondDerivative] = None,
    levels: Optional[int] = None,
) -> TanakaReport:
    """
    Discrete Tanaka identity and occupation formula on one path.

    Args:
        X: Path values X_0..X_N
        a: Level
        g2: Second derivative of the test function, default g(x) = x^2
        levels: Cells of the level grid for the occupation formula, default 4N

    Returns:
        TanakaReport
    """
    X = _path(X)
    inc = local_time_increments(X, a)
    lt = float(inc.sum())
    d = X - a
    rebuilt = abs(d[0]) + float(np.sum(np.sign(d[:-1]) * np.diff(X))) + lt
    identity = abs(rebuilt - abs(d[-1]))
    grid_side, qv = occupation_sides(X, g2, levels)
    occ = abs(grid_side - qv)
    report = TanakaReport(
        level=float(a),
        local_time=lt,
        min_increment=float(inc.min()),
        identity_residual=identity,
        occupation_residual=occ,
        occupation_relative=occ / qv if qv > 0 else 0.0,
        quadratic_integral=qv,
        levels=4 * (X.size - 1) if levels is None else int(levels),
    )
    logger.debug(f"Tanaka at a={a}: L_T={lt:.6g}, identity {identity:.3g}, occupation {occ:.3g}")
    return report
