import math
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

from ..common.errors import LatticeError

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition 0 = t_0 < ... < t_N = T"""
    T: float
    N: int

    def __post_init__(self):
        if not (self.T > 0) or not math.isfinite(self.T):
            raise LatticeError(f"Horizon T must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise LatticeError(f"Step count N must be an integer >= 1, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def sqrt_h(self) -> float:
        return math.sqrt(self.h)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.h

    def t(self, i: int) -> float:
        return i * self.h

@dataclass(frozen=True)
class BinomialLattice:
    """
    Recombining random walk for a one-dimensional Brownian motion.

    Node (i, j), 0 <= j <= i, carries W = (2j - i) * sqrt(h). Moving up takes
    (i, j) to (i + 1, j + 1), moving down to (i + 1, j); both have probability 1/2.
    Square arrays of shape (N + 1, N + 1) hold node values, entries with j > i
    are NaN.
    """
    grid: TimeGrid

    @cached_property
    def w(self) -> np.ndarray:
        n = self.N
        w = np.full((n + 1, n + 1), np.nan)
        for i in range(n + 1):
            w[i, : i + 1] = (2 * np.arange(i + 1) - i) * self.grid.sqrt_h
        w.setflags(write=False)
        return w

    @cached_property
    def probs(self) -> np.ndarray:
        n = self.N
        probs = np.full((n + 1, n + 1), np.nan)
        for i in range(n + 1):
            # Exact integer ratio, rounded once
            probs[i, : i + 1] = [math.comb(i, k) / 2**i for k in range(i + 1)]
        probs.setflags(write=False)
        return probs

    @property
    def N(self) -> int:
        return self.grid.N

    @property
    def T(self) -> float:
        return self.grid.T

    @property
    def h(self) -> float:
        return self.grid.h

    def node_w(self, i: int) -> np.ndarray:
        """W values at step i, ordered from the lowest node"""
        self.check_step(i)
        return self.w[i, : i + 1]

    def node_probs(self, i: int) -> np.ndarray:
        self.check_step(i)
        return self.probs[i, : i + 1]

    def check_step(self, i: int) -> None:
        if i < 0 or i > self.N:
            raise LatticeError(f"Step {i} outside 0..{self.N}")

    def mask(self) -> np.ndarray:
        """Boolean array marking the valid (i, j) entries"""
        idx = np.arange(self.N + 1)
        return idx[None, :] <= idx[:, None]

    def expect(self, values: np.ndarray, i: int) -> float:
        """Unconditional expectation of a node function given at step i"""
        return float(np.dot(self.node_probs(i), values))

def build_lattice(T: float, N: int) -> BinomialLattice:
    """
    Build the binomial lattice for horizon T with N steps.

    Args:
        T: Horizon, > 0
        N: Number of steps, >= 1

    Returns:
        The lattice. Probabilities come from exact binomial coefficients.
    """
    grid = TimeGrid(float(T), N)
    logger.debug(f"Built lattice T={grid.T} N={grid.N} h={grid.h}")
    return BinomialLattice(grid=grid)

def cond_expect(X: Union["LatticeProcess", np.ndarray], i: int) -> np.ndarray:
    """
    Conditional expectation of a step-(i + 1) node function given step i.

    Args:
        X: Either a LatticeProcess, whose row i + 1 is used, or the i + 2 node
           values at step i + 1
        i: The step to condition on

    Returns:
        The i + 1 node values (X(i+1, j+1) + X(i+1, j)) / 2
    """
    if i < 0:
        raise LatticeError(f"Step {i} is negative")
    if hasattr(X, "values"):
        if i + 1 > X.lattice.N:
            raise LatticeError(f"Step {i} has no successor on a lattice with N={X.lattice.N}")
        nxt = X.values[i + 1, : i + 2]
    else:
        nxt = np.asarray(X, dtype=float)
        if nxt.shape != (i + 2,):
            raise LatticeError(f"Expected {i + 2} values at step {i + 1}, got shape {nxt.shape}")
    return 0.5 * (nxt[1:] + nxt[:-1])
