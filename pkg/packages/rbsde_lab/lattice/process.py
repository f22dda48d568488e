import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from ..common.errors import LatticeError
from .grid import BinomialLattice

logger = logging.getLogger(__name__)

# Node function signature: f(t, w) with t a float and w the array of W values at one step
NodeFunction = Callable[[float, np.ndarray], Union[np.ndarray, float]]

@dataclass(frozen=True, eq=False)
class LatticeProcess:
    """
    A real value per lattice node on the steps first..last.

    values has the lattice's square shape (N + 1, N + 1). Entries with j > i and
    rows outside first..last are NaN.
    """
    lattice: BinomialLattice
    values: np.ndarray
    first: int = 0
    last: Optional[int] = None

    def __post_init__(self):
        n = self.lattice.N
        last = n if self.last is None else int(self.last)
        object.__setattr__(self, "last", last)
        if not (0 <= self.first <= last <= n):
            raise LatticeError(f"Invalid step range {self.first}..{last} for N={n}")
        if self.values.shape != (n + 1, n + 1):
            raise LatticeError(f"Process shape {self.values.shape} does not match lattice N={n}")
        self.values.setflags(write=False)

    @property
    def steps(self) -> range:
        return range(self.first, self.last + 1)

    def row(self, i: int) -> np.ndarray:
        """Node values at step i, lowest node first"""
        if i < self.first or i > self.last:
            raise LatticeError(f"Step {i} outside the defined range {self.first}..{self.last}")
        return self.values[i, : i + 1]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.row(i)

    def along(self, nodes: np.ndarray) -> np.ndarray:
        """
        Values along a batch of paths.

        Args:
            nodes: Integer array (M, N + 1) of node indices per step

        Returns:
            Array (M, N + 1); steps outside first..last are NaN
        """
        n = self.lattice.N
        return self.values[np.arange(n + 1), nodes]

    def _combine(self, other, op) -> "LatticeProcess":
        if isinstance(other, LatticeProcess):
            if other.lattice.grid != self.lattice.grid:
                raise LatticeError("Processes live on different lattices")
            first = max(self.first, other.first)
            last = min(self.last, other.last)
            values = op(self.values, other.values)
        else:
            first, last = self.first, self.last
            values = op(self.values, float(other))
        return _restrict(self.lattice, values, first, last)

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return self._combine(other, lambda a, b: np.subtract(b, a))

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return _restrict(self.lattice, -self.values, self.first, self.last)

    def __abs__(self):
        return _restrict(self.lattice, np.abs(self.values), self.first, self.last)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "LatticeProcess":
        """Apply an elementwise array function"""
        with np.errstate(invalid="ignore"):
            return _restrict(self.lattice, fn(self.values), self.first, self.last)

    def restrict(self, first: int, last: int) -> "LatticeProcess":
        return _restrict(self.lattice, self.values, first, last)

    def max_abs(self) -> float:
        """Largest |value| over all defined nodes"""
        vals = self.values[self.lattice.mask()]
        vals = vals[~np.isnan(vals)]
        return float(np.max(np.abs(vals))) if vals.size else 0.0

    def min_value(self) -> float:
        vals = self.values[self.lattice.mask()]
        vals = vals[~np.isnan(vals)]
        return float(np.min(vals)) if vals.size else 0.0

    def identical(self, other: "LatticeProcess") -> bool:
        """Bitwise equality of values and step range"""
        return (
            self.first == other.first
            and self.last == other.last
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

def _restrict(lattice: BinomialLattice, values: np.ndarray, first: int, last: int) -> LatticeProcess:
    out = np.array(values, dtype=float, copy=True)
    out[~lattice.mask()] = np.nan
    out[:first] = np.nan
    out[last + 1:] = np.nan
    return LatticeProcess(lattice=lattice, values=out, first=first, last=last)

def empty_values(lattice: BinomialLattice) -> np.ndarray:
    """A writable NaN array of the lattice shape, for filling row by row"""
    n = lattice.N
    return np.full((n + 1, n + 1), np.nan)

def process_from_rows(lattice: BinomialLattice, values: np.ndarray, first: int = 0, last: Optional[int] = None) -> LatticeProcess:
    """Wrap a filled array, masking everything outside the valid nodes"""
    last = lattice.N if last is None else last
    return _restrict(lattice, values, first, last)

def process_from_function(lattice: BinomialLattice, fn: NodeFunction, first: int = 0, last: Optional[int] = None) -> LatticeProcess:
    """
    Tabulate a node function f(t, w) on the lattice.

    Args:
        lattice: The lattice
        fn: Called once per step with the step time and the W values at that step
        first: First step to fill
        last: Last step to fill, defaults to N

    Returns:
        The tabulated process
    """
    last = lattice.N if last is None else last
    values = empty_values(lattice)
    for i in range(first, last + 1):
        w = lattice.node_w(i)
        values[i, : i + 1] = np.broadcast_to(np.asarray(fn(lattice.grid.t(i), w), dtype=float), w.shape)
    return process_from_rows(lattice, values, first, last)

def constant_process(lattice: BinomialLattice, c: float, first: int = 0, last: Optional[int] = None) -> LatticeProcess:
    return process_from_function(lattice, lambda t, w: np.full(w.shape, float(c)), first, last)

def w_process(lattice: BinomialLattice) -> LatticeProcess:
    """The driving walk W itself"""
    return process_from_rows(lattice, np.array(lattice.w))
