import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..common.errors import ProblemError
from ..lattice import BinomialLattice, LatticeProcess, NodeFunction, process_from_function
from ..lattice.augment import MONOTONE_KINDS

logger = logging.getLogger(__name__)

OBSTACLE_NODE = "node"
OBSTACLE_CONSTANT = "constant"
OBSTACLE_NONE = "none"

@dataclass(frozen=True)
class Obstacle:
    """
    Lower barrier L.

    kind "none" is the negative-infinity sentinel: reflection is switched off
    and the reflected solvers reduce to the plain backward solver.
    monotone declares L(t, .) increasing or decreasing in the node.
    """
    kind: str
    fn: Optional[NodeFunction] = None
    value: float = 0.0
    monotone: Optional[str] = None

    def __post_init__(self):
        if self.kind not in (OBSTACLE_NODE, OBSTACLE_CONSTANT, OBSTACLE_NONE):
            raise ProblemError(f"Unknown obstacle kind {self.kind!r}")
        if self.kind == OBSTACLE_NODE and self.fn is None:
            raise ProblemError("Node obstacle needs a node function")
        if self.monotone is not None and self.monotone not in MONOTONE_KINDS:
            raise ProblemError(f"Unknown monotone declaration {self.monotone!r}")

    @property
    def is_finite(self) -> bool:
        return self.kind != OBSTACLE_NONE

    def on_lattice(self, lattice: BinomialLattice) -> LatticeProcess:
        """Tabulate L; the sentinel gives -inf at every node"""
        if self.kind == OBSTACLE_NONE:
            return process_from_function(lattice, lambda t, w: np.full(w.shape, -np.inf))
        if self.kind == OBSTACLE_CONSTANT:
            return process_from_function(lattice, lambda t, w: np.full(w.shape, float(self.value)))
        return process_from_function(lattice, self.fn)

def node_obstacle(fn: NodeFunction, monotone: Optional[str] = None) -> Obstacle:
    return Obstacle(kind=OBSTACLE_NODE, fn=fn, monotone=monotone)

def constant_obstacle(c: float) -> Obstacle:
    return Obstacle(kind=OBSTACLE_CONSTANT, value=float(c), monotone="increasing")

def no_obstacle() -> Obstacle:
    return Obstacle(kind=OBSTACLE_NONE)

def offset_obstacle(obstacle: Obstacle, offset: float) -> Obstacle:
    """L + offset; the sentinel stays the sentinel"""
    if offset == 0 or obstacle.kind == OBSTACLE_NONE:
        return obstacle
    if obstacle.kind == OBSTACLE_CONSTANT:
        return constant_obstacle(obstacle.value + offset)
    fn = obstacle.fn
    return node_obstacle(lambda t, w: fn(t, w) + offset, monotone=obstacle.monotone)

def scaled_obstacle(obstacle: Obstacle, a: float) -> Obstacle:
    """e^{a t} L_t"""
    if a == 0 or obstacle.kind == OBSTACLE_NONE:
        return obstacle
    if obstacle.kind == OBSTACLE_CONSTANT:
        c = obstacle.value
        return node_obstacle(lambda t, w: np.full(np.shape(w), np.exp(a * t) * c), monotone="increasing")
    fn = obstacle.fn
    return node_obstacle(lambda t, w: np.exp(a * t) * fn(t, w), monotone=obstacle.monotone)
