import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from ..common.errors import EstimateError, LatticeError
from ..lattice import cond_expect
from ..reflect.triple import SolutionTriple

logger = logging.getLogger(__name__)

RELATIONS = ("Y_le", "dK_ge", "dK_interval_ge")

class ComparisonReport(BaseModel):
    """Largest violation of an ordering between two solutions"""
    relation: str
    max_violation: float
    worst_node: Optional[Tuple[int, int]] = None
    checked: int

def _worst(steps: Sequence[int], rows) -> Tuple[float, Optional[Tuple[int, int]], int]:
    worst = 0.0
    node = None
    checked = 0
    for i in steps:
        d = rows(i)
        checked += d.size
        if d.size == 0:
            continue
        j = int(np.argmax(d))
        if node is None or d[j] > worst:
            worst = float(d[j])
            node = (i, j)
    return max(worst, 0.0), node, checked

def _expected_increment(triple: SolutionTriple, s: int, u: int) -> np.ndarray:
    """E[K_u - K_s | node at step s]"""
    acc = triple.dK.row(u - 1).copy()
    for i in range(u - 2, s - 1, -1):
        acc = triple.dK.row(i) + cond_expect(acc, i)
    return acc

def compare_solutions(
    A: SolutionTriple,
    B: SolutionTriple,
    relation: str = "Y_le",
    intervals: Optional[List[Tuple[int, int]]] = None,
) -> ComparisonReport:
    """
    Nodewise check of an ordering between two solutions on the same lattice.

    Relations:
        Y_le: Y_A <= Y_B
        dK_ge: dK_A >= dK_B at every node
        dK_interval_ge: E[K_A(u) - K_A(s) | node] >= E[K_B(u) - K_B(s) | node] at
            the nodes of step s, for each interval (s, u) of grid steps

    Returns:
        ComparisonReport with the largest positive violation and where it occurs
    """
    if A.lattice.grid != B.lattice.grid:
        raise LatticeError("Solutions live on different lattices")
    if relation not in RELATIONS:
        raise EstimateError(f"Unknown relation {relation!r}, expected one of {RELATIONS}")

    if relation == "Y_le":
        steps = range(max(A.Y.first, B.Y.first), min(A.Y.last, B.Y.last) + 1)
        worst, node, checked = _worst(steps, lambda i: A.Y.row(i) - B.Y.row(i))
    elif relation == "dK_ge":
        steps = range(max(A.dK.first, B.dK.first), min(A.dK.last, B.dK.last) + 1)
        worst, node, checked = _worst(steps, lambda i: B.dK.row(i) - A.dK.row(i))
    else:
        n = A.lattice.N
        intervals = intervals or [(0, n)]
        worst, node, checked = 0.0, None, 0
        for s, u in intervals:
            if not (0 <= s < u <= n):
                raise EstimateError(f"Invalid interval ({s}, {u}) for N={n}")
            d = _expected_increment(B, s, u) - _expected_increment(A, s, u)
            checked += d.size
            j = int(np.argmax(d))
            if node is None or d[j] > worst:
                worst, node = float(d[j]), (s, j)
        worst = max(worst, 0.0)
    if worst > 0:
        logger.debug(f"{relation} violated by {worst:.3g} at node {node}")
    return ComparisonReport(relation=relation, max_violation=worst, worst_node=node, checked=checked)
