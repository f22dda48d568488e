import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from ..common.errors import AugmentedStateError, LatticeError
from ..common.settings import get_settings
from .grid import BinomialLattice
from .process import LatticeProcess, NodeFunction, process_from_function

logger = logging.getLogger(__name__)

METHOD_AUGMENTED = "augmented"

MONOTONE_KINDS = ("increasing", "decreasing")

@dataclass(frozen=True)
class AugmentedSlice:
    """
    Joint law of (node, running max) at one step.

    mass[j, k] is the probability of being at node j with running max equal to
    levels[cols[k]].
    """
    cols: np.ndarray
    mass: np.ndarray

@dataclass(frozen=True)
class AugmentedLattice:
    """Base lattice augmented with the running maximum of a node functional G"""
    base: BinomialLattice
    functional: LatticeProcess
    levels: np.ndarray
    slices: Tuple[AugmentedSlice, ...]

    def state_count(self, i: int) -> int:
        s = self.slices[i]
        return int(np.count_nonzero(s.mass))

    def node_marginal(self, i: int) -> np.ndarray:
        """Probabilities of the base nodes at step i; equals the binomial law"""
        return self.slices[i].mass.sum(axis=1)

    def max_law(self, i: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Law of the running max of G up to step i.

        Returns:
            (values, probabilities), values sorted ascending
        """
        i = self.base.N if i is None else i
        self.base.check_step(i)
        s = self.slices[i]
        return self.levels[s.cols], s.mass.sum(axis=0)

    def expect_max(self, fn: Callable[[np.ndarray], np.ndarray], i: Optional[int] = None) -> float:
        """E[fn(max_{k <= i} G_k)]"""
        values, probs = self.max_law(i)
        return float(np.dot(probs, fn(values)))

def _check_monotone(G: LatticeProcess, monotone: str) -> None:
    for i in G.steps:
        row = G.row(i)
        d = np.diff(row)
        bad = np.nonzero(d < 0)[0] if monotone == "increasing" else np.nonzero(d > 0)[0]
        if bad.size:
            j = int(bad[0])
            raise LatticeError(
                f"Functional declared {monotone} in the node but G({i},{j})={row[j]} "
                f"and G({i},{j + 1})={row[j + 1]}"
            )

def augment_running_max(
    lattice: BinomialLattice,
    G: Union[LatticeProcess, NodeFunction],
    monotone: Optional[str] = None,
    max_states: Optional[int] = None,
) -> AugmentedLattice:
    """
    Build the exact joint law of (node, running max of G) step by step.

    Args:
        lattice: The base lattice
        G: Node functional, a LatticeProcess defined on all steps or f(t, w)
        monotone: Optional declaration "increasing" or "decreasing" in the node
            index, checked at every node
        max_states: Cap on stored (node, max) states, defaults to the
            augmented_max_states setting

    Returns:
        The augmented lattice
    """
    if not isinstance(G, LatticeProcess):
        G = process_from_function(lattice, G)
    if G.first != 0 or G.last != lattice.N:
        raise LatticeError(f"Running max needs G on all steps, got {G.first}..{G.last}")
    if monotone is not None:
        if monotone not in MONOTONE_KINDS:
            raise LatticeError(f"Unknown monotone declaration {monotone!r}")
        _check_monotone(G, monotone)
    max_states = max_states or get_settings().augmented_max_states

    levels = np.unique(G.values[lattice.mask()])
    if np.isnan(levels).any():
        raise LatticeError("Functional has NaN values")

    # Column index of G at every node, in the global level table
    level_idx = [np.searchsorted(levels, G.row(i)) for i in range(lattice.N + 1)]

    slices: List[AugmentedSlice] = [
        AugmentedSlice(cols=level_idx[0].copy(), mass=np.ones((1, 1)))
    ]
    stored = 1
    for i in range(lattice.N):
        prev = slices[-1]
        thresholds = level_idx[i + 1]
        cols = np.union1d(prev.cols, thresholds)
        pos = np.searchsorted(cols, prev.cols)

        incoming = np.zeros((i + 2, cols.size))
        # Down moves keep j, up moves go to j + 1
        incoming[: i + 1, pos] += 0.5 * prev.mass
        incoming[1:, pos] += 0.5 * prev.mass

        t = np.searchsorted(cols, thresholds)
        k = np.arange(cols.size)
        cum = np.cumsum(incoming, axis=1)
        mass = np.where(k[None, :] < t[:, None], 0.0, incoming)
        rows = np.arange(i + 2)
        mass[rows, t] = cum[rows, t]

        keep = mass.sum(axis=0) > 0
        cols, mass = cols[keep], mass[:, keep]
        stored += mass.size
        if stored > max_states:
            raise AugmentedStateError(
                f"Running-max augmentation exceeds {max_states} states at step {i + 1}"
            )
        slices.append(AugmentedSlice(cols=cols, mass=mass))

    logger.debug(f"Augmented lattice N={lattice.N} with {levels.size} levels and {stored} stored states")
    return AugmentedLattice(base=lattice, functional=G, levels=levels, slices=tuple(slices))
