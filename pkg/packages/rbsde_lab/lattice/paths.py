import math
import logging
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np
from pydantic import BaseModel

from ..common.errors import EnumerationCapError, LatticeError
from ..common.limits import MAX_ENUMERATION_STEPS
from ..common.settings import get_settings
from .grid import BinomialLattice

logger = logging.getLogger(__name__)

# Maps a batch of paths, as node indices (M, N + 1), to one value per path
PathFunctional = Callable[["PathBatch"], np.ndarray]

METHOD_ENUMERATION = "exact-enumeration"
METHOD_SAMPLED = "sampled"

@dataclass(frozen=True)
class PathBatch:
    """
    A block of lattice paths.

    nodes[m, i] is the node index j at step i of path m, so nodes[:, 0] == 0 and
    consecutive entries differ by 0 or 1. weights are exact path probabilities
    for enumerated batches and 1 / count for sampled ones.
    """
    lattice: BinomialLattice
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return self.nodes.shape[0]

    def w(self) -> np.ndarray:
        """W values along the paths, shape (M, N + 1)"""
        n = self.lattice.N
        return self.lattice.w[np.arange(n + 1), self.nodes]

class PathEstimate(BaseModel):
    """Expectation of a path functional with its method tag"""
    value: float
    stderr: Optional[float] = None
    method: str
    count: Optional[int] = None

def _nodes_from_moves(moves: np.ndarray) -> np.ndarray:
    m = moves.shape[0]
    nodes = np.zeros((m, moves.shape[1] + 1), dtype=np.int64)
    np.cumsum(moves, axis=1, out=nodes[:, 1:])
    return nodes

def enumeration_cap() -> int:
    return min(get_settings().nmax_enum, MAX_ENUMERATION_STEPS)

def enumerate_paths(lattice: BinomialLattice, batch_size: Optional[int] = None) -> Iterator[PathBatch]:
    """
    Stream all 2^N paths of the lattice with their probabilities.

    Args:
        lattice: The lattice, N must not exceed the enumeration cap
        batch_size: Paths per batch, defaults to the sample_batch setting

    Returns:
        Iterator of PathBatch in lexicographic order of the move codes
    """
    n = lattice.N
    cap = enumeration_cap()
    if n > cap:
        raise EnumerationCapError(f"N={n} exceeds the path enumeration cap {cap}")
    batch_size = batch_size or get_settings().sample_batch
    total = 1 << n
    # 2^-N is exact in binary floating point
    prob = math.ldexp(1.0, -n)
    shifts = np.arange(n, dtype=np.int64)
    for start in range(0, total, batch_size):
        codes = np.arange(start, min(start + batch_size, total), dtype=np.int64)
        moves = (codes[:, None] >> shifts[None, :]) & 1
        yield PathBatch(lattice=lattice, nodes=_nodes_from_moves(moves), weights=np.full(codes.size, prob))

def sample_paths(lattice: BinomialLattice, count: int, seed: Optional[int] = None, batch_size: Optional[int] = None) -> Iterator[PathBatch]:
    """
    Stream count i.i.d. lattice paths.

    The stream is fixed by (seed, count, batch_size): the same triple gives
    bit-identical batches.
    """
    if count < 1:
        raise LatticeError(f"Sample count must be >= 1, got {count}")
    settings = get_settings()
    seed = settings.default_seed if seed is None else seed
    batch_size = batch_size or settings.sample_batch
    rng = np.random.default_rng(seed)
    done = 0
    while done < count:
        m = min(batch_size, count - done)
        moves = rng.integers(0, 2, size=(m, lattice.N), dtype=np.int64)
        yield PathBatch(lattice=lattice, nodes=_nodes_from_moves(moves), weights=np.full(m, 1.0 / count))
        done += m

def path_expectation(
    lattice: BinomialLattice,
    functional: PathFunctional,
    mode: str = "auto",
    count: Optional[int] = None,
    seed: Optional[int] = None,
) -> PathEstimate:
    """
    Expectation of a path functional.

    Args:
        lattice: The lattice
        functional: Batch of paths -> values per path
        mode: "enumerate", "sampled" or "auto" (enumerate when N is within the cap)
        count: Sample count for sampled mode, defaults to the sample_count setting
        seed: Sampling seed

    Returns:
        PathEstimate; sampled estimates carry a standard error
    """
    if mode == "auto":
        mode = "enumerate" if lattice.N <= enumeration_cap() else "sampled"
    if mode == "enumerate":
        total = 0.0
        for batch in enumerate_paths(lattice):
            total += float(np.dot(batch.weights, functional(batch)))
        return PathEstimate(value=total, method=METHOD_ENUMERATION, count=1 << lattice.N)
    if mode == "sampled":
        count = count or get_settings().sample_count
        if lattice.N <= enumeration_cap():
            logger.debug(f"Sampling {count} paths although N={lattice.N} is enumerable")
        # Sums are shifted by the first batch mean to keep the variance stable
        shift = None
        s1 = 0.0
        s2 = 0.0
        for batch in sample_paths(lattice, count, seed):
            vals = np.asarray(functional(batch), dtype=float)
            if shift is None:
                shift = float(np.mean(vals))
            d = vals - shift
            s1 += float(np.sum(d))
            s2 += float(np.sum(d * d))
        mean_d = s1 / count
        var = max(s2 / count - mean_d * mean_d, 0.0) * count / max(count - 1, 1)
        return PathEstimate(
            value=shift + mean_d,
            stderr=math.sqrt(var / count),
            method=METHOD_SAMPLED,
            count=count,
        )
    raise LatticeError(f"Unknown path expectation mode {mode!r}")
