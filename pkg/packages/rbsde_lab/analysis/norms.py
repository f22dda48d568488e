import math
import logging
from typing import Callable, Dict, Iterable, Optional

import numpy as np
from pydantic import BaseModel, Field

from ..common.errors import AugmentedStateError, EnumerationCapError, EstimateError
from ..lattice import (
    METHOD_AUGMENTED,
    METHOD_ENUMERATION,
    BinomialLattice,
    LatticeProcess,
    PathBatch,
    augment_running_max,
    cond_expect,
    enumeration_cap,
    path_expectation,
    process_from_rows,
)

logger = logging.getLogger(__name__)

METHOD_SLICE = "exact-slice"

NORM_MODES = ("auto", "enumerate", "augmented", "sampled", "slice")

class NormEntry(BaseModel):
    """One norm value; sampled entries carry a standard error"""
    quantity: str
    p: float
    value: float
    stderr: Optional[float] = None
    method: str
    count: Optional[int] = None

class NormReport(BaseModel):
    sp: NormEntry
    hp: Optional[NormEntry] = None
    dnorm: Optional[float] = None
    betas: Dict[str, NormEntry] = Field(default_factory=dict)

def _power_mean(mean: float, stderr: Optional[float], p: float):
    """E[X^p]^{1/p} with a delta-method standard error"""
    if mean <= 0:
        return 0.0, (None if stderr is None else 0.0)
    value = mean ** (1.0 / p)
    if stderr is None:
        return value, None
    return value, stderr * value / (p * mean)

# Path values of a process: batch -> (M, N + 1), NaN where undefined
PathValues = Callable[[PathBatch], np.ndarray]

def _sup_power(values: PathValues, p: float) -> Callable[[PathBatch], np.ndarray]:
    def functional(batch: PathBatch) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            sup = np.nanmax(np.abs(values(batch)), axis=1)
        return np.nan_to_num(sup, nan=0.0) ** p
    return functional

def sup_norm_along(
    lattice: BinomialLattice,
    values: PathValues,
    p: float,
    mode: str = "auto",
    count: Optional[int] = None,
    seed: Optional[int] = None,
    quantity: str = "S",
) -> NormEntry:
    """
    E[(max_i |X_i|)^p]^{1/p} for a path-dependent process given along paths.

    Only enumeration and sampling apply; "auto" enumerates within the cap.
    """
    if p <= 0:
        raise EstimateError(f"Exponent must be positive, got {p}")
    if mode in ("augmented", "slice"):
        raise EstimateError(f"Mode {mode} needs a node process")
    est = path_expectation(lattice, _sup_power(values, p), mode=mode, count=count, seed=seed)
    value, stderr = _power_mean(est.value, est.stderr, p)
    return NormEntry(quantity=quantity, p=p, value=value, stderr=stderr, method=est.method, count=est.count)

def sp_norm(
    X: LatticeProcess,
    p: float,
    mode: str = "auto",
    count: Optional[int] = None,
    seed: Optional[int] = None,
    quantity: str = "S",
) -> NormEntry:
    """
    S^p norm E[(max_i |X_i|)^p]^{1/p} over the steps where X is defined.

    Args:
        X: The process
        p: Exponent > 0
        mode: "enumerate", "augmented", "sampled" or "auto" (enumerate within the
            cap, else augmented, else sampled)
        count: Sample count for sampled mode
        seed: Sampling seed

    Returns:
        NormEntry with its method tag
    """
    if p <= 0:
        raise EstimateError(f"Exponent must be positive, got {p}")
    lattice = X.lattice
    if mode not in NORM_MODES or mode == "slice":
        raise EstimateError(f"Unknown S^p mode {mode!r}")
    if mode == "auto":
        if lattice.N <= enumeration_cap():
            mode = "enumerate"
        else:
            try:
                return _sp_augmented(X, p, quantity)
            except AugmentedStateError as e:
                logger.warning(f"Augmentation too large, sampling instead: {e}")
                mode = "sampled"
    if mode == "augmented":
        return _sp_augmented(X, p, quantity)
    return sup_norm_along(lattice, lambda batch: X.along(batch.nodes), p, mode=mode, count=count, seed=seed,
                          quantity=quantity)

def _sp_augmented(X: LatticeProcess, p: float, quantity: str) -> NormEntry:
    # |X| >= 0, so zero rows outside the defined range leave the running max unchanged
    absx = np.nan_to_num(np.abs(X.values), nan=0.0)
    G = process_from_rows(X.lattice, absx)
    aug = augment_running_max(X.lattice, G)
    mean = aug.expect_max(lambda v: v ** p)
    value, _ = _power_mean(mean, None, p)
    return NormEntry(quantity=quantity, p=p, value=value, method=METHOD_AUGMENTED)

def hp_norm(
    Z: LatticeProcess,
    p: float,
    mode: str = "auto",
    count: Optional[int] = None,
    seed: Optional[int] = None,
    quantity: str = "H",
) -> NormEntry:
    """
    H^p norm E[(sum_i Z_i^2 h)^{p/2}]^{1/p} over the steps where Z is defined.

    Mode "slice" is exact for p = 2 and "auto" uses it then; otherwise paths are
    enumerated within the cap or sampled.
    """
    if p <= 0:
        raise EstimateError(f"Exponent must be positive, got {p}")
    lattice = Z.lattice
    h = lattice.h
    if mode == "auto":
        if p == 2:
            mode = "slice"
        else:
            mode = "enumerate" if lattice.N <= enumeration_cap() else "sampled"
    if mode == "slice":
        if p != 2:
            raise EstimateError(f"Slice-wise H^p is exact only for p = 2, got {p}")
        total = sum(lattice.expect(Z.row(i) ** 2, i) for i in Z.steps) * h
        return NormEntry(quantity=quantity, p=p, value=math.sqrt(total), method=METHOD_SLICE)
    if mode == "augmented":
        raise EstimateError("H^p has no running-max representation")

    def functional(batch: PathBatch) -> np.ndarray:
        z2 = np.nan_to_num(Z.along(batch.nodes), nan=0.0) ** 2
        return (z2.sum(axis=1) * h) ** (p / 2.0)

    est = path_expectation(lattice, functional, mode=mode, count=count, seed=seed)
    value, stderr = _power_mean(est.value, est.stderr, p)
    return NormEntry(quantity=quantity, p=p, value=value, stderr=stderr, method=est.method, count=est.count)

def snell_envelope(R: LatticeProcess) -> LatticeProcess:
    """S_last = R_last, S_i = max(R_i, E[S_{i+1} | node])"""
    lattice = R.lattice
    values = np.full_like(R.values, np.nan)
    values[R.last, : R.last + 1] = R.row(R.last)
    for i in range(R.last - 1, R.first - 1, -1):
        values[i, : i + 1] = np.maximum(R.row(i), cond_expect(values[i + 1, : i + 2], i))
    return process_from_rows(lattice, values, R.first, R.last)

def d_norm(Y: LatticeProcess) -> float:
    """
    Class-D norm sup_sigma E|Y_sigma| as the Snell value of |Y|.

    On a finite lattice the supremum over stopping times is attained, so the
    backward recursion gives it exactly.
    """
    S = snell_envelope(abs(Y))
    return Y.lattice.expect(S.row(S.first), S.first)

def beta_metrics(
    X: LatticeProcess,
    betas: Iterable[float],
    mode: str = "auto",
    count: Optional[int] = None,
    seed: Optional[int] = None,
) -> Dict[str, NormEntry]:
    """E[(X^*)^beta]^{1/beta} for each beta, keyed by the beta value as text"""
    out = {}
    for beta in betas:
        out[f"{beta:g}"] = sp_norm(X, beta, mode=mode, count=count, seed=seed, quantity=f"S^{beta:g}")
    return out

def norm_report(
    Y: LatticeProcess,
    Z: Optional[LatticeProcess],
    p: float,
    betas: Iterable[float] = (),
    mode: str = "auto",
    count: Optional[int] = None,
    seed: Optional[int] = None,
) -> NormReport:
    """S^p of Y, H^p of Z, class-D norm of Y and the requested beta metrics"""
    return NormReport(
        sp=sp_norm(Y, p, mode=mode, count=count, seed=seed, quantity="S(Y)"),
        hp=None if Z is None else hp_norm(Z, p, mode="auto" if mode == "augmented" else mode, count=count,
                                          seed=seed, quantity="H(Z)"),
        dnorm=d_norm(Y),
        betas=beta_metrics(Y, betas, mode=mode, count=count, seed=seed),
    )
