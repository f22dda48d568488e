import math
import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..common.errors import EstimateError, LatticeError
from ..lattice import LatticeProcess, PathBatch, enumeration_cap, path_expectation, process_from_rows
from ..problem import Problem, exp_shift
from ..problem.problem import driver_at_obstacle_sup, obstacle_sup_along
from ..reflect.triple import SolutionTriple, shift_solution
from .norms import d_norm, hp_norm, sp_norm

logger = logging.getLogger(__name__)

ESTIMATE_IDS = ("P2.1", "P3.1", "P4.2", "P4.3", "P5.1i", "P5.1ii")
STABILITY_IDS = ("P5.6", "P5.7")
SHIFT_IDS = ("P2.1", "P3.1", "P4.3", "P5.1i", "P5.1ii")

class StoppingRule(BaseModel):
    """tau = N, or the first step where W reaches a level (N if never)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: str = Field(default="terminal", pattern="^(terminal|hit_above|hit_below)$")
    level: float = 0.0

    def label(self) -> str:
        return "T" if self.kind == "terminal" else f"{self.kind}({self.level:g})"

    def index(self, batch: PathBatch) -> np.ndarray:
        """Stopping step per path"""
        n = batch.lattice.N
        if self.kind == "terminal":
            return np.full(len(batch), n, dtype=np.int64)
        w = batch.w()
        hit = w >= self.level if self.kind == "hit_above" else w <= self.level
        first = np.argmax(hit, axis=1)
        return np.where(hit.any(axis=1), first, n).astype(np.int64)

class EstimateReport(BaseModel):
    id: str
    scenario: str
    lhs: float
    rhs: float
    ratio: float
    stopping: str = "T"
    p: float
    method: str
    lhs_stderr: Optional[float] = None
    rhs_stderr: Optional[float] = None
    level: Optional[float] = None

def _ratio(lhs: float, rhs: float) -> float:
    if lhs == 0:
        return 0.0
    if rhs == 0:
        return math.inf
    return lhs / rhs

def _at(values: np.ndarray, tau: np.ndarray) -> np.ndarray:
    return np.take_along_axis(values, tau[:, None], axis=1)[:, 0]

def _prefix(increments: np.ndarray) -> np.ndarray:
    """(M, N) increments -> (M, N + 1) partial sums starting at 0"""
    out = np.zeros((increments.shape[0], increments.shape[1] + 1))
    np.cumsum(increments, axis=1, out=out[:, 1:])
    return out

class _PathTerms:
    """Stopped pathwise quantities of a solution, computed per batch"""

    def __init__(self, problem: Problem, triple: SolutionTriple, tau: StoppingRule):
        self.problem = problem
        self.triple = triple
        self.tau = tau

    def __call__(self, batch: PathBatch):
        nodes = batch.nodes
        tau = self.tau.index(batch)
        tri = self.triple
        h = self.problem.lattice.h
        y_abs = np.nan_to_num(np.abs(tri.Y.along(nodes)), nan=0.0)
        y_star = _at(np.maximum.accumulate(y_abs, axis=1), tau)
        z2 = np.nan_to_num(tri.Z.along(nodes), nan=0.0)[:, :-1] ** 2 * h
        zq = _at(_prefix(z2), tau)
        k = _at(tri.K_along(nodes), tau)
        l_star = _at(obstacle_sup_along(self.problem, nodes), tau)
        f_int = _at(_prefix(driver_at_obstacle_sup(self.problem, nodes)), tau)
        xi = np.abs(self.problem.xi_T[nodes[:, -1]])
        return y_star, zq, k, l_star, f_int, xi

def _sides(id: str, p: float, beta: Optional[float]):
    """Per-path LHS and RHS integrands for an estimate id"""
    if id in ("P2.1", "P4.2"):
        lhs = lambda y, zq, k, l, f, xi: zq ** (p / 2) + k ** p
        rhs = lambda y, zq, k, l, f, xi: y ** p + l ** p + f ** p
    elif id == "P3.1":
        lhs = lambda y, zq, k, l, f, xi: y ** p
        rhs = lambda y, zq, k, l, f, xi: xi ** p + l ** p + f ** p
    elif id == "P4.3":
        lhs = lambda y, zq, k, l, f, xi: y ** p + zq ** (p / 2) + k ** p
        rhs = lambda y, zq, k, l, f, xi: xi ** p + l ** p + f ** p
    elif id == "P5.1ii":
        lhs = lambda y, zq, k, l, f, xi: y ** beta + zq ** (beta / 2) + k ** beta
        rhs = lambda y, zq, k, l, f, xi: xi + l + f
    else:
        raise EstimateError(f"Unknown estimate id {id!r}")
    return lhs, rhs

def _resolve_mode(lattice, mode: str, allow_sampled: bool) -> str:
    if mode != "auto":
        return mode
    if lattice.N <= enumeration_cap():
        return "enumerate"
    if not allow_sampled:
        raise EstimateError(
            f"N={lattice.N} needs pathwise terms beyond the enumeration cap {enumeration_cap()} "
            f"and sampling is disabled"
        )
    return "sampled"

def check_estimate(
    id: str,
    problem: Problem,
    triple: SolutionTriple,
    tau: Optional[StoppingRule] = None,
    p: Optional[float] = None,
    beta: float = 0.5,
    mode: str = "auto",
    allow_sampled: bool = True,
    count: Optional[int] = None,
    seed: Optional[int] = None,
) -> EstimateReport:
    """
    Left and right sides of an a priori estimate and their ratio.

    Pathwise terms (running maxima, time integrals, K) are averaged over all
    paths when N is within the enumeration cap, else over sampled paths.

    Args:
        id: One of P2.1, P3.1, P4.2, P4.3, P5.1i, P5.1ii
        problem: The problem the triple solves
        triple: The solution
        tau: Stopping rule for the stopped estimates (P2.1, P4.2), default tau = T
        p: Exponent, defaults to the problem's p
        beta: Exponent in (0, 1) for P5.1ii
        mode: "enumerate", "sampled" or "auto"
        allow_sampled: Permit the sampled fallback in auto mode
        count: Sample count
        seed: Sampling seed

    Returns:
        EstimateReport; an all-zero case has ratio 0
    """
    if id not in ESTIMATE_IDS:
        raise EstimateError(f"Unknown estimate id {id!r}, expected one of {ESTIMATE_IDS}")
    if triple.lattice.grid != problem.lattice.grid:
        raise LatticeError("Triple and problem live on different lattices")
    p = problem.p if p is None else p
    tau = tau or StoppingRule()
    if id not in ("P2.1", "P4.2") and tau.kind != "terminal":
        raise EstimateError(f"Estimate {id} is stated at tau = T only")
    lattice = problem.lattice
    mode = _resolve_mode(lattice, mode, allow_sampled)
    terms = _PathTerms(problem, triple, tau)

    if id == "P5.1i":
        lhs = d_norm(triple.Y)
        est = path_expectation(lattice, lambda b: (lambda y, zq, k, l, f, xi: xi + l + f)(*terms(b)),
                               mode=mode, count=count, seed=seed)
        return EstimateReport(id=id, scenario=problem.name, lhs=lhs, rhs=est.value, ratio=_ratio(lhs, est.value),
                              stopping=tau.label(), p=1.0, method=est.method, rhs_stderr=est.stderr,
                              level=triple.level)

    lhs_fn, rhs_fn = _sides(id, p, beta)
    lhs_est = path_expectation(lattice, lambda b: lhs_fn(*terms(b)), mode=mode, count=count, seed=seed)
    rhs_est = path_expectation(lattice, lambda b: rhs_fn(*terms(b)), mode=mode, count=count, seed=seed)
    rhs = rhs_est.value
    rhs_stderr = rhs_est.stderr
    if id == "P5.1ii":
        # RHS is (E[...])^beta
        rhs_stderr = None if rhs_stderr is None or rhs <= 0 else beta * rhs ** (beta - 1) * rhs_stderr
        rhs = rhs ** beta
    report = EstimateReport(
        id=id,
        scenario=problem.name,
        lhs=lhs_est.value,
        rhs=rhs,
        ratio=_ratio(lhs_est.value, rhs),
        stopping=tau.label(),
        p=beta if id == "P5.1ii" else p,
        method=lhs_est.method,
        lhs_stderr=lhs_est.stderr,
        rhs_stderr=rhs_stderr,
        level=triple.level,
    )
    logger.debug(f"Estimate {id} on {problem.name}: lhs={report.lhs:.6g} rhs={report.rhs:.6g} ratio={report.ratio:.4g}")
    return report


class ShiftInvarianceReport(BaseModel):
    """An estimate before and after the exponential shift, with the allowed growth of its ratio"""
    id: str
    a: float
    original: EstimateReport
    shifted: EstimateReport
    driver_factor: float
    constant: float
    bound: float
    holds: bool

def _rhs_without_driver(id: str, terms: "_PathTerms", p: float, beta: float, mode: str,
                        count: Optional[int], seed: Optional[int]) -> float:
    """Right side of an estimate with the f(t, L^{+,*}, 0) term dropped"""
    lattice = terms.problem.lattice
    if id == "P5.1i":
        fn = lambda y, zq, k, l, f, xi: xi + l
    else:
        _, rhs_fn = _sides(id, p, beta)
        fn = lambda y, zq, k, l, f, xi: rhs_fn(y, zq, k, l, np.zeros_like(f), xi)
    est = path_expectation(lattice, lambda b: fn(*terms(b)), mode=mode, count=count, seed=seed)
    return est.value ** beta if id == "P5.1ii" else est.value

def check_shift_invariance(
    id: str,
    problem: Problem,
    triple: SolutionTriple,
    a: float,
    tau: Optional[StoppingRule] = None,
    p: Optional[float] = None,
    beta: float = 0.5,
    mode: str = "auto",
    count: Optional[int] = None,
    seed: Optional[int] = None,
    tol: float = 1e-9,
) -> ShiftInvarianceReport:
    """
    Compare an estimate ratio with the ratio of the exponentially shifted problem.

    The shifted triple is (e^{at} Y, e^{at} Z, e^{a t_i} dK_i) against exp_shift(problem, a).
    Each left-side term grows by at most e^{q|a|T} and each data term of the right
    side shrinks by at most that factor, q being p, 1 for P5.1i and beta for P5.1ii.
    The driver term f~(t, L~^{+,*}, 0) is not comparable pathwise, so the bound is

        ratio(shifted) <= C1(a) ratio(original),  C1(a) = e^{2q|a|T} rhs / rhs_without_driver

    with the last factor 1 whenever f(t, y, 0) = 0.

    Args:
        id: One of P2.1, P3.1, P4.3, P5.1i, P5.1ii
        problem: The problem the triple solves
        triple: The solution
        a: Shift rate
        tol: Allowed excess of the shifted ratio over the bound, relative to max(1, bound)

    Returns:
        ShiftInvarianceReport with both estimate reports and the verdict
    """
    if id not in SHIFT_IDS:
        raise EstimateError(f"Shift check covers {SHIFT_IDS}, got {id!r}")
    p = problem.p if p is None else p
    tau = tau or StoppingRule()
    kwargs = dict(tau=tau, p=p, beta=beta, mode=mode, count=count, seed=seed)
    original = check_estimate(id, problem, triple, **kwargs)
    shifted = check_estimate(id, exp_shift(problem, a), shift_solution(triple, a), **kwargs)

    q = 1.0 if id == "P5.1i" else beta if id == "P5.1ii" else p
    path_mode = _resolve_mode(problem.lattice, mode, True)
    data = _rhs_without_driver(id, _PathTerms(problem, triple, tau), p, beta, path_mode, count, seed)
    if original.rhs == 0:
        driver_factor = 1.0
    else:
        driver_factor = math.inf if data == 0 else max(1.0, original.rhs / data)
    constant = math.exp(2.0 * q * abs(a) * problem.T) * driver_factor
    bound = 0.0 if original.ratio == 0 else constant * original.ratio
    holds = bool(shifted.ratio <= bound + tol * max(1.0, bound))
    if not holds:
        logger.warning(f"Shift check {id} on {problem.name} a={a}: ratio {shifted.ratio:.6g} above {bound:.6g}")
    return ShiftInvarianceReport(id=id, a=a, original=original, shifted=shifted, driver_factor=driver_factor,
                                 constant=constant, bound=bound, holds=holds)

def _driver_gap(problem: Problem, Y: LatticeProcess, V: LatticeProcess, Y2: LatticeProcess,
                V2: LatticeProcess, start: int, stop: int) -> LatticeProcess:
    """|f(t_i, Y_i, V_i) - f(t_i, Y2_i, V2_i)| h on steps start..stop-1"""
    lattice = problem.lattice
    values = np.full_like(Y.values, np.nan)
    for i in range(start, stop):
        t = lattice.grid.t(i)
        values[i, : i + 1] = np.abs(problem.gen.evaluate(t, Y.row(i), V.row(i))
                                    - problem.gen.evaluate(t, Y2.row(i), V2.row(i))) * lattice.h
    return process_from_rows(lattice, values, start, stop - 1)

def check_frozen_stability(
    problem: Problem,
    triple: SolutionTriple,
    V: LatticeProcess,
    triple2: SolutionTriple,
    V2: LatticeProcess,
    p: float = 2.0,
    interval: Optional[Tuple[int, int]] = None,
    mode: str = "auto",
    count: Optional[int] = None,
    seed: Optional[int] = None,
) -> EstimateReport:
    """
    Stability of two z-frozen solves with frozen arguments V and V2.

    On the whole horizon (id P5.6) the left side ||Y - Y2||_{S^p} + ||Z - Z2||_{H^p}
    is compared with ||sum_i |f(t_i, Y_i, V_i) - f(t_i, Y2_i, V2_i)| h||_p. On a
    sub-interval [t, q] of grid steps (id P5.7) both norms are restricted to
    it and the right side is ||Y_q - Y2_q||_p + ||sum_{t <= i < q} |f(t_i, Y_i, V_i) - f(t_i, Y_i, V2_i)| h||_p.
    """
    lattice = problem.lattice
    n = lattice.N
    start, stop = (0, n) if interval is None else interval
    if not (0 <= start < stop <= n):
        raise EstimateError(f"Invalid interval {start}..{stop} for N={n}")
    id = "P5.6" if interval is None else "P5.7"
    dY = (triple.Y - triple2.Y).restrict(start, stop)
    dZ = (triple.Z - triple2.Z).restrict(start, stop - 1)
    s = sp_norm(dY, p, mode=mode, count=count, seed=seed)
    hz = hp_norm(dZ, p, mode="auto" if mode == "augmented" else mode, count=count, seed=seed)
    lhs = s.value + hz.value

    if id == "P5.6":
        gap = _driver_gap(problem, triple.Y, V, triple2.Y, V2, start, stop)
        terminal_part = 0.0
    else:
        gap = _driver_gap(problem, triple.Y, V, triple.Y, V2, start, stop)
        terminal_part = lattice.expect(np.abs(triple.Y.row(stop) - triple2.Y.row(stop)) ** p, stop) ** (1.0 / p)

    path_mode = _resolve_mode(lattice, "auto" if mode in ("augmented", "slice") else mode, True)
    est = path_expectation(lattice, lambda b: np.nansum(gap.along(b.nodes), axis=1) ** p,
                           mode=path_mode, count=count, seed=seed)
    rhs = terminal_part + (est.value ** (1.0 / p) if est.value > 0 else 0.0)
    return EstimateReport(id=id, scenario=problem.name, lhs=lhs, rhs=rhs, ratio=_ratio(lhs, rhs),
                          stopping="T" if interval is None else f"[{start},{stop}]", p=p, method=est.method,
                          lhs_stderr=s.stderr, rhs_stderr=est.stderr)
