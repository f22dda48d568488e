"""
Reference values computed without the bsde or reflect solvers.

The recursions here are written from their definitions so that agreement with
the solvers is a genuine cross-check.
"""
import math
import logging

import numpy as np

from ..common.errors import ProblemError
from ..common.limits import EXACT_TOL, MAX_STOPPING_ORACLE_STEPS
from ..problem import Problem

logger = logging.getLogger(__name__)

def american_dp_oracle(r: float, sigma: float, x0: float, strike: float, T: float, N: int) -> float:
    """
    American put price by backward dynamic programming on the binomial lattice.

    The spot at node (i, j) is x0 exp(sigma (2j - i) sqrt(h) + (r - sigma^2/2) t_i),
    V_N = payoff and V_i = max(payoff_i, e^{-rh} (V_{i+1}(j) + V_{i+1}(j+1)) / 2).

    Args:
        r: Interest rate
        sigma: Volatility, > 0
        x0: Spot, > 0
        strike: Strike, >= 0
        T: Maturity, > 0
        N: Steps, >= 1

    Returns:
        The price at the root node
    """
    if not (sigma > 0):
        raise ProblemError(f"sigma must be > 0, got {sigma}")
    if not (x0 > 0) or strike < 0 or not (T > 0):
        raise ProblemError(f"Invalid put parameters x0={x0} strike={strike} T={T}")
    if int(N) != N or N < 1:
        raise ProblemError(f"N must be a positive integer, got {N}")
    N = int(N)
    h = T / N
    sqrt_h = math.sqrt(h)
    disc = math.exp(-r * h)
    drift = r - 0.5 * sigma * sigma

    def payoff(i):
        j = np.arange(i + 1)
        spot = x0 * np.exp(sigma * (2 * j - i) * sqrt_h + drift * (i * h))
        return np.maximum(strike - spot, 0.0)

    V = payoff(N)
    for i in range(N - 1, -1, -1):
        V = np.maximum(payoff(i), disc * (0.5 * (V[1:] + V[:-1])))
    price = float(V[0])
    logger.debug(f"American put oracle r={r} sigma={sigma} x0={x0} K={strike} T={T} N={N}: {price}")
    return price

def _check_driver_zero(problem: Problem) -> None:
    rng = np.random.default_rng(0)
    t = rng.uniform(0, problem.T, 200)
    y = rng.uniform(-10, 10, 200)
    z = rng.uniform(-10, 10, 200)
    f = np.asarray(problem.gen.evaluate(t, y, z), dtype=float)
    if not np.all(np.abs(f) <= EXACT_TOL):
        raise ProblemError(f"The stopping oracle needs f = 0, {problem.gen.name} is not")

def exhaustive_stopping_oracle(problem: Problem) -> float:
    """
    sup over stopping rules of E[reward at sigma], on the full path tree.

    The reward is L_i before N and xi at N. Values are propagated over path
    prefixes (2^i of them at step i), so no recombination is used.

    Args:
        problem: A problem with f = 0 and N <= 10

    Returns:
        The optimal stopping value
    """
    n = problem.N
    if n > MAX_STOPPING_ORACLE_STEPS:
        raise ProblemError(f"Stopping oracle is limited to N <= {MAX_STOPPING_ORACLE_STEPS}, got {n}")
    _check_driver_zero(problem)
    L = problem.L.values
    xi = problem.xi_T

    # ups[i][k] = number of up moves in prefix k of length i
    ups = [np.zeros(1, dtype=np.int64)]
    for _ in range(n):
        prev = ups[-1]
        nxt = np.empty(2 * prev.size, dtype=np.int64)
        nxt[0::2] = prev
        nxt[1::2] = prev + 1
        ups.append(nxt)

    V = xi[ups[n]]
    for i in range(n - 1, -1, -1):
        cont = 0.5 * (V[0::2] + V[1::2])
        V = np.maximum(L[i, ups[i]], cont)
    value = float(V[0])
    logger.debug(f"Stopping oracle on {problem.name} N={n}: {value}")
    return value
