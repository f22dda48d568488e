import math
import logging
from dataclasses import replace

import numpy as np

from .generator import Generator, H5Params
from .obstacle import scaled_obstacle
from .problem import Problem

logger = logging.getLogger(__name__)

def shift_generator(gen: Generator, a: float, T: float) -> Generator:
    """
    f~(t, y, z) = e^{at} f(t, e^{-at} y, e^{-at} z) - a y.

    The monotonicity constant becomes mu - a and the z-Lipschitz constant is
    unchanged.
    """
    if a == 0:
        return gen
    f = gen.func
    dfdy = gen.dfdy

    def func(t, y, z):
        e = np.exp(a * np.asarray(t, dtype=float))
        return e * f(t, y / e, z / e) - a * y

    shifted_dfdy = None
    if dfdy is not None:
        def shifted_dfdy(t, y, z):
            e = np.exp(a * np.asarray(t, dtype=float))
            return dfdy(t, y / e, z / e) - a

    h5 = None
    if gen.h5 is not None:
        # e^{at} (g + e^{-at}(|y| + |z|))^alpha <= e^{|a|T} e^{alpha |a| T} (g + |y| + |z|)^alpha
        scale = math.exp(abs(a) * T) * math.exp(gen.h5.alpha * abs(a) * T)
        h5 = H5Params(gamma=gen.h5.gamma * scale, alpha=gen.h5.alpha, g=gen.h5.g)

    growth = None
    if gen.growth is not None:
        phi = gen.growth
        e_max = math.exp(abs(a) * T)
        # |f~(t,y,0)| <= e^{|a|T} (|f(t,0,0)| + phi(e^{|a|T}|y|)) + |a||y|
        growth = lambda r: e_max * phi(e_max * r) + abs(a) * r

    return replace(
        gen,
        func=func,
        mu=gen.mu - a,
        dfdy=shifted_dfdy,
        h5=h5,
        growth=growth,
        lipschitz_y=None if gen.lipschitz_y is None else gen.lipschitz_y + abs(a),
        name=f"shift({gen.name},{a})",
    )

def exp_shift(problem: Problem, a: float) -> Problem:
    """
    Exponential change of variables Y~ = e^{at} Y.

    Args:
        problem: The problem
        a: Shift rate, any real. a = mu makes the shifted driver monotone with constant 0.

    Returns:
        The problem with data e^{aT} xi, e^{at} L and the shifted driver
    """
    if a == 0:
        return problem
    T = problem.T
    logger.debug(f"Exponential shift of {problem.name} with a={a}")
    return replace(
        problem,
        xi=problem.xi * math.exp(a * T),
        gen=shift_generator(problem.gen, a, T),
        obstacle=scaled_obstacle(problem.obstacle, a),
        name=f"{problem.name}~{a}",
        params={**problem.params, "shift": a},
    )
