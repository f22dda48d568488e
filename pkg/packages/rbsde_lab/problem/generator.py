import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from ..common.errors import ProblemError

logger = logging.getLogger(__name__)

# f(t, y, z); must broadcast over numpy arrays in all three arguments
GeneratorFunction = Callable[[Union[float, np.ndarray], np.ndarray, np.ndarray], np.ndarray]

@dataclass(frozen=True)
class H5Params:
    """
    Sublinear z-growth: |f(t,y,z) - f(t,y,0)| <= gamma * (g_t + |y| + |z|)^alpha.

    g is a nonnegative constant or a function of time.
    """
    gamma: float
    alpha: float
    g: Union[float, Callable[[np.ndarray], np.ndarray]] = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ProblemError(f"H5 gamma must be >= 0, got {self.gamma}")
        if not (0 < self.alpha < 1):
            raise ProblemError(f"H5 alpha must lie in (0, 1), got {self.alpha}")

    def g_at(self, t) -> np.ndarray:
        if callable(self.g):
            return np.asarray(self.g(t), dtype=float)
        return np.full(np.shape(t), float(self.g))

    def bound(self, t, y, z) -> np.ndarray:
        return self.gamma * (self.g_at(t) + np.abs(y) + np.abs(z)) ** self.alpha

@dataclass(frozen=True)
class Generator:
    """
    Driver f(t, y, z) with its declared constants.

    mu is the one-sided monotonicity constant in y, lam the Lipschitz constant in z.
    dfdy, when given, is the partial derivative in y and speeds up the implicit
    step; otherwise a finite difference is used. growth is the increasing
    function phi of |f(t,y,0)| <= |f(t,0,0)| + phi(|y|), lipschitz_y the
    constant of a Lipschitz-in-y declaration.
    """
    func: GeneratorFunction
    mu: float = 0.0
    lam: float = 0.0
    depends_on_z: bool = True
    dfdy: Optional[GeneratorFunction] = None
    h5: Optional[H5Params] = None
    growth: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lipschitz_y: Optional[float] = None
    name: str = field(default="f", compare=False)

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ProblemError(f"Monotonicity constant mu must be finite, got {self.mu}")
        if not (self.lam >= 0) or not np.isfinite(self.lam):
            raise ProblemError(f"Lipschitz constant lambda must be finite and >= 0, got {self.lam}")
        if self.lipschitz_y is not None and self.lipschitz_y < 0:
            raise ProblemError(f"Lipschitz-in-y constant must be >= 0, got {self.lipschitz_y}")

    def evaluate(self, t, y, z) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        shape = np.broadcast(np.asarray(t, dtype=float), y, z).shape
        return np.broadcast_to(np.asarray(self.func(t, y, z), dtype=float), shape)

    def __call__(self, t, y, z) -> np.ndarray:
        return self.evaluate(t, y, z)

def zero_generator() -> Generator:
    return Generator(func=lambda t, y, z: np.zeros(np.broadcast(y, z).shape), mu=0.0, lam=0.0,
                     depends_on_z=False, dfdy=lambda t, y, z: np.zeros(np.broadcast(y, z).shape),
                     lipschitz_y=0.0, name="zero")

def linear_generator(a: float = 0.0, b: float = 0.0, c: float = 0.0) -> Generator:
    """f(t, y, z) = a*y + b*z + c"""
    return Generator(
        func=lambda t, y, z: a * y + b * z + c,
        mu=float(a),
        lam=abs(float(b)),
        depends_on_z=b != 0,
        dfdy=lambda t, y, z: np.full(np.broadcast(y, z).shape, float(a)),
        lipschitz_y=abs(float(a)),
        name=f"{a}*y+{b}*z+{c}",
    )

def offset_generator(gen: Generator, offset: float) -> Generator:
    """The driver f + offset; declared constants are unchanged"""
    if offset == 0:
        return gen
    f = gen.func
    return replace(gen, func=lambda t, y, z: f(t, y, z) + offset, name=f"{gen.name}+{offset}")

def freeze_z(gen: Generator, v: np.ndarray) -> Generator:
    """
    Driver with its z argument frozen at the node values v of one slice.

    The returned generator ignores the z it is called with.
    """
    f = gen.func
    dfdy = gen.dfdy
    v = np.asarray(v, dtype=float)
    return replace(
        gen,
        func=lambda t, y, z: f(t, y, v),
        dfdy=None if dfdy is None else (lambda t, y, z: dfdy(t, y, v)),
        depends_on_z=False,
        name=f"{gen.name}|z=V",
    )
