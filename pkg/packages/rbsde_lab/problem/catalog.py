import logging
from typing import Any, Callable, Dict, Optional, Type

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..common.errors import ProblemError
from ..lattice import build_lattice
from .generator import Generator, H5Params, zero_generator
from .obstacle import constant_obstacle, no_obstacle, node_obstacle
from .problem import Problem, make_problem

logger = logging.getLogger(__name__)

class ScenarioParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    T: float = Field(default=1.0, gt=0, description="Horizon")

class MartingaleParams(ScenarioParams):
    pass

class OdeCubicParams(ScenarioParams):
    c: float = Field(default=1.0, description="Constant terminal value")

class NeverBindingParams(ScenarioParams):
    c: float = Field(default=0.0, description="Constant obstacle level")

class BindingObstacleParams(ScenarioParams):
    l0: float = Field(default=1.0, ge=0, description="Obstacle level at t = 0")
    kappa: float = Field(default=0.0, description="Obstacle sensitivity to W")

class AmericanPutParams(ScenarioParams):
    r: float = Field(default=0.05, ge=0, description="Interest rate")
    sigma: float = Field(default=0.3, gt=0, description="Volatility")
    x0: float = Field(default=100.0, gt=0, description="Spot price")
    strike: float = Field(default=100.0, ge=0)

class MonotoneNonLipschitzParams(ScenarioParams):
    lam: float = Field(default=0.2, ge=0, description="Coefficient of z")
    gamma: float = Field(default=1.0, ge=0, description="Sublinear z-growth constant")
    alpha: float = Field(default=0.5, gt=0, lt=1, description="Sublinear z-growth exponent")

def _martingale(lattice, params: MartingaleParams, p: float) -> Problem:
    return make_problem(lattice, lambda t, w: w ** 2, zero_generator(), no_obstacle(), p=p, params=params.model_dump(), name="martingale")

def _cubic_generator(lam: float = 0.0, h5: Optional[H5Params] = None) -> Generator:
    return Generator(
        func=lambda t, y, z: -y ** 3 + lam * z,
        mu=0.0,
        lam=lam,
        depends_on_z=lam != 0,
        dfdy=lambda t, y, z: -3.0 * y ** 2 + 0.0 * z,
        h5=h5,
        growth=lambda r: r ** 3,
        name="-y^3" if lam == 0 else f"-y^3+{lam}*z",
    )

def _ode_cubic(lattice, params: OdeCubicParams, p: float) -> Problem:
    return make_problem(lattice, params.c, _cubic_generator(), no_obstacle(), p=p, params=params.model_dump(), name="ode-cubic")

def _never_binding(lattice, params: NeverBindingParams, p: float) -> Problem:
    c = params.c
    return make_problem(lattice, lambda t, w: c + w ** 2, zero_generator(), constant_obstacle(c), p=p, params=params.model_dump(),
                        name="never-binding")

def _binding_obstacle(lattice, params: BindingObstacleParams, p: float) -> Problem:
    l0, kappa, T = params.l0, params.kappa, params.T
    obstacle = node_obstacle(
        lambda t, w: l0 * (1.0 - t / T) * (1.0 + kappa * w),
        monotone="increasing" if kappa >= 0 else "decreasing",
    )
    return make_problem(lattice, 0.0, zero_generator(), obstacle, p=p, params=params.model_dump(), name="binding-obstacle")

def american_put_spot(params: AmericanPutParams) -> Callable[[float, np.ndarray], np.ndarray]:
    """X_t = x0 exp(sigma W_t + (r - sigma^2 / 2) t) as a node function"""
    r, sigma, x0 = params.r, params.sigma, params.x0
    return lambda t, w: x0 * np.exp(sigma * w + (r - 0.5 * sigma ** 2) * t)

def _american_put(lattice, params: AmericanPutParams, p: float) -> Problem:
    r, strike = params.r, params.strike
    spot = american_put_spot(params)
    payoff = lambda t, w: np.maximum(strike - spot(t, w), 0.0)
    gen = Generator(
        func=lambda t, y, z: -r * y + 0.0 * z,
        mu=-r,
        lam=0.0,
        depends_on_z=False,
        dfdy=lambda t, y, z: np.full(np.broadcast(y, z).shape, -r),
        lipschitz_y=r,
        name=f"-{r}*y",
    )
    return make_problem(lattice, payoff, gen, node_obstacle(payoff, monotone="decreasing"), p=p, params=params.model_dump(),
                        name="american-put")

def _monotone_nonlipschitz(lattice, params: MonotoneNonLipschitzParams, p: float) -> Problem:
    """
    Cubic driver with a lam z term, declared H5 with (gamma, alpha).

    lam |z| <= gamma (|y| + |z|)^alpha does not hold for all z: with the defaults it
    fails once |z| > 25. The declaration is checked on the probe box of half-width
    RBSDE_PROBE_RADIUS (default 10), where it holds.
    """
    T = params.T
    h5 = H5Params(gamma=params.gamma, alpha=params.alpha, g=0.0)
    obstacle = node_obstacle(lambda t, w: np.full(np.shape(w), 0.5 * (1.0 - t / T)), monotone="increasing")
    return make_problem(lattice, lambda t, w: np.abs(w), _cubic_generator(params.lam, h5), obstacle, p=p, params=params.model_dump(),
                        name="monotone-nonlipschitz")

SCENARIOS: Dict[str, tuple] = {
    "martingale": (MartingaleParams, _martingale, 2.0),
    "ode-cubic": (OdeCubicParams, _ode_cubic, 2.0),
    "never-binding": (NeverBindingParams, _never_binding, 2.0),
    "binding-obstacle": (BindingObstacleParams, _binding_obstacle, 2.0),
    "american-put": (AmericanPutParams, _american_put, 2.0),
    "monotone-nonlipschitz": (MonotoneNonLipschitzParams, _monotone_nonlipschitz, 1.5),
}

def scenario_names() -> list:
    return list(SCENARIOS)

def scenario_params_model(name: str) -> Type[ScenarioParams]:
    if name not in SCENARIOS:
        raise ProblemError(f"Unknown scenario {name!r}, expected one of {scenario_names()}")
    return SCENARIOS[name][0]

def parse_scenario_params(name: str, params: Optional[Dict[str, Any]] = None) -> ScenarioParams:
    """Validate scenario parameters; unknown keys are rejected"""
    model = scenario_params_model(name)
    try:
        return model(**(params or {}))
    except ValidationError as e:
        raise ProblemError(f"Invalid parameters for scenario {name}: {e}") from e

def scenario(name: str, params: Optional[Dict[str, Any]] = None, steps: int = 100, p: Optional[float] = None) -> Problem:
    """
    Instantiate a catalog scenario.

    Args:
        name: Catalog name
        params: Scenario parameters, validated against the scenario's schema
        steps: Lattice step count N
        p: Integrability exponent, defaults to the scenario's own

    Returns:
        The problem
    """
    model, build, default_p = SCENARIOS.get(name, (None, None, None))
    if model is None:
        raise ProblemError(f"Unknown scenario {name!r}, expected one of {scenario_names()}")
    parsed = parse_scenario_params(name, params)
    lattice = build_lattice(parsed.T, steps)
    problem = build(lattice, parsed, default_p if p is None else p)
    logger.debug(f"Scenario {name} N={steps} params={problem.params}")
    return problem
