import hashlib
import logging
from typing import Any, Dict, List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..analysis.estimates import ESTIMATE_IDS
from ..analysis.compare import RELATIONS
from ..analysis.norms import NORM_MODES
from ..common.errors import ConfigError, ProblemError
from ..picard import PicardConfig
from ..problem import parse_scenario_params, scenario_names

logger = logging.getLogger(__name__)

SOLVER_MODES = ("projected", "penalized", "plain", "shifted")

class CompareRequest(BaseModel):
    """Offsets of the second problem of an ordered pair"""
    model_config = ConfigDict(extra="forbid")

    xi_offset: float = 0.0
    f_offset: float = 0.0
    L_offset: float = 0.0
    relation: str = "Y_le"
    penalty: Optional[float] = Field(default=None, ge=0, description="Compare penalized solves at this level")
    intervals: Optional[List[List[int]]] = None

    @field_validator("relation")
    @classmethod
    def check_relation(cls, v):
        if v not in RELATIONS:
            raise ValueError(f"relation must be one of {RELATIONS}, got {v!r}")
        return v

class TanakaRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    paths: int = Field(default=10, ge=1)
    level: Optional[float] = Field(default=None, description="Level a; a random lattice level per path when unset")
    grid_levels: Optional[int] = Field(default=None, ge=1, description="Cells of the occupation grid, default 4N")

class RunConfig(BaseModel):
    """
    One run of the lab. Unknown keys are rejected at every level.

    Scenario parameters are validated against the scenario's own schema and
    stored with their defaults filled in, so a dumped config reads back to the
    same normalized form.
    """
    model_config = ConfigDict(extra="forbid")

    scenario: str
    params: Dict[str, Any] = Field(default_factory=dict)
    steps: int = Field(default=100, ge=1, description="Lattice steps N")
    p: Optional[float] = Field(default=None, ge=1, le=2)
    solver: str = "projected"
    level: Optional[float] = Field(default=None, ge=0, description="Penalty level of a penalized solve")
    shift: Optional[float] = Field(default=None, description="Exponential shift rate a")
    levels: List[float] = Field(default_factory=list, description="Penalty levels of a sweep")
    refine: List[int] = Field(default_factory=list, description="Step counts of an N-refinement study")
    betas: List[float] = Field(default_factory=list)
    norm_mode: str = "auto"
    count: Optional[int] = Field(default=None, ge=2, description="Sample count for sampled norms")
    workers: Optional[int] = Field(default=None, ge=1)
    picard: PicardConfig = Field(default_factory=PicardConfig)
    estimates: List[str] = Field(default_factory=lambda: list(ESTIMATE_IDS))
    compare: CompareRequest = Field(default_factory=CompareRequest)
    tanaka: TanakaRequest = Field(default_factory=TanakaRequest)
    out: Optional[str] = None
    seed: int = 0

    @field_validator("scenario")
    @classmethod
    def check_scenario(cls, v):
        if v not in scenario_names():
            raise ValueError(f"unknown scenario {v!r}, expected one of {scenario_names()}")
        return v

    @field_validator("solver")
    @classmethod
    def check_solver(cls, v):
        if v not in SOLVER_MODES:
            raise ValueError(f"solver must be one of {SOLVER_MODES}, got {v!r}")
        return v

    @field_validator("norm_mode")
    @classmethod
    def check_norm_mode(cls, v):
        if v not in NORM_MODES:
            raise ValueError(f"norm_mode must be one of {NORM_MODES}, got {v!r}")
        return v

    @field_validator("estimates")
    @classmethod
    def check_estimates(cls, v):
        bad = [e for e in v if e not in ESTIMATE_IDS]
        if bad:
            raise ValueError(f"unknown estimate ids {bad}, expected a subset of {ESTIMATE_IDS}")
        return v

    @field_validator("betas")
    @classmethod
    def check_betas(cls, v):
        if any(not (0 < b) for b in v):
            raise ValueError(f"betas must be positive, got {v}")
        return v

    @field_validator("levels")
    @classmethod
    def check_levels(cls, v):
        if any(b <= a for a, b in zip(v, v[1:])) or any(n < 0 for n in v):
            raise ValueError(f"levels must be nonnegative and strictly increasing, got {v}")
        return v

    @model_validator(mode="after")
    def normalize_params(self):
        try:
            self.params = parse_scenario_params(self.scenario, self.params).model_dump()
        except ProblemError as e:
            raise ValueError(f"params: {e}") from e
        if self.solver == "penalized" and self.level is None:
            raise ValueError("level is required for the penalized solver")
        if self.solver == "shifted" and self.shift is None:
            raise ValueError("shift is required for the shifted solver")
        return self

def _error_key(e: ValidationError) -> Optional[str]:
    for err in e.errors():
        loc = [str(x) for x in err.get("loc", ())]
        if loc:
            return ".".join(loc)
        msg = err.get("msg", "")
        if "params:" in msg:
            return "params"
    return None

def parse_config(data: Dict[str, Any]) -> RunConfig:
    """Validate a config mapping, mapping schema errors to ConfigError"""
    if not isinstance(data, dict):
        raise ConfigError(f"Config must be a mapping, got {type(data).__name__}")
    try:
        return RunConfig(**data)
    except ValidationError as e:
        key = _error_key(e)
        raise ConfigError(f"Invalid config{'' if key is None else f' key {key!r}'}: {e}", key=key) from e

def read_config(path: str) -> RunConfig:
    """
    Read a RunConfig from a YAML file.

    Raises:
        ConfigError: On unreadable files, YAML syntax errors or schema violations
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed YAML in {path}: {e}") from e
    cfg = parse_config(data or {})
    logger.debug(f"Read config {path}: scenario={cfg.scenario} N={cfg.steps}")
    return cfg

def dump_config(cfg: RunConfig) -> str:
    """Normalized YAML text: sorted keys, every default filled in"""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True, default_flow_style=False)

def run_id(cfg: RunConfig, command: str = "") -> str:
    """Stable id of a run, the sha256 of the command and the normalized config"""
    digest = hashlib.sha256(f"{command}\n{dump_config(cfg)}".encode("utf-8")).hexdigest()
    return digest[:16]
