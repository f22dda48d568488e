import math
import logging
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..common.errors import ConfigError

logger = logging.getLogger(__name__)

class PicardConfig(BaseModel):
    """Controls for the Picard-over-z construction"""
    model_config = ConfigDict(extra="forbid")

    p: float = Field(default=1.5, gt=1, description="Exponent of the contraction norm")
    chat: float = Field(default=1.0, gt=0, description="Stability constant used for the block mesh")
    max_sweeps: int = Field(default=50, ge=1)
    stop_tol: float = Field(default=1e-8, gt=0, description="Stop when successive H^p distance is below this")
    blocks: Optional[List[int]] = Field(default=None, description="Explicit block boundaries as grid steps")
    norm_mode: str = "auto"
    count: Optional[int] = None
    seed: Optional[int] = None

    @model_validator(mode="after")
    def check_blocks(self):
        if self.blocks is not None:
            b = self.blocks
            if len(b) < 2 or b[0] != 0 or any(y <= x for x, y in zip(b, b[1:])):
                raise ValueError(f"Block boundaries must start at 0 and increase strictly, got {b}")
        return self

class BlockSchedule(BaseModel):
    delta: float
    steps: List[int]
    times: List[float]

    @property
    def count(self) -> int:
        return len(self.steps) - 1

def block_schedule(T: float, lam: float, chat: float, N: Optional[int] = None) -> BlockSchedule:
    """
    Uniform blocks of mesh delta = min(T, (2 chat lam)^-2) covering [0, T].

    Args:
        T: Horizon
        lam: Lipschitz constant in z, >= 0
        chat: Stability constant, > 0
        N: Grid steps; when given, blocks hold floor(delta / h) steps each;
            the last block takes the remainder

    Returns:
        BlockSchedule with boundary steps (or k for an abstract k-block grid) and times

    Raises:
        ConfigError: When delta is below one grid step
    """
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}", key="lambda")
    if not (chat > 0):
        raise ConfigError(f"chat must be > 0, got {chat}", key="chat")
    delta = T if lam == 0 else min(T, (2.0 * chat * lam) ** -2)
    k = max(1, math.ceil(T / delta - 1e-12))
    if N is None:
        steps = list(range(k + 1))
        times = [T * i / k for i in range(k + 1)]
    else:
        h = T / N
        if delta < h * (1 - 1e-12):
            raise ConfigError(f"Block mesh {delta:.6g} is smaller than the grid step {h:.6g}", key="chat")
        width = max(1, math.floor(delta / h * (1 + 1e-12)))
        steps = list(range(0, N, width)) + [N]
        times = [s * h for s in steps]
    logger.debug(f"Block schedule delta={delta:.6g} with {len(steps) - 1} blocks")
    return BlockSchedule(delta=delta, steps=steps, times=times)
