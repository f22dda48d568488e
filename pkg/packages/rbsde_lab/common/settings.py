from functools import lru_cache
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

class LabSettings(BaseSettings):
    """Run-wide defaults, overridable through RBSDE_* environment variables"""
    model_config = SettingsConfigDict(env_prefix="RBSDE_", extra="ignore")

    nmax_enum: int = Field(default=20, ge=1, le=24, description="Path enumeration cap")
    probe_radius: float = Field(default=10.0, gt=0, description="Probe box half-width for y and z")
    probe_count: int = Field(default=1000, ge=1)
    probe_tol: float = Field(default=1e-9, gt=0)
    root_tol: float = Field(default=1e-13, gt=0)
    max_iter: int = Field(default=200, ge=1)
    sample_count: int = Field(default=20000, ge=1)
    sample_batch: int = Field(default=65536, ge=1)
    augmented_max_states: int = Field(default=5_000_000, ge=1)
    default_seed: int = 0

@lru_cache(maxsize=1)
def get_settings() -> LabSettings:
    """
    Get the lab settings.

    Returns:
        The cached LabSettings instance.
    """
    return LabSettings()
