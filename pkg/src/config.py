"""
Configuration management for the CSD test toolkit.

Handles environment variables, numerical engine limits, and default
settings for tests, critical values and simulations.
"""

from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings
from pydantic import Field, field_validator


class Settings(BaseSettings):
    """Toolkit settings with reproducible defaults."""
    
    # Logging
    log_level: str = Field(default="INFO")
    log_file: Optional[Path] = Field(default=None)
    
    # Test defaults
    alpha: float = Field(default=0.05, description="Default nominal level")
    seed: int = Field(default=20240517, description="Default root seed for Monte Carlo work")
    workers: int = Field(default=1, description="Number of worker processes")
    
    # Null distribution engines
    # DP cost grows steeply with q: near q = 500 with coprime sizes one table takes tens of seconds
    exact_max_q: int = Field(default=500, description="Largest q = q_y + q_x served by the exact DP")
    exact_integer_max_q: int = Field(default=60, description="Largest q counted with big integers")
    mc_draws: int = Field(default=1_000_000, description="Monte Carlo draws for the simulated null")
    mc_block_size: int = Field(default=65_536, description="Draws per seeded Monte Carlo block")
    permutation_max_assignments: int = Field(default=200_000)
    enumeration_max_assignments: int = Field(default=200_000, description="CvM/AD exact enumeration bound")
    
    # Tuning rule
    rho_clamp: float = Field(default=0.99, description="Absolute bound applied to the correlation")
    q_min: int = Field(default=2, description="Lower clamp for the rule-of-thumb q")
    q_max_fraction: float = Field(default=1.0, description="Upper clamp for q as a fraction of n")
    
    # Refined critical value
    refined_grid_resolution: int = Field(default=101)
    # the grid per coordinate shrinks to fit: 101 points for r = 1, 100 for r = 2, 32 for r = 3
    refined_max_grid_tuples: int = Field(default=5_000, description="Cap on grid tuples searched per refinement step")
    refined_iterations: int = Field(default=200)
    
    # Simulation harness
    max_failure_fraction: float = Field(default=0.01)
    
    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v):
        """Ensure the default level is a proper probability."""
        if not 0.0 < v < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")
        return v
    
    @field_validator("rho_clamp")
    @classmethod
    def validate_rho_clamp(cls, v):
        """Keep the clamped correlation strictly inside (-1, 1)."""
        if not 0.0 < v < 1.0:
            raise ValueError("rho_clamp must lie strictly between 0 and 1")
        return v
    
    @field_validator("q_max_fraction")
    @classmethod
    def validate_fraction(cls, v):
        """Ensure the fraction lies in (0, 1]."""
        if not 0.0 < v <= 1.0:
            raise ValueError("value must lie in (0, 1]")
        return v
    
    @field_validator("workers", "mc_draws", "mc_block_size", "q_min", "refined_grid_resolution")
    @classmethod
    def validate_positive(cls, v):
        """Ensure counts are positive."""
        if v < 1:
            raise ValueError("value must be a positive integer")
        return v
    
    @field_validator("log_file")
    @classmethod
    def create_directories(cls, v):
        """Ensure the log directory exists."""
        if v and isinstance(v, Path):
            v.parent.mkdir(parents=True, exist_ok=True)
        return v
    
    class Config:
        env_prefix = "CSD_"
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = False


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Process-wide settings, read once from the environment."""
    return Settings()
