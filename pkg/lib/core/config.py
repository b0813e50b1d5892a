"""Runtime settings read from the environment (optionally a .env file).

- PAYLOGIC_DEPTH_LIMIT: prover depth limit, default 12
- PAYLOGIC_LOG_LEVEL: logging level name, default WARNING
- PAYLOGIC_ORACLE_GRID_HIGH: upper end of oracle delay grids, default 12
- PAYLOGIC_ORACLE_GRID_STEP: oracle grid step, default 1
"""

import logging
import os
from fractions import Fraction

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator


class Settings(BaseModel):
    depth_limit: int = Field(12, ge=1)
    log_level: str = "WARNING"
    oracle_grid_high: int = Field(12, ge=0)
    oracle_grid_step: str = "1"

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        level = value.strip().upper() or "WARNING"
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"PAYLOGIC_LOG_LEVEL must be a logging level name, got {value!r}")
        return level

    @field_validator("oracle_grid_step")
    @classmethod
    def _positive_step(cls, value: str) -> str:
        if Fraction(value) <= 0:
            raise ValueError("PAYLOGIC_ORACLE_GRID_STEP must be > 0")
        return value

    @property
    def grid_step(self) -> Fraction:
        return Fraction(self.oracle_grid_step)

    @classmethod
    def from_env(cls) -> "Settings":
        load_dotenv(override=False)
        values = {
            "depth_limit": os.getenv("PAYLOGIC_DEPTH_LIMIT"),
            "log_level": os.getenv("PAYLOGIC_LOG_LEVEL"),
            "oracle_grid_high": os.getenv("PAYLOGIC_ORACLE_GRID_HIGH"),
            "oracle_grid_step": os.getenv("PAYLOGIC_ORACLE_GRID_STEP"),
        }
        return cls(**{key: value for key, value in values.items() if value})
