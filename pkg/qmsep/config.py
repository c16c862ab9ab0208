# qmsep/config.py - Environment-driven settings
import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

load_dotenv()


class Settings(BaseModel):
    """
    Numerical tolerances and logging level.
    Values come from QMSEP_* environment variables (or a .env file).
    """

    rel_tol: float = Field(default=1e-10, gt=0, lt=1)
    verdict_tol: float = Field(default=1e-8, gt=0, lt=1)
    subspace_tol: float = Field(default=1e-6, gt=0, lt=1)
    log_level: str = "INFO"

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {value}")
        return value

    @classmethod
    def from_env(cls) -> "Settings":
        values = {}
        for field, env_name in (("rel_tol", "QMSEP_REL_TOL"),
                                ("verdict_tol", "QMSEP_VERDICT_TOL"),
                                ("subspace_tol", "QMSEP_SUBSPACE_TOL"),
                                ("log_level", "QMSEP_LOG_LEVEL")):
            raw = os.getenv(env_name)
            if raw is not None and raw.strip():
                values[field] = raw.strip()
        return cls(**values)


settings = Settings.from_env()


def rel_tol_or_default(rel_tol: Optional[float]) -> float:
    return settings.rel_tol if rel_tol is None else float(rel_tol)


def verdict_tol_or_default(tol: Optional[float]) -> float:
    return settings.verdict_tol if tol is None else float(tol)


def subspace_tol_or_default(tol: Optional[float]) -> float:
    return settings.subspace_tol if tol is None else float(tol)
