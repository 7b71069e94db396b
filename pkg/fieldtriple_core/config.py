"""Centralized numerical configuration.

Loads environment variables (and a local .env) into a single dataclass so that
tolerances and worker counts are defined in one place.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar

from dotenv import load_dotenv


@dataclass(frozen=True)
class TripleConfig:
    """Tolerances, iteration budgets and run settings."""

    # Tolerances
    tau_eq: float = 1e-10  # exact identities
    tau_pde: float = 1e-9  # PDE residuals
    tau_rank: float = 1e-8  # relative singular-value cutoff
    tau_newton: float = 1e-12

    # Newton inversion of the Legendre map
    newton_max_iter: int = 50
    newton_damped_steps: int = 20
    memo_digits: int = 12

    # Verification runs
    workers: int = 1
    default_samples: int = 20
    default_seed: int = 0

    # Paths
    problems_dir: Path = field(
        default_factory=lambda: Path(__file__).parent.parent / "problems"
    )

    # Singleton instance
    _instance: ClassVar[TripleConfig | None] = None

    @classmethod
    def get_instance(cls) -> TripleConfig:
        """Get the singleton configuration instance."""
        if cls._instance is None:
            cls._instance = cls._load_from_env()
        return cls._instance

    @classmethod
    def _load_from_env(cls) -> TripleConfig:
        """Load configuration from environment variables."""
        load_dotenv()

        defaults = cls()
        problems_dir = os.getenv("FIELDTRIPLE_PROBLEMS_DIR")
        return cls(
            tau_eq=float(os.getenv("FIELDTRIPLE_TAU_EQ", str(defaults.tau_eq))),
            tau_pde=float(os.getenv("FIELDTRIPLE_TAU_PDE", str(defaults.tau_pde))),
            tau_rank=float(os.getenv("FIELDTRIPLE_TAU_RANK", str(defaults.tau_rank))),
            tau_newton=float(
                os.getenv("FIELDTRIPLE_TAU_NEWTON", str(defaults.tau_newton))
            ),
            newton_max_iter=int(os.getenv("FIELDTRIPLE_NEWTON_MAX_ITER", "50")),
            newton_damped_steps=int(os.getenv("FIELDTRIPLE_NEWTON_DAMPED", "20")),
            memo_digits=int(os.getenv("FIELDTRIPLE_MEMO_DIGITS", "12")),
            workers=max(1, int(os.getenv("FIELDTRIPLE_WORKERS", "1"))),
            default_samples=int(os.getenv("FIELDTRIPLE_SAMPLES", "20")),
            default_seed=int(os.getenv("FIELDTRIPLE_SEED", "0")),
            problems_dir=(
                Path(problems_dir) if problems_dir else defaults.problems_dir
            ),
        )

    def tolerances(self) -> dict[str, float]:
        """Tolerances keyed the way problem files and the CLI name them."""
        return {"eq": self.tau_eq, "pde": self.tau_pde, "rank": self.tau_rank}


def get_config() -> TripleConfig:
    """Get the current configuration."""
    return TripleConfig.get_instance()


def reset_config() -> None:
    """Forget the cached configuration (next get_config() re-reads the env)."""
    TripleConfig._instance = None
