"""Run configuration shared by the driver, the built-in domains and the CLI."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional


@dataclass
class DriverConfig:
    v_expert: float
    episode_length: int = 100
    total_step_budget: int = 200_000
    query_step_budget: int = 10**6
    mode: str = "min"
    seed: int = 0
    out_dir: Optional[str] = None

    def __post_init__(self):
        if self.episode_length < 1:
            raise ValueError("episode_length must be at least 1")
        if self.total_step_budget <= 0 or self.query_step_budget <= 0:
            raise ValueError("step budgets must be positive")
        if self.mode not in ("min", "max"):
            raise ValueError(f"mode must be 'min' or 'max', got {self.mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)
