"""Run configuration shared by the CLI, the HTTP service and the generators."""
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

STOPLIST_ENV = "FINPROG_STOPLIST"
TASKS = ("vir", "vop", "vkm")


class RunConfig(BaseModel):
    # randomness
    seed: int = 42

    # VIR
    k: int = Field(default=3, ge=1)
    noisy_vir: bool = False

    # TextRank / keyphrases
    window: int = Field(default=2, ge=2)
    damping: float = 0.85
    tol: float = Field(default=1e-6, gt=0)
    max_iter: int = Field(default=100, ge=1)
    stoplist_path: Optional[Path] = None

    # linearization
    cell_separator: str = " ; "
    row_terminator: str = " ."

    # DSL / equivalence
    extra_constants: Dict[str, float] = Field(default_factory=dict)
    eliminate_dead_steps: bool = True

    # metrics
    exe_tol: float = Field(default=1e-4, gt=0)
    percent_equiv: bool = False

    # reference trainer (batch size follows the pretraining setup of 4)
    batch_size: int = Field(default=4, ge=1)
    steps: Optional[int] = Field(default=None, ge=1)
    epochs: int = Field(default=1, ge=1)
    lr: float = Field(default=0.1, gt=0)
    dim: int = Field(default=32, ge=1)
    tasks: List[str] = Field(default_factory=lambda: list(TASKS))

    # execution
    jobs: int = Field(default=1, ge=1)

    @field_validator("damping")
    @classmethod
    def _damping_open_interval(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("damping must lie in (0, 1)")
        return v

    @field_validator("tasks")
    @classmethod
    def _known_tasks(cls, v: List[str]) -> List[str]:
        unknown = [t for t in v if t not in TASKS]
        if unknown:
            raise ValueError(f"unknown tasks: {unknown}")
        return v

    def provenance(self) -> Dict[str, Any]:
        """Config echoed into artifact headers. Paths are kept as given."""
        return self.model_dump(mode="json")


def load_config(**overrides: Any) -> RunConfig:
    """Build a RunConfig from `.env` / environment plus explicit overrides."""
    load_dotenv()
    values: Dict[str, Any] = {}
    env_stoplist = os.getenv(STOPLIST_ENV)
    if env_stoplist:
        values["stoplist_path"] = Path(env_stoplist)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)
