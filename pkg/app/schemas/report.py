from typing import Any

from pydantic import BaseModel, Field


class CheckRecord(BaseModel):
    id: str
    op: str
    inputs_digest: str
    values: dict[str, Any] = Field(default_factory=dict)
    residual: float | None = None
    budget: float | None = None
    tolerance: float
    passed: bool
    error: str | None = None
    artifacts: list[str] = Field(default_factory=list)


class ExperimentReport(BaseModel):
    scenario: str
    passed: bool
    checks: list[CheckRecord] = Field(default_factory=list)


class RunMetadata(BaseModel):
    """Everything that varies between identical runs lives here, not in the report."""

    scenario: str
    scenario_file: str
    started_at: str
    wall_clock_seconds: float
    platform: str
    python: str
    versions: dict[str, str]
    parallel: int
