"""Pydantic schemas for persisted artifacts: grid file headers and the audit block."""

from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.grid import BoundaryPolicy, FieldKind


class GridHeader(BaseModel):
    """JSON header of a grid field; the node values live in the companion CSV."""

    model_config = ConfigDict(extra="forbid")

    dimension: int = Field(ge=1)
    origin: list[float]
    spacing: list[float]
    shape: list[int]
    lower: list[float]
    upper: list[float]
    kind: FieldKind = FieldKind.u
    boundary_policy: BoundaryPolicy = BoundaryPolicy.reject
    positivity_floor: float | None = None
    values_file: str

    @model_validator(mode="after")
    def check_lengths(self) -> "GridHeader":
        for name in ("origin", "spacing", "shape", "lower", "upper"):
            if len(getattr(self, name)) != self.dimension:
                raise ValueError(f"{name} must have {self.dimension} entries")
        return self


class AuditRecord(BaseModel):
    """What produced an artifact: tool, command, seed and the fully resolved inputs."""

    tool: str
    version: str
    command: str
    seed: int
    config: dict[str, Any]
    tolerances: dict[str, Any]
