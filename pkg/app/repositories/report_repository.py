"""Persistence of run artifacts: JSON summaries, CSV diagnostics and SVG plots."""

import csv
import json
import math
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel

from app.repositories.grid_repository import format_float


def sanitize(
    payload: Any, path: str = "$", flagged: list[str] | None = None
) -> tuple[Any, list[str]]:
    """Replace NaN/±inf by ``None`` and list the JSON paths where that happened."""
    flagged = [] if flagged is None else flagged
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="python")
    if isinstance(payload, dict):
        return {str(k): sanitize(v, f"{path}.{k}", flagged)[0] for k, v in payload.items()}, flagged
    if isinstance(payload, list | tuple):
        items = [sanitize(v, f"{path}[{i}]", flagged)[0] for i, v in enumerate(payload)]
        return items, flagged
    if isinstance(payload, np.ndarray):
        return sanitize(payload.tolist(), path, flagged)
    if isinstance(payload, np.generic):
        payload = payload.item()
    if isinstance(payload, float) and not math.isfinite(payload):
        flagged.append(path)
        return None, flagged
    if hasattr(payload, "value") and isinstance(payload.value, str):
        return payload.value, flagged
    return payload, flagged


def _cell(value: Any) -> str:
    if isinstance(value, float | np.floating):
        return format_float(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


class ReportRepository:
    """Writes artifacts under one output directory.

    JSON is written with sorted keys and two-space indent; non-finite floats
    become ``null`` and their paths are listed under ``non_finite``. Identical
    inputs produce byte-identical JSON and CSV files.
    """

    def __init__(self, out_dir: Path | str) -> None:
        self.out_dir = Path(out_dir)

    def _target(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name

    def write_json(self, name: str, payload: dict[str, Any] | BaseModel) -> Path:
        data, flagged = sanitize(payload)
        data["non_finite"] = sorted(flagged)
        path = self._target(f"{name}.json")
        path.write_text(json.dumps(data, sort_keys=True, indent=2, allow_nan=False) + "\n")
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = self._target(f"{name}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        return path

    def write_svg(self, name: str, svg: str) -> Path:
        path = self._target(f"{name}.svg")
        path.write_text(svg)
        return path

    def read_json(self, name: str) -> dict[str, Any]:
        return dict(json.loads(self._target(f"{name}.json").read_text()))
