"""Persistence of grid fields as a JSON header plus a CSV body."""

import csv
import json
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.errors import GridFormatError
from app.models.grid import GridField, GridSpec
from app.schemas.artifacts import GridHeader


def format_float(value: float) -> str:
    """17 significant digits: enough for an exact round trip of any double."""
    return f"{value:.17g}"


class GridRepository:
    """Reads and writes ``<stem>.json`` + ``<stem>.csv`` pairs.

    CSV rows are one node each: index columns, coordinates, value.
    """

    def __init__(self, root: Path | str = ".") -> None:
        self.root = Path(root)

    def save(self, gf: GridField, stem: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        grid = gf.grid
        n = grid.n
        values_file = f"{stem}.csv"
        header = GridHeader(
            dimension=n,
            origin=list(grid.origin),
            spacing=list(grid.spacing),
            shape=list(grid.shape),
            lower=[float(grid.axis(i)[0]) for i in range(n)],
            upper=[float(grid.axis(i)[-1]) for i in range(n)],
            kind=gf.kind,
            boundary_policy=gf.boundary_policy,
            positivity_floor=gf.positivity_floor,
            values_file=values_file,
        )
        header_path = self.root / f"{stem}.json"
        header_path.write_text(
            json.dumps(header.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"
        )

        coords = grid.coordinates().reshape((-1, n))
        flat = gf.values.reshape(-1)
        with open(self.root / values_file, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"i{d}" for d in range(n)] + [f"x{d}" for d in range(n)] + ["value"])
            for node, point, value in zip(np.ndindex(*grid.shape), coords, flat, strict=True):
                writer.writerow(
                    [*node, *(format_float(float(c)) for c in point), format_float(float(value))]
                )
        return header_path

    def load(self, path: Path | str) -> GridField:
        header_path = Path(path)
        if not header_path.is_absolute() and not header_path.exists():
            header_path = self.root / header_path
        try:
            raw = json.loads(header_path.read_text())
        except FileNotFoundError as exc:
            raise GridFormatError(f"grid header not found: {header_path}") from exc
        except json.JSONDecodeError as exc:
            raise GridFormatError(
                f"{header_path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
        try:
            header = GridHeader.model_validate(raw)
        except ValidationError as exc:
            first = exc.errors()[0]
            loc = ".".join(str(p) for p in first["loc"])
            raise GridFormatError(f"{header_path}: {loc}: {first['msg']}") from exc

        try:
            grid = GridSpec(tuple(header.origin), tuple(header.spacing), tuple(header.shape))
        except ValueError as exc:
            raise GridFormatError(f"{header_path}: {exc}") from exc
        values = np.full(grid.shape, np.nan)
        seen = np.zeros(grid.shape, dtype=bool)
        csv_path = header_path.parent / header.values_file
        n = header.dimension
        try:
            with open(csv_path, newline="") as fh:
                reader = csv.reader(fh)
                next(reader, None)
                for lineno, row in enumerate(reader, start=2):
                    if len(row) != 2 * n + 1:
                        raise GridFormatError(
                            f"{csv_path}:{lineno}: expected {2 * n + 1} columns, got {len(row)}"
                        )
                    node = tuple(int(v) for v in row[:n])
                    if min(node) < 0:
                        raise GridFormatError(f"{csv_path}:{lineno}: negative node index")
                    values[node] = float(row[-1])
                    seen[node] = True
        except FileNotFoundError as exc:
            raise GridFormatError(f"grid values not found: {csv_path}") from exc
        except (ValueError, IndexError) as exc:
            raise GridFormatError(f"{csv_path}: malformed row: {exc}") from exc
        if not np.all(seen):
            raise GridFormatError(f"{csv_path}: {int(np.count_nonzero(~seen))} nodes missing")

        try:
            return GridField(grid, values, header.kind, header.boundary_policy)
        except ValueError as exc:
            raise GridFormatError(f"{csv_path}: {exc}") from exc
