"""Seed script for example experiment configs.

Writes one validated config per CLI command, plus the Liouville negative
paths, to ``configs/``.
Run: python -m scripts.seed_configs
"""

import json
import logging
from pathlib import Path
from typing import Any

from app.schemas.experiment import ExperimentConfig

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

# ── Shared pieces ─────────────────────────────────────────────────────────────

SIGMA_1_N3 = {"family": "sigma_k", "n": 3, "k": 1}
SIGMA_2_N4 = {"family": "sigma_k", "n": 4, "k": 2}
SHIFTED_TRACE_N3 = {"family": "custom", "n": 3, "name": "shifted_trace"}

TUNED_BUBBLE_N3 = {"family": "tuned_bubble", "b": 1.0, "x0": [0.0, 0.0, 0.0]}
TUNED_BUBBLE_N4 = {"family": "tuned_bubble", "b": 1.0, "x0": [0.1, -0.2, 0.0, 0.3]}

# ── Configs ───────────────────────────────────────────────────────────────────

CONFIGS: dict[str, dict[str, Any]] = {
    "check-solution": {
        "command": "check-solution",
        "name": "check-solution",
        "seed": 1,
        "operator": SIGMA_1_N3,
        "field": TUNED_BUBBLE_N3,
        "check_solution": {"points": 1000, "radius": 1.0},
    },
    "mobius-invariance": {
        "command": "mobius-invariance",
        "name": "mobius-invariance",
        "seed": 2,
        "operator": SIGMA_2_N4,
        "field": TUNED_BUBBLE_N4,
        "mobius_invariance": {"random_ops": 5, "points": 1000, "radius": 1.0},
    },
    "sup-convolve": {
        "command": "sup-convolve",
        "name": "sup-convolve",
        "seed": 3,
        "operator": SIGMA_1_N3,
        "field": TUNED_BUBBLE_N3,
        "sup_convolve": {
            "eps": 0.05,
            "grid": {"lower": [-1.0, -1.0, -1.0], "upper": [1.0, 1.0, 1.0], "nodes": 41},
            "brute_force_stride": 10,
        },
    },
    "deformation": {
        "command": "deformation",
        "name": "deformation",
        "seed": 4,
        "operator": SIGMA_1_N3,
        "field": TUNED_BUBBLE_N3,
        "deformation": {"case": "super", "mu": 0.001},
    },
    "hopf": {
        "command": "hopf",
        "name": "hopf",
        "seed": 5,
        "operator": SIGMA_1_N3,
        "field": TUNED_BUBBLE_N3,
        "hopf": {"lam_fraction": 0.5},
    },
    "moving-sphere": {
        "command": "moving-sphere",
        "name": "moving-sphere",
        "seed": 6,
        "operator": SIGMA_1_N3,
        "field": TUNED_BUBBLE_N3,
        "moving_sphere": {"R": 100.0, "count": 8, "dilation": 2.0},
    },
    "liouville": {
        "command": "liouville",
        "name": "liouville",
        "seed": 7,
        "operator": SIGMA_1_N3,
        "field": TUNED_BUBBLE_N3,
        "liouville": {"R": 100.0},
    },
    "liouville-scaled": {
        "command": "liouville",
        "name": "liouville-scaled",
        "seed": 8,
        "operator": SIGMA_1_N3,
        "field": {**TUNED_BUBBLE_N3, "scale": 0.9},
        "liouville": {"R": 100.0},
    },
    "liouville-constant": {
        "command": "liouville",
        "name": "liouville-constant",
        "seed": 9,
        "operator": SHIFTED_TRACE_N3,
        "field": {"family": "constant", "c": 1.0},
        "liouville": {"R": 100.0},
    },
}


def seed_configs(target: Path = CONFIG_DIR) -> list[Path]:
    """Validate every config and write it as sorted, indented JSON."""
    target.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, raw in CONFIGS.items():
        config = ExperimentConfig.model_validate(raw)
        payload = config.model_dump(mode="json", exclude_unset=True)
        path = target / f"{stem}.json"
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        logger.info("Wrote %s", path)
        written.append(path)
    return written


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    seed_configs()
