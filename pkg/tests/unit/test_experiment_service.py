"""Unit tests for ExperimentService pipelines.

Runs use small sample counts and write under ``tmp_path``; the heavy
moving-sphere paths are covered by the slow Liouville tests.
"""

import json

import pytest

from app.config import Settings
from app.errors import BadParams, DomainMismatch, NotASolution
from app.models.grid import GridSpec
from app.repositories.grid_repository import GridRepository
from app.repositories.report_repository import ReportRepository
from app.schemas.experiment import ExperimentConfig
from app.services import movingsphere
from app.services.experiment_service import ExperimentService
from app.services.fields import sample
from tests.conftest import make_config_payload

# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _service(tmp_path, **kwargs) -> ExperimentService:
    return ExperimentService(Settings(), ReportRepository(tmp_path / "out"), **kwargs)


def _config(**overrides) -> ExperimentConfig:
    return ExperimentConfig.model_validate(make_config_payload(**overrides))


def _summary(outcome) -> dict:
    return json.loads(outcome.summary_path.read_text())


# =========================================================================
# check-solution
# =========================================================================


class TestCheckSolution:
    def test_tuned_bubble_passes(self, tmp_path):
        outcome = _service(tmp_path).run(_config())
        assert outcome.passed is True
        assert outcome.summary_path.name == "unit-summary.json"
        summary = _summary(outcome)
        assert summary["command"] == "check-solution"
        assert summary["result"]["aggregate"] == "Solution"
        assert summary["result"]["counts"]["OnLevel"] == 50
        assert summary["non_finite"] == []

    def test_points_table(self, tmp_path):
        outcome = _service(tmp_path).run(_config())
        table = tmp_path / "out" / "unit-points.csv"
        assert table in outcome.artifacts
        rows = table.read_text().splitlines()
        assert rows[0] == "x0,x1,x2,value,min_eigenvalue,verdict"
        assert len(rows) == 51

    def test_scaled_bubble_fails(self, tmp_path):
        field = {"family": "tuned_bubble", "b": 1.0, "x0": [0.0, 0.0, 0.0], "scale": 0.9}
        outcome = _service(tmp_path).run(_config(field=field))
        assert outcome.passed is False
        assert _summary(outcome)["result"]["aggregate"] == "SubSolution"

    def test_plots_only_on_request(self, tmp_path):
        quiet = _service(tmp_path / "a").run(_config())
        loud = _service(tmp_path / "b", plot=True).run(_config())
        assert not any(p.suffix == ".svg" for p in quiet.artifacts)
        assert [p.name for p in loud.artifacts if p.suffix == ".svg"] == ["unit-values.svg"]

    def test_grid_file_subject(self, tmp_path, bubble_n3):
        grid = GridSpec.box((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5), 21)
        GridRepository(tmp_path).save(sample(bubble_n3, grid), "bubble")
        config = _config(field={"family": "grid_file", "path": "bubble.json"})
        outcome = _service(tmp_path, grids=GridRepository(tmp_path)).run(config)
        assert outcome.passed is True
        assert _summary(outcome)["result"]["tol"] > 1e-4


# =========================================================================
# Shared run behaviour
# =========================================================================


class TestRunEnvelope:
    def test_seed_falls_back_to_settings(self, tmp_path):
        payload = make_config_payload()
        del payload["seed"]
        outcome = _service(tmp_path).run(ExperimentConfig.model_validate(payload))
        assert _summary(outcome)["audit"]["seed"] == Settings().seed

    def test_tolerance_overrides_in_audit(self, tmp_path):
        outcome = _service(tmp_path).run(_config(tolerances={"verdict_tol_exact": 1e-6}))
        audit = _summary(outcome)["audit"]
        assert audit["tolerances"]["verdict_tol_exact"] == 1e-6
        assert audit["tool"] == "conformal-verify"
        assert audit["config"]["name"] == "unit"

    def test_byte_identical_reruns(self, tmp_path):
        first = _service(tmp_path / "a").run(_config())
        second = _service(tmp_path / "b").run(_config())
        for a, b in zip(first.artifacts, second.artifacts, strict=True):
            assert a.name == b.name
            assert a.read_bytes() == b.read_bytes()

    def test_threads_default_from_settings(self, tmp_path):
        assert _service(tmp_path).threads == Settings().threads
        assert _service(tmp_path, threads=3).threads == 3


# =========================================================================
# Other commands
# =========================================================================


class TestMobiusInvariance:
    def test_explicit_ops_pass(self, tmp_path):
        block = {
            "ops": [
                {"op": "translate", "vector": [0.3, 0.0, -0.1]},
                {"op": "dilate", "r": 1.5},
                {"op": "invert", "center": [2.5, 0.0, 0.0]},
            ],
            "points": 40,
            "tol": 1e-6,
        }
        config = _config(command="mobius-invariance", mobius_invariance=block)
        outcome = _service(tmp_path).run(config)
        assert outcome.passed is True
        summary = _summary(outcome)
        assert len(summary["result"]["map"]) == 3
        assert summary["result"]["max_discrepancy"] <= 1e-6

    def test_grid_subject_rejected(self, tmp_path, bubble_n3):
        grid = GridSpec.box((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5), 9)
        GridRepository(tmp_path).save(sample(bubble_n3, grid), "bubble")
        config = _config(
            command="mobius-invariance", field={"family": "grid_file", "path": "bubble.json"}
        )
        with pytest.raises(DomainMismatch, match="analytic field"):
            _service(tmp_path, grids=GridRepository(tmp_path)).run(config)


class TestSupConvolve:
    def test_analytic_field_needs_grid(self, tmp_path):
        config = _config(command="sup-convolve", sup_convolve={"eps": 0.1})
        with pytest.raises(BadParams, match="grid block"):
            _service(tmp_path).run(config)

    def test_grid_block_dimension_checked(self, tmp_path):
        block = {"eps": 0.1, "grid": {"lower": [-1.0, -1.0], "upper": [1.0, 1.0], "nodes": 9}}
        config = _config(command="sup-convolve", sup_convolve=block)
        with pytest.raises(DomainMismatch, match="3 entries"):
            _service(tmp_path).run(config)

    def test_small_grid_passes(self, tmp_path):
        block = {
            "eps": 0.1,
            "grid": {"lower": [-1.0, -1.0, -1.0], "upper": [1.0, 1.0, 1.0], "nodes": 11},
            "brute_force_stride": 2,
        }
        outcome = _service(tmp_path).run(_config(command="sup-convolve", sup_convolve=block))
        summary = _summary(outcome)["result"]
        assert summary["min_regularized_minus_psi"] >= -1e-12
        assert summary["brute_force_max_error"] <= 1e-12
        assert summary["semiconvexity"]["bound"] == pytest.approx(20.0)
        assert (tmp_path / "out" / "unit-nodes.csv").exists()


class TestLiouvilleDispatch:
    def test_threads_passed_through(self, tmp_path, mocker):
        classify = mocker.patch.object(
            movingsphere, "liouville_classify", side_effect=NotASolution("stubbed")
        )
        config = _config(command="liouville", liouville={"R": 50.0})
        outcome = _service(tmp_path, threads=3).run(config)
        assert classify.call_args.kwargs["threads"] == 3
        assert outcome.passed is False
        summary = _summary(outcome)
        assert summary["result"] == {"kind": "NotASolution", "reason": "stubbed"}
