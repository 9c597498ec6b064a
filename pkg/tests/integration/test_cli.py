"""Integration tests for the command-line entry point."""

import json

import pytest
import yaml

from app.errors import ConfigError
from app.main import EXIT_ERROR, EXIT_FAIL, EXIT_PASS, load_config, main
from scripts.seed_configs import CONFIGS, seed_configs
from tests.conftest import make_config_payload


def _write(path, payload) -> str:
    path.write_text(json.dumps(payload))
    return str(path)


class TestExitCodes:
    def test_pass(self, tmp_path, capsys):
        config = _write(tmp_path / "run.json", make_config_payload())
        code = main(["--config", config, "--out", str(tmp_path / "out")])
        assert code == EXIT_PASS
        line = capsys.readouterr().out.strip()
        assert line == f"PASS check-solution {tmp_path / 'out' / 'unit-summary.json'}"

    def test_fail(self, tmp_path, capsys):
        field = {"family": "tuned_bubble", "b": 1.0, "x0": [0.0, 0.0, 0.0], "scale": 0.9}
        config = _write(tmp_path / "run.json", make_config_payload(field=field))
        assert main(["--config", config, "--out", str(tmp_path / "out")]) == EXIT_FAIL
        assert capsys.readouterr().out.startswith("FAIL check-solution")

    def test_missing_config(self, tmp_path):
        assert main(["--config", str(tmp_path / "absent.json")]) == EXIT_ERROR

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{"command": ')
        assert main(["--config", str(path)]) == EXIT_ERROR

    def test_unknown_key(self, tmp_path):
        config = _write(tmp_path / "run.json", make_config_payload(colour="blue"))
        assert main(["--config", config, "--out", str(tmp_path / "out")]) == EXIT_ERROR
        assert not (tmp_path / "out").exists()

    def test_bad_threads(self, tmp_path):
        config = _write(tmp_path / "run.json", make_config_payload())
        assert main(["--config", config, "--threads", "0"]) == EXIT_ERROR

    def test_domain_error_exits_two(self, tmp_path):
        payload = make_config_payload(command="sup-convolve", sup_convolve={"eps": 0.1})
        config = _write(tmp_path / "run.json", payload)
        assert main(["--config", config, "--out", str(tmp_path / "out")]) == EXIT_ERROR


class TestLoadConfig:
    def test_yaml(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump(make_config_payload()))
        assert load_config(path).name == "unit"

    def test_yaml_syntax_error_names_position(self, tmp_path):
        path = tmp_path / "run.yml"
        path.write_text("command: [check-solution\n")
        with pytest.raises(ConfigError, match="line"):
            load_config(path)

    def test_validation_error_names_field(self, tmp_path):
        payload = make_config_payload(check_solution={"points": 0})
        path = tmp_path / "run.json"
        _write(path, payload)
        with pytest.raises(ConfigError, match="check_solution.points"):
            load_config(path)

    def test_unknown_custom_operator_is_a_config_error(self, tmp_path):
        operator = {"family": "custom", "n": 3, "name": "missing"}
        config = _write(tmp_path / "run.json", make_config_payload(operator=operator))
        with pytest.raises(ConfigError, match="operator: .*no custom operator registered"):
            load_config(tmp_path / "run.json")
        assert main(["--config", config, "--out", str(tmp_path / "out")]) == EXIT_ERROR
        assert not (tmp_path / "out").exists()

    def test_seeded_configs_validate(self, tmp_path):
        written = seed_configs(tmp_path)
        assert sorted(p.stem for p in written) == sorted(CONFIGS)
        for path in written:
            assert load_config(path).command.value == CONFIGS[path.stem]["command"]


class TestArtifacts:
    def test_output_dir_from_config(self, tmp_path):
        out = tmp_path / "from-config"
        config = _write(tmp_path / "run.json", make_config_payload(output_dir=str(out)))
        assert main(["--config", config]) == EXIT_PASS
        assert (out / "unit-summary.json").exists()
        assert (out / "unit-points.csv").exists()

    def test_plot_flag(self, tmp_path):
        config = _write(tmp_path / "run.json", make_config_payload())
        assert main(["--config", config, "--out", str(tmp_path / "out"), "--plot"]) == EXIT_PASS
        svg = (tmp_path / "out" / "unit-values.svg").read_text()
        assert svg.startswith("<svg ")

    def test_byte_identical_reruns(self, tmp_path):
        config = _write(tmp_path / "run.json", make_config_payload())
        for out in ("a", "b"):
            assert main(["--config", config, "--out", str(tmp_path / out)]) == EXIT_PASS
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        for name in names:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.slow
class TestLiouvilleRuns:
    def test_scaled_bubble_is_not_a_solution(self, tmp_path):
        config = _write(tmp_path / "run.json", CONFIGS["liouville-scaled"])
        assert main(["--config", config, "--out", str(tmp_path / "out")]) == EXIT_FAIL
        summary = json.loads((tmp_path / "out" / "liouville-scaled-summary.json").read_text())
        assert summary["result"]["kind"] == "NotASolution"

    def test_constant_with_shifted_trace(self, tmp_path):
        config = _write(tmp_path / "run.json", CONFIGS["liouville-constant"])
        assert main(["--config", config, "--out", str(tmp_path / "out")]) == EXIT_PASS
        summary = json.loads((tmp_path / "out" / "liouville-constant-summary.json").read_text())
        assert summary["result"]["kind"] == "Constant"
