import csv
import io
import json

import pytest

from app.cli import EXIT_OK, EXIT_USAGE, main
from config import Config


@pytest.fixture
def trained(tmp_path):
    out = tmp_path / "runs"
    assert main(["train", "--recipe", "smoke", "--out", str(out)]) == EXIT_OK
    return out / "smoke" / "models"


class TestCli:
    def test_recipes(self, capsys):
        assert main(["recipes"]) == EXIT_OK
        assert "smoke" in capsys.readouterr().out.split()

    def test_run(self, tmp_path, capsys):
        assert main(["run", "--recipe", "smoke", "--out", str(tmp_path)]) == EXIT_OK
        assert "smoke: completed" in capsys.readouterr().out
        assert (tmp_path / "smoke" / "manifest.json").is_file()

    def test_train_then_eval(self, trained, capsys):
        capsys.readouterr()
        checkpoints = sorted(str(p) for p in trained.glob("*.ckpt"))
        assert len(checkpoints) == 2
        assert main(["eval", "--recipe", "smoke", *checkpoints]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("model_id,attack_kind")
        # two models, three attack columns each
        assert len(lines) == 1 + 2 * 3

    def test_eval_seed_defaults_to_environment(self, trained, capsys, monkeypatch):
        monkeypatch.setattr(Config, "SEED", "7")
        checkpoint = str(trained / "baseline-s0.ckpt")
        capsys.readouterr()
        assert main(["eval", "--recipe", "smoke", checkpoint]) == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert {r["seed"] for r in rows} == {"7"}

        assert main(["eval", "--recipe", "smoke", "--seed", "3", checkpoint]) == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert {r["seed"] for r in rows} == {"3"}

    def test_iteration_sweep(self, trained, capsys):
        capsys.readouterr()
        checkpoint = str(trained / "baseline-s0.ckpt")
        assert main(["sweep", "--recipe", "smoke", checkpoint, "--axis", "iterations", "--values", "1,2"]) == EXIT_OK
        assert len(capsys.readouterr().out.strip().splitlines()) == 3

    def test_analyze(self, trained, capsys):
        capsys.readouterr()
        assert main(["analyze", "--recipe", "smoke", str(trained / "baseline-s0.ckpt"), "--layer", "1"]) == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert out["layer"] == 1
        assert len(out["norms"]) == 3

    def test_verify_theory_to_file(self, tmp_path):
        target = tmp_path / "theory.json"
        code = main(["verify-theory", "--mc-samples", "800", "--scales", "1,0.5", "--prop1-instances", "3",
                     "--out", str(target)])
        assert code in (0, 1)
        records = json.loads(target.read_text())["records"]
        assert {r["check"] for r in records} >= {"lemma1_decomposition", "theorem5_terms", "adversarial_gap"}

    def test_conflicting_sources(self, tmp_path):
        assert main(["run", "--recipe", "smoke", "--config", str(tmp_path / "x.ini")]) == EXIT_USAGE

    def test_unknown_recipe(self, tmp_path):
        assert main(["run", "--recipe", "nope", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            main([])
