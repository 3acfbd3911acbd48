import pytest

from app.config import ExperimentConfig, list_recipes, load_config, load_recipe, parse_attack_name, parse_config
from app.errors import ConfigError

BASIC = """
[experiment]
name = basic
methods = baseline, iat_manifold   # two methods
seeds = 0, 1
stages = train, eval, transfer

[train_attack]
epsilon = 2/255
iterations = 3

[mix]
alpha = 2.0
layers = 1, 2
"""


class TestParse:
    def test_sections_and_types(self):
        config = parse_config(BASIC)
        assert config.experiment.methods == ("baseline", "iat_manifold")
        assert config.experiment.seeds == (0, 1)
        assert config.train_attack.epsilon == pytest.approx(2 / 255)
        assert config.mix.layers == (1, 2)
        assert config.train.epochs == 40

    def test_train_config_per_method(self):
        config = parse_config(BASIC)
        baseline = config.train_config("baseline", 1)
        assert baseline.attack is None and baseline.mix is None and baseline.seed == 1
        iat = config.train_config("iat_manifold", 0)
        assert iat.attack.iterations == 3
        assert iat.mix.mode == "manifold"
        assert iat.mix.alpha == 2.0
        assert iat.mix.eligible_layers == frozenset({1, 2})

    def test_eval_attacks(self):
        attacks = ExperimentConfig().eval_attacks()
        assert attacks[0] is None
        assert [a.describe() for a in attacks[1:]] == ["fgsm", "pgd7", "pgd20"]
        assert ExperimentConfig().eval.step_size == 0.025
        # seven default steps reach the default radius
        assert all(7 * a.step_size >= a.epsilon for a in attacks[2:])
        assert not any(a.random_start for a in attacks[2:])

    def test_eval_random_start(self):
        config = parse_config("[eval]\nrandom_start = true\n")
        assert all(a.random_start for a in config.eval_attacks()[2:])
        assert config.transfer_attack().random_start
        assert config.sweep_base("epsilon").random_start and config.sweep_base("iterations").random_start

    @pytest.mark.parametrize("text", [
        "[experiment]\nmethodz = baseline\n",
        "[experimnet]\nname = x\n",
        "[experiment]\nmethods = dropout\n",
        "[experiment]\nstages = eval\n",
        "[train]\nepochs = many\n",
        "[train]\nadv_only = maybe\n",
        "[eval]\nattacks = clean, pgd0\n",
        "[eval]\nstep_size = 0.01\n",
        "[eval]\nattacks = clean, pgd2\n",
        "[data]\nsource = cifar\n",
        "[model]\nhidden = 0\n",
        "not a config",
    ])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_theory_only_needs_no_training(self):
        assert parse_config("[experiment]\nstages = theory\n").has_stage("theory")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.ini")


class TestHash:
    def test_formatting_does_not_change_the_hash(self):
        a = parse_config("[train]\nlr = 0.1\nepochs = 5\n")
        b = parse_config("# comment\n[train]\nepochs=5\nlr = 1/10\n")
        assert a.config_hash == b.config_hash

    def test_values_change_the_hash(self):
        assert parse_config("[train]\nepochs = 5\n").config_hash != parse_config("[train]\nepochs = 6\n").config_hash

    def test_canonical_text_round_trips(self):
        config = parse_config(BASIC)
        assert parse_config(config.canonical_text()) == config

    def test_with_seeds(self):
        config = parse_config(BASIC).with_seeds((7,))
        assert config.experiment.seeds == (7,)


class TestRecipes:
    def test_builtins_load(self):
        names = list_recipes()
        assert {"smoke", "theory", "tradeoff-desk"} <= set(names)
        for name in names:
            load_recipe(name)

    @pytest.mark.parametrize("alias,name", [("table1-desk", "compression-desk"), ("table2-desk", "tradeoff-desk")])
    def test_table_aliases(self, alias, name):
        assert load_recipe(alias) == load_recipe(name)

    def test_unknown_recipe(self):
        with pytest.raises(ConfigError):
            load_recipe("nope")


class TestAttackNames:
    @pytest.mark.parametrize("name,expected", [("clean", None), ("fgsm", ("fgsm", 1)), ("pgd20", ("pgd", 20))])
    def test_valid(self, name, expected):
        assert parse_attack_name(name) == expected

    @pytest.mark.parametrize("name", ["pgd", "pgdx", "bim10"])
    def test_invalid(self, name):
        with pytest.raises(ConfigError):
            parse_attack_name(name)
