"""Command-line entry point: iat-lab <subcommand> [options]."""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from config import Config
from app.config import ExperimentConfig, list_recipes, load_config, load_recipe
from app.errors import LabError

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def _common(parser: argparse.ArgumentParser):
    parser.add_argument('--config', type=Path, help='experiment config file')
    parser.add_argument('--recipe', help='built-in recipe name (see `recipes`)')
    parser.add_argument('--seed', type=int,
                        help='override the seed list with a single seed; for checkpoint commands, the attack seed (default IAT_SEED)')
    parser.add_argument('--out', type=Path, help='output directory (default IAT_OUT_DIR)')
    parser.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING or ERROR')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='iat-lab', description='Interpolated adversarial training lab')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='train (method, seed) cells and save checkpoints')
    _common(p)
    p.add_argument('--method', action='append', help='restrict to this method (repeatable)')

    p = sub.add_parser('eval', help='white-box battery on saved checkpoints')
    _common(p)
    p.add_argument('checkpoints', nargs='+', type=Path)

    p = sub.add_parser('transfer', help='transfer matrix between saved checkpoints')
    _common(p)
    p.add_argument('checkpoints', nargs='+', type=Path)

    p = sub.add_parser('sweep', help='white-box error along epsilon or iterations')
    _common(p)
    p.add_argument('checkpoint', type=Path)
    p.add_argument('--axis', choices=('epsilon', 'iterations'), default='epsilon')
    p.add_argument('--values', required=True, help='comma-separated ascending values')

    p = sub.add_parser('analyze', help='spectra, weight norms and random-label probe of a checkpoint')
    _common(p)
    p.add_argument('checkpoint', type=Path)
    p.add_argument('--layer', type=int, help='boundary to analyze (default from config)')

    p = sub.add_parser('verify-theory', help='numerical checks of the regularization expansion')
    _common(p)
    p.add_argument('--mc-samples', type=int)
    p.add_argument('--scales', help='comma-separated decreasing scales in (0, 1]')
    p.add_argument('--prop1-instances', type=int)

    p = sub.add_parser('run', help='run a full recipe or config')
    _common(p)
    p.add_argument('--jobs', type=int, help='parallel training cells (default IAT_JOBS)')

    sub.add_parser('recipes', help='list built-in recipes')
    return parser


def _experiment(args: argparse.Namespace, default_recipe: str = 'smoke') -> ExperimentConfig:
    if args.config and args.recipe:
        raise LabError('use either --config or --recipe, not both')
    if args.config:
        config = load_config(args.config)
    else:
        config = load_recipe(args.recipe or default_recipe)
    if args.seed is not None:
        config = config.with_seeds((args.seed,))
    return config


def _seed(args: argparse.Namespace) -> int:
    return int(Config.SEED) if args.seed is None else args.seed


def _out(args: argparse.Namespace) -> Path:
    return args.out or Path(Config.OUT_DIR)


def _print_rows(columns: Sequence[str], rows: List[dict]):
    print(",".join(columns))
    for row in rows:
        print(",".join("" if row.get(c) is None else str(row.get(c)) for c in columns))


def cmd_train(args: argparse.Namespace) -> int:
    from app.agent import run_experiment

    config = _experiment(args)
    methods = tuple(args.method) if args.method else config.experiment.methods
    config = replace(config, experiment=replace(config.experiment, methods=methods, stages=('train',)))
    result = run_experiment(config, _out(args), Config.DATA_DIR, int(Config.JOBS))
    print(f"{result.status}: {result.manifest['files']}")
    return result.exit_code


def _checkpoints(paths: Sequence[Path]):
    from app.services.store import load_checkpoint

    return {path.stem: load_checkpoint(path) for path in paths}


def cmd_eval(args: argparse.Namespace) -> int:
    from app.agent import load_dataset
    from app.services.evaluation import eval_battery, eval_rng
    from app.services.store import EVAL_COLUMNS, eval_rows

    config = _experiment(args)
    seed = _seed(args)
    test = load_dataset(config, Config.DATA_DIR).test
    models = _checkpoints(args.checkpoints)
    reports = [eval_battery(m, mid, test, config.eval_attacks(), eval_rng(seed)) for mid, m in models.items()]
    _print_rows(EVAL_COLUMNS, eval_rows(reports, dict.fromkeys(models, seed), config.config_hash))
    return EXIT_OK


def cmd_transfer(args: argparse.Namespace) -> int:
    from app.agent import load_dataset
    from app.services.evaluation import eval_rng, transfer_matrix

    config = _experiment(args)
    test = load_dataset(config, Config.DATA_DIR).test
    matrix = transfer_matrix(_checkpoints(args.checkpoints), test, config.transfer_attack(), eval_rng(_seed(args)))
    print("target\\source," + ",".join(matrix.model_ids))
    for target, row in zip(matrix.model_ids, matrix.grid):
        print(target + "," + ",".join(f"{v:.2f}" for v in row))
    violations = matrix.violations()
    for d in violations:
        logger.warning(d.message)
    return EXIT_FAILED if violations else EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    from app.agent import load_dataset
    from app.services.evaluation import eval_rng, monotone_violations, sweep
    from app.services.store import EVAL_COLUMNS, eval_rows, load_checkpoint

    config = _experiment(args)
    test = load_dataset(config, Config.DATA_DIR).test
    model = load_checkpoint(args.checkpoint)
    cast = float if args.axis == 'epsilon' else int
    values = [cast(v) for v in args.values.split(',') if v.strip()]
    seed = _seed(args)
    report = sweep(model, args.checkpoint.stem, test, args.axis, values, config.sweep_base(args.axis), eval_rng(seed))
    _print_rows(EVAL_COLUMNS, eval_rows([report], {report.model_id: seed}, config.config_hash))
    violations = monotone_violations(report) if args.axis == 'epsilon' else []
    return EXIT_FAILED if violations else EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    from app.agent import load_dataset
    from app.services.analysis import ProbeConfig, collect_representations, probe_model, spectrum, weight_norms
    from app.services.store import load_checkpoint

    config = _experiment(args)
    data = load_dataset(config, Config.DATA_DIR)
    model = load_checkpoint(args.checkpoint)
    a = config.analysis
    layer = a.layer if args.layer is None else args.layer
    test = data.test.head(a.examples or None)
    out = {"model": args.checkpoint.stem, "layer": layer}
    if a.spectrum:
        report = spectrum(collect_representations(model, test.x, test.y, layer, data.class_count), args.checkpoint.stem, layer)
        out["soft_rank"] = report.soft_ranks()
    if a.norms:
        out["norms"] = [vars(n) for n in weight_norms(model)]
    if a.probe:
        probe = probe_model(model, data.train.x, layer,
                            ProbeConfig(examples=a.probe_examples, hidden=a.probe_hidden, epochs=a.probe_epochs))
        out["probe_accuracy_pct"] = probe.accuracy_pct
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_verify_theory(args: argparse.Namespace) -> int:
    from app.services.theory import TheoryConfig, verify_theory
    from app.agent.experiment_runner import THEORY_PASS

    config = _experiment(args, default_recipe='theory')
    t = config.theory
    options = dict(seed=t.seed, n=t.n, d=t.d, alpha=t.alpha, beta=t.beta, epsilon=t.epsilon,
                   mc_samples=t.mc_samples, scales=t.scales, prop1_instances=t.prop1_instances)
    if args.seed is not None:
        options['seed'] = args.seed
    if args.mc_samples is not None:
        options['mc_samples'] = args.mc_samples
    if args.scales:
        options['scales'] = tuple(float(s) for s in args.scales.split(','))
    if args.prop1_instances is not None:
        options['prop1_instances'] = args.prop1_instances
    records = verify_theory(TheoryConfig(**options))
    text = json.dumps({"records": records}, indent=2, sort_keys=True, allow_nan=False)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK if all(r["verdict"] in THEORY_PASS for r in records) else EXIT_FAILED


def cmd_run(args: argparse.Namespace) -> int:
    from app.agent import run_experiment

    config = _experiment(args)
    jobs = args.jobs or int(Config.JOBS)
    result = run_experiment(config, _out(args), Config.DATA_DIR, jobs)
    print(f"{config.experiment.name}: {result.status} ({len(result.diagnostics)} diagnostics)")
    return result.exit_code


def cmd_recipes(args: argparse.Namespace) -> int:
    for name in list_recipes():
        print(name)
    return EXIT_OK


COMMANDS = {
    'train': cmd_train,
    'eval': cmd_eval,
    'transfer': cmd_transfer,
    'sweep': cmd_sweep,
    'analyze': cmd_analyze,
    'verify-theory': cmd_verify_theory,
    'run': cmd_run,
    'recipes': cmd_recipes,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = getattr(args, 'log_level', None) or Config.LOG_LEVEL
    logging.getLogger().setLevel(level.upper())
    try:
        return COMMANDS[args.command](args)
    except (LabError, ValueError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
