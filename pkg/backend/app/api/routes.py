from flask import jsonify, request, current_app, send_file
from app.api import bp
import logging
from pathlib import Path

from app.errors import ConfigError, PreconditionError

logger = logging.getLogger(__name__)


def _out_dir() -> Path:
    return Path(current_app.config['OUT_DIR'])


def _manifest_or_none(name: str):
    from app.services.store import load_manifest

    run_dir = _out_dir() / name
    # run names are plain directory names
    if Path(name).name != name or not run_dir.is_dir():
        return None, run_dir
    return load_manifest(run_dir), run_dir


@bp.route('/health', methods=['GET'])
def health_check():
    """Health check endpoint."""
    from app.services.store import list_runs

    return jsonify({
        'success': True,
        'status': 'healthy',
        'out_dir': str(_out_dir()),
        'runs': len(list_runs(_out_dir())),
    })


@bp.route('/recipes', methods=['GET'])
def get_recipes():
    """Names of the built-in recipes."""
    from app.config import list_recipes

    return jsonify({'success': True, 'recipes': list_recipes()})


@bp.route('/runs', methods=['GET'])
def get_runs():
    """Manifests of every run under the output directory."""
    from app.services.store import list_runs

    try:
        runs = list_runs(_out_dir())
        return jsonify({'success': True, 'count': len(runs), 'runs': runs})
    except Exception as e:
        logger.error(f'Error listing runs: {str(e)}', exc_info=True)
        return jsonify({'success': False, 'error': str(e)}), 500


@bp.route('/runs/<name>', methods=['GET'])
def get_run(name):
    """One run manifest."""
    manifest, _ = _manifest_or_none(name)
    if manifest is None:
        return jsonify({'success': False, 'error': f'Unknown run {name}'}), 404
    return jsonify({'success': True, 'manifest': manifest})


@bp.route('/runs/<name>/reports/<path:filename>', methods=['GET'])
def get_report(name, filename):
    """A report file listed in the run manifest."""
    manifest, run_dir = _manifest_or_none(name)
    if manifest is None or filename not in manifest.get('files', []):
        return jsonify({'success': False, 'error': f'No report {filename} in run {name}'}), 404
    return send_file(run_dir / filename, as_attachment=False)


@bp.route('/runs', methods=['POST'])
def start_run():
    """Run an experiment from a recipe name or inline config text and return its manifest."""
    from app.config import load_recipe, parse_config
    from app.agent import run_experiment

    data = request.get_json(silent=True)
    if not data or ('recipe' not in data and 'config' not in data):
        return jsonify({'success': False, 'error': 'Provide a recipe name or config text'}), 400

    try:
        config = load_recipe(data['recipe']) if 'recipe' in data else parse_config(data['config'], 'request')
        if 'seed' in data:
            config = config.with_seeds((int(data['seed']),))
    except (ConfigError, ValueError, TypeError) as e:
        return jsonify({'success': False, 'error': str(e)}), 400

    try:
        result = run_experiment(config, _out_dir(), current_app.config['DATA_DIR'])
        return jsonify({
            'success': result.exit_code == 0,
            'status': result.status,
            'manifest': result.manifest,
        })
    except Exception as e:
        logger.error(f'Error running experiment: {str(e)}', exc_info=True)
        return jsonify({'success': False, 'error': str(e)}), 500


@bp.route('/theory', methods=['POST'])
def run_theory():
    """Theory verification records for the given seed, sample budget and scales."""
    from app.services.theory import TheoryConfig, verify_theory

    data = request.get_json(silent=True) or {}
    try:
        options = {}
        if 'seed' in data:
            options['seed'] = int(data['seed'])
        if 'mc_samples' in data:
            options['mc_samples'] = int(data['mc_samples'])
        if 'scales' in data:
            options['scales'] = tuple(float(s) for s in data['scales'])
        if 'prop1_instances' in data:
            options['prop1_instances'] = int(data['prop1_instances'])
        cfg = TheoryConfig(**options)
    except (ValueError, TypeError) as e:
        return jsonify({'success': False, 'error': str(e)}), 400

    try:
        records = verify_theory(cfg)
        return jsonify({'success': True, 'records': records})
    except PreconditionError as e:
        return jsonify({'success': False, 'error': str(e)}), 400
    except Exception as e:
        logger.error(f'Error verifying theory: {str(e)}', exc_info=True)
        return jsonify({'success': False, 'error': str(e)}), 500
