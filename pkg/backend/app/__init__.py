import logging

from flask import Flask, jsonify
from werkzeug.exceptions import HTTPException

from config import Config

logger = logging.getLogger(__name__)


def create_app(config_class=Config):
    app = Flask(__name__)
    app.config.from_object(config_class)

    # Register blueprints
    from app.api import bp as api_bp
    app.register_blueprint(api_bp, url_prefix='/api')

    # Unknown routes and oversized config uploads answer in the same JSON shape as the endpoints
    @app.errorhandler(HTTPException)
    def http_error(e):
        return jsonify({'success': False, 'error': e.description}), e.code

    logger.info(f"App created: out_dir={app.config['OUT_DIR']} data_dir={app.config['DATA_DIR']}")
    return app
