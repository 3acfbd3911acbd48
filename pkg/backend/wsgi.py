import logging
import sys

from app import create_app
from config import Config

logger = logging.getLogger(__name__)

app = create_app()

# Validate configuration on startup
with app.app_context():
    try:
        Config.validate()
        Config.ensure_dirs()
    except ValueError as e:
        logger.error("=" * 80)
        logger.error(f"CONFIGURATION ERROR: {e}")
        logger.error("Fix the IAT_* settings in backend/.env or the environment and restart the server.")
        logger.error("=" * 80)
        sys.exit(1)

if __name__ == '__main__':
    app.run(host=Config.HOST, port=int(Config.PORT), debug=False)
