import os
from dotenv import load_dotenv
from pathlib import Path
import logging

basedir = Path(os.path.abspath(os.path.dirname(__file__)))

# Load environment variables from .env file when one exists
env_path = basedir / '.env'
load_dotenv(env_path)

logging.basicConfig(
    level=os.environ.get('IAT_LOG_LEVEL', 'INFO').upper(),
    format='%(asctime)s %(levelname)s %(name)s: %(message)s',
)
logger = logging.getLogger(__name__)

if env_path.exists():
    logger.info(f"✓ Loaded .env file from {env_path}")
else:
    logger.debug(f"No .env file at {env_path}; using the process environment")


class Config:
    SECRET_KEY = os.environ.get('SECRET_KEY') or 'dev-key-please-change-in-production'
    DATA_DIR = os.environ.get('IAT_DATA_DIR') or str(basedir / 'data')
    OUT_DIR = os.environ.get('IAT_OUT_DIR') or str(basedir / 'runs')
    LOG_LEVEL = (os.environ.get('IAT_LOG_LEVEL') or 'INFO').upper()
    SEED = os.environ.get('IAT_SEED', '0')
    JOBS = os.environ.get('IAT_JOBS', '1')
    HOST = os.environ.get('IAT_HOST', '127.0.0.1')
    PORT = os.environ.get('IAT_PORT', '5000')
    MAX_CONTENT_LENGTH = 1024 * 1024  # config uploads only

    @classmethod
    def validate(cls):
        """Validate that the configuration is usable."""
        from app.services.data import mnist_available

        errors = []
        if cls.LOG_LEVEL not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            errors.append(f"IAT_LOG_LEVEL must be a logging level name, got {cls.LOG_LEVEL!r}")
        try:
            int(cls.SEED)
        except ValueError:
            errors.append(f"IAT_SEED must be an integer, got {cls.SEED!r}")
        try:
            if int(cls.JOBS) < 1:
                errors.append(f"IAT_JOBS must be >= 1, got {cls.JOBS}")
        except ValueError:
            errors.append(f"IAT_JOBS must be an integer, got {cls.JOBS!r}")
        if not cls.PORT.isdigit():
            errors.append(f"IAT_PORT must be a port number, got {cls.PORT!r}")
        if Path(cls.OUT_DIR).exists() and not Path(cls.OUT_DIR).is_dir():
            errors.append(f"IAT_OUT_DIR {cls.OUT_DIR} exists and is not a directory")

        if errors:
            logger.error("Configuration errors:\n  " + "\n  ".join(errors))
            raise ValueError("Configuration validation failed. See error messages above.")

        logger.info("✓ Configuration validated successfully")
        logger.info(f"  - Data dir: {cls.DATA_DIR}")
        logger.info(f"  - MNIST files: {'✓ Found' if mnist_available(cls.DATA_DIR) else '○ Not found (synthetic recipes only)'}")
        logger.info(f"  - Output dir: {cls.OUT_DIR}")

    @classmethod
    def ensure_dirs(cls):
        Path(cls.OUT_DIR).mkdir(parents=True, exist_ok=True)
