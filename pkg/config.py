import os
import tempfile
from dotenv import load_dotenv

load_dotenv()

basedir = os.path.abspath(os.path.dirname(__file__))


def _env_flag(name, default='false'):
    return os.environ.get(name, default).lower() == 'true'


class Config:
    DEBUG = _env_flag('AERODEPTH_DEBUG')

    # Output locations
    OUTPUT_ROOT = os.environ.get('AERODEPTH_OUTPUT_ROOT') or os.path.join(basedir, 'runs')
    LOG_DIR = os.environ.get('AERODEPTH_LOG_DIR') or os.path.join(basedir, 'logs')

    # Logging
    LOG_LEVEL = os.environ.get('AERODEPTH_LOG_LEVEL') or 'INFO'
    LOG_TO_STDOUT = os.environ.get('LOG_TO_STDOUT')
    LOG_TO_FILE = _env_flag('AERODEPTH_LOG_TO_FILE', 'true')

    # Compute
    DEVICE = os.environ.get('AERODEPTH_DEVICE') or 'cpu'
    NUM_WORKERS = int(os.environ.get('AERODEPTH_NUM_WORKERS') or 0)
    RENDER_WORKERS = int(os.environ.get('AERODEPTH_RENDER_WORKERS') or 1)
    DETERMINISTIC = _env_flag('AERODEPTH_DETERMINISTIC', 'true')

    # Dataset defaults
    DEFAULT_MAX_DEPTH = float(os.environ.get('AERODEPTH_MAX_DEPTH') or 200.0)
    DEFAULT_FRAME_RATE = 20.0
    DEFAULT_FOV_DEGREES = 90.0
    MEDIAN_WINDOW = 10
    MIN_FRAME_OVERLAP = 0.3

    # Evaluation protocols (meters)
    EVAL_CAPS = {'cap80': 80.0, 'cap200': 200.0}


class TestingConfig(Config):
    DEBUG = False
    LOG_TO_FILE = False
    LOG_DIR = os.path.join(tempfile.gettempdir(), 'aerodepth-test-logs')
    OUTPUT_ROOT = os.path.join(tempfile.gettempdir(), 'aerodepth-test-runs')
    RENDER_WORKERS = 1
