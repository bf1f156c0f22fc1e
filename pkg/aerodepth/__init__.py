import importlib
import logging
import os

from .errors import ConfigError

__version__ = '1.0.0'


class Settings(dict):
    """Dictionary of upper-case settings loaded from a config class"""

    def from_object(self, obj):
        if isinstance(obj, str):
            module_name, _, attr = obj.rpartition('.')
            try:
                obj = getattr(importlib.import_module(module_name), attr)
            except (ImportError, AttributeError, ValueError) as e:
                raise ConfigError(f"Cannot load settings '{obj}': {e}")
        for key in dir(obj):
            if key.isupper():
                self[key] = getattr(obj, key)


class PipelineApp:
    """Process-wide container for settings, the root logger and initialized services"""

    def __init__(self, name='aerodepth'):
        self.name = name
        self.config = Settings()
        self.logger = logging.getLogger(name)
        self.extensions = {}

    @property
    def debug(self):
        return bool(self.config.get('DEBUG'))

    @property
    def output_root(self):
        return self.config.get('OUTPUT_ROOT') or os.path.join(os.getcwd(), 'runs')


def create_app(config_object="config.Config", **overrides):
    app = PipelineApp()
    app.config.from_object(config_object)
    app.config.update(overrides)

    # Setup logging
    try:
        from logging_config import setup_logging
        setup_logging(app)
    except ImportError:
        pass

    # Initialize services
    from .services.render_service import render_service
    from .services.dataset_service import dataset_service
    from .services.training_service import training_service
    from .services.checkpoint_service import checkpoint_service
    from .services.report_service import report_service
    from .services.manifest_service import manifest_service
    render_service.init_app(app)
    dataset_service.init_app(app)
    training_service.init_app(app)
    checkpoint_service.init_app(app)
    report_service.init_app(app)
    manifest_service.init_app(app)

    if app.config.get('DETERMINISTIC', True):
        import torch
        torch.use_deterministic_algorithms(True, warn_only=True)

    app.logger.debug(f"Pipeline initialized with {config_object}")
    return app
