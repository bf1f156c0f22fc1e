import logging
import logging.handlers
import os


def setup_logging(app):
    """Setup logging configuration for the pipeline"""

    config = app.config
    log_level = logging.DEBUG if config.get('DEBUG') else getattr(
        logging, str(config.get('LOG_LEVEL', 'INFO')).upper(), logging.INFO
    )

    # Create formatter
    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    logger = app.logger
    logger.setLevel(log_level)

    # Handlers are installed once per process
    if getattr(logger, '_aerodepth_configured', False):
        return logger

    if config.get('LOG_TO_FILE', True):
        log_dir = config.get('LOG_DIR') or os.path.join(os.path.dirname(__file__), 'logs')
        os.makedirs(log_dir, exist_ok=True)

        # File handler for general pipeline logs
        file_handler = logging.handlers.RotatingFileHandler(
            os.path.join(log_dir, 'app.log'),
            maxBytes=10*1024*1024,  # 10MB
            backupCount=5
        )
        file_handler.setLevel(log_level)
        file_handler.setFormatter(formatter)

        # File handler for error logs
        error_handler = logging.handlers.RotatingFileHandler(
            os.path.join(log_dir, 'errors.log'),
            maxBytes=10*1024*1024,  # 10MB
            backupCount=5
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(formatter)

        logger.addHandler(file_handler)
        logger.addHandler(error_handler)

        # Dedicated loggers share the error file
        for name in ('training_errors', 'dataset_errors'):
            logging.getLogger(name).addHandler(error_handler)

    # Console handler for development
    if config.get('DEBUG') or config.get('LOG_TO_STDOUT'):
        console_handler = logging.StreamHandler()
        console_handler.setLevel(log_level)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    # Matplotlib and PIL are chatty at DEBUG
    logging.getLogger('matplotlib').setLevel(logging.WARNING)
    logging.getLogger('PIL').setLevel(logging.WARNING)

    logger._aerodepth_configured = True
    return logger


def log_training_error(error_msg):
    """Log training errors (divergence, non-finite values) to a dedicated logger"""
    logger = logging.getLogger('training_errors')
    logger.error(error_msg)


def log_dataset_error(error_msg):
    """Log dataset load failures to a dedicated logger"""
    logger = logging.getLogger('dataset_errors')
    logger.error(error_msg)
