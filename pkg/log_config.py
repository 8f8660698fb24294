"""
Logging configuration applied by main.py before any command runs.
"""

LOGGING_CONFIG = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "app": {
            "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            "datefmt": "%Y-%m-%d %H:%M:%S",
        },
    },
    "handlers": {
        "app": {
            "formatter": "app",
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stdout",
        },
    },
    "loggers": {
        "scene": {"handlers": ["app"], "level": "INFO", "propagate": False},
        "render": {"handlers": ["app"], "level": "INFO", "propagate": False},
        "field": {"handlers": ["app"], "level": "INFO", "propagate": False},
        "training": {"handlers": ["app"], "level": "INFO", "propagate": False},
        "forge": {"handlers": ["app"], "level": "INFO", "propagate": False},
        "storage": {"handlers": ["app"], "level": "INFO", "propagate": False},
        "meshing": {"handlers": ["app"], "level": "INFO", "propagate": False},
        "commands": {"handlers": ["app"], "level": "INFO", "propagate": False},
        "settings": {"handlers": ["app"], "level": "INFO", "propagate": False},
        "utils": {"handlers": ["app"], "level": "INFO", "propagate": False},
        "__main__": {"handlers": ["app"], "level": "INFO", "propagate": False},
    },
    "root": {
        "level": "WARNING",
        "handlers": ["app"],
    }
}
