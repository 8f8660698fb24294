"""
Configuration loading utilities.
Reads a YAML file, applies dotted key=value overrides and validates the result.
"""
import copy
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import yaml
from pydantic import ValidationError

from settings.schema import PipelineConfig
from utils.errors import ConfigError
from utils.logger import get_logger

logger = get_logger(__name__)

RESOLVED_CONFIG = "resolved_config.yaml"


def parse_override(text: str):
    """Split 'a.b.c=value' into (['a', 'b', 'c'], parsed YAML value)."""
    if "=" not in text:
        raise ConfigError(f"Override must look like key=value, got '{text}'")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"Override has an empty key: '{text}'")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"Override '{text}' has an unparsable value: {e}") from e
    return path, value


def _known_paths(model_cls, prefix=()) -> set:
    """Every dotted path the schema accepts, for override validation."""
    paths = set()
    for name, info in model_cls.model_fields.items():
        here = prefix + (name,)
        paths.add(here)
        annotation = info.annotation
        if isinstance(annotation, type) and hasattr(annotation, "model_fields"):
            paths |= _known_paths(annotation, here)
    return paths


class ConfigLoader:
    """Loads and validates the pipeline configuration."""

    def __init__(self, config_path: Optional[Union[str, Path]] = None,
                 overrides: Sequence[str] = ()):
        """
        Initialize the loader.

        Args:
            config_path: YAML file; None starts from the built-in defaults
            overrides: Dotted key=value strings applied on top of the file

        Raises:
            ConfigError: On unreadable files, unknown keys or invalid values
        """
        self.config_path = None if config_path is None else Path(config_path)
        self.raw = self._load_config()
        for override in overrides:
            self._apply_override(override)
        self.config = self._validate()

    def _load_config(self) -> Dict[str, Any]:
        if self.config_path is None:
            return {}
        try:
            with open(self.config_path, 'r', encoding='utf-8') as file:
                config = yaml.safe_load(file) or {}
        except OSError as e:
            logger.error(f"Failed to load config from {self.config_path}: {e}")
            raise ConfigError(f"Cannot read config file {self.config_path}: {e}") from e
        except yaml.YAMLError as e:
            logger.error(f"Failed to parse config {self.config_path}: {e}")
            raise ConfigError(f"Config file {self.config_path} is not valid YAML: {e}") from e
        if not isinstance(config, dict):
            raise ConfigError(f"Config file {self.config_path} must hold a mapping at top level")
        logger.info(f"Loaded configuration from {self.config_path}")
        return config

    def _apply_override(self, text: str) -> None:
        path, value = parse_override(text)
        if tuple(path) not in _known_paths(PipelineConfig) and \
                not (len(path) > 2 and tuple(path[:2]) == ("scene", "object")):
            raise ConfigError(f"Unknown config key '{'.'.join(path)}'")
        if len(path) > 2 and tuple(path[:2]) == ("scene", "object"):
            scene = self.raw.setdefault("scene", {})
            if scene.get("object") is None:
                scene["object"] = copy.deepcopy(PipelineConfig().scene.object)
        node = self.raw
        for key in path[:-1]:
            child = node.get(key)
            if child is None:
                child = node[key] = {}
            if not isinstance(child, dict):
                raise ConfigError(f"Cannot override inside non-mapping key '{key}'")
            node = child
        node[path[-1]] = value
        logger.debug(f"Override {'.'.join(path)} = {value!r}")

    def _validate(self) -> PipelineConfig:
        try:
            return PipelineConfig.model_validate(self.raw)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
            logger.error(f"Invalid configuration: {problems}")
            raise ConfigError(f"Invalid configuration: {problems}") from e

    def as_dict(self) -> Dict[str, Any]:
        """The fully resolved configuration, defaults included, as plain data."""
        return copy.deepcopy(self.config.model_dump(mode="json"))

    def snapshot(self, directory: Union[str, Path]) -> Path:
        """Write resolved_config.yaml into directory."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / RESOLVED_CONFIG
        with open(path, 'w', encoding='utf-8') as file:
            yaml.safe_dump(self.as_dict(), file, sort_keys=False)
        return path
