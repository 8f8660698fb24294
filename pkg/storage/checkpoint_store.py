"""
Versioned training checkpoints written with torch.save.
"""
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import torch

from field.neural_field import FieldBundle, FieldConfig
from utils.errors import DatasetError
from utils.logger import get_logger

logger = get_logger(__name__)

CHECKPOINT_VERSION = 1

_DTYPES = {"float64": torch.float64, "float32": torch.float32}


@dataclass
class Checkpoint:
    """A loaded checkpoint with its fields rebuilt."""
    fields: FieldBundle
    iteration: int
    optimizer_state: Optional[Dict[str, Any]]
    scheduler_state: Optional[Dict[str, Any]]
    config: Dict[str, Any]
    path: Optional[Path] = None


def checkpoint_name(iteration: int) -> str:
    return f"ckpt_{iteration:06d}.pt"


def save_checkpoint(path: Union[str, Path], fields: FieldBundle, iteration: int,
                    optimizer: Optional[torch.optim.Optimizer] = None,
                    scheduler: Optional[Any] = None,
                    config: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write all weights, s, encoding/network config, optimizer state and iteration.

    The file is written next to its destination and renamed into place.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "iteration": int(iteration),
        "precision": "float64" if fields.dtype == torch.float64 else "float32",
        "field_config": fields.cfg.model_dump(mode="json"),
        "fields": fields.state_dict(),
        "optimizer": None if optimizer is None else optimizer.state_dict(),
        "scheduler": None if scheduler is None else scheduler.state_dict(),
        "config": config or {},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)
    logger.info(f"Saved checkpoint at iteration {iteration} to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint and rebuild its FieldBundle.

    Raises:
        DatasetError: If the file is missing, unreadable, of another format version or
            does not match the field architecture it records
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise DatasetError(f"Unreadable checkpoint {path}: {e}") from e
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise DatasetError(f"{path}: unsupported checkpoint version {payload.get('format_version')}")

    try:
        cfg = FieldConfig.model_validate(payload["field_config"])
        fields = FieldBundle(cfg).to(_DTYPES[payload["precision"]])
        fields.load_state_dict(payload["fields"])
    except (KeyError, ValueError, RuntimeError) as e:
        raise DatasetError(f"{path}: checkpoint does not match its field architecture: {e}") from e
    logger.info(f"Loaded checkpoint {path} (iteration {payload['iteration']})")
    return Checkpoint(
        fields=fields,
        iteration=int(payload["iteration"]),
        optimizer_state=payload.get("optimizer"),
        scheduler_state=payload.get("scheduler"),
        config=payload.get("config", {}),
        path=path,
    )
