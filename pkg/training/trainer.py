"""
Optimization of the neural fields against a scene dataset.

All camera rays of masked pixels are traced once up front; the trees depend only on
the box, so each step just gathers a random batch of them and re-renders the
internal segments with the current fields.
"""
import math
import time
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

import imageio.v2 as imageio
import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from field.neural_field import FieldBundle, FieldConfig, build_fields
from render.hybrid_renderer import (
    RayForest, TraceConfig, gamma_correct, render_forest, render_view, to_8bit, trace_pixels,
)
from render.volume_renderer import VolumeRenderer
from storage.checkpoint_store import Checkpoint, checkpoint_name, save_checkpoint
from storage.dataset_store import SceneDataset
from storage.metrics_log import MetricsLog
from training.losses import (
    LossTerms, LossWeights, eikonal_loss, photometric_loss, sparsity_loss, total_loss,
)
from utils.errors import DatasetError, NonFiniteError, TrainingDivergedError
from utils.logger import get_logger

logger = get_logger(__name__)

DTYPES = {"float64": torch.float64, "float32": torch.float32}


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    rays_per_batch: int = Field(default=1024, ge=1)
    n_coarse: int = Field(default=64, ge=2)
    n_fine: int = Field(default=64, ge=0)
    iterations: int = Field(default=20000, ge=0)
    learning_rate: float = Field(default=5e-4, ge=0.0)
    warmup_fraction: float = Field(default=0.02, ge=0.0, lt=1.0)
    seed: int = 0
    sparsity_loss_enabled: bool = True
    loss_weights: LossWeights = LossWeights()
    precision: Literal["float64", "float32"] = "float64"
    jitter: bool = True
    checkpoint_every: int = Field(default=5000, ge=0)
    validate_every: int = Field(default=5000, ge=0)
    validation_view: int = Field(default=0, ge=0)
    log_every: int = Field(default=100, ge=0)
    detect_anomaly: bool = False

    @property
    def dtype(self) -> torch.dtype:
        return DTYPES[self.precision]


class WarmupCosine:
    """Learning-rate factor: linear warmup then cosine decay to 0."""

    def __init__(self, total_steps: int, warmup_fraction: float):
        self.total_steps = max(int(total_steps), 1)
        self.warmup_steps = int(math.ceil(warmup_fraction * self.total_steps))

    def __call__(self, step: int) -> float:
        if step < self.warmup_steps:
            return (step + 1) / self.warmup_steps
        span = max(self.total_steps - self.warmup_steps, 1)
        progress = min((step - self.warmup_steps) / span, 1.0)
        return 0.5 * (1.0 + math.cos(math.pi * progress))


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    mse = float(np.mean((np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64)) ** 2))
    return float("inf") if mse == 0.0 else -10.0 * math.log10(mse)


class Trainer:
    """
    Owns the fields, the optimizer and the pre-traced rays of one dataset.

    Args:
        train: Optimization settings
        trace: Ray tracing settings
        field_cfg: Network settings
        dataset: Supervision images, masks and poses
        output_dir: Where checkpoints, metrics and validation renders go
        resolved_config: Full configuration stored inside every checkpoint
        fields: Existing fields to continue from (built fresh when None)
    """

    def __init__(self, train: TrainConfig, trace: TraceConfig, field_cfg: FieldConfig,
                 dataset: SceneDataset, output_dir: Union[str, Path],
                 resolved_config: Optional[Dict[str, Any]] = None,
                 fields: Optional[FieldBundle] = None):
        self.train = train
        self.trace = trace
        self.dataset = dataset
        self.output_dir = Path(output_dir)
        self.resolved_config = resolved_config or {}
        self.dtype = train.dtype

        self.fields = fields if fields is not None else build_fields(field_cfg, train.seed, self.dtype)
        self.fields = self.fields.to(self.dtype)
        self.optimizer = torch.optim.Adam(self.fields.parameters(), lr=train.learning_rate)
        self.scheduler = torch.optim.lr_scheduler.LambdaLR(
            self.optimizer, WarmupCosine(train.iterations, train.warmup_fraction))
        self.iteration = 0

        self.forest, self.targets = self._trace_dataset()
        if self.forest.num_pixels == 0:
            raise DatasetError("Dataset has no masked pixels to supervise")

    def _trace_dataset(self):
        views, rows, cols = self.dataset.masked_pixels()
        forests = []
        height, width = self.dataset.masks.shape[1:]
        for view in tqdm(np.unique(views), desc="trace", unit="view"):
            select = views == view
            forests.append(trace_pixels(self.dataset.cameras[view], rows[select], cols[select],
                                        self.dataset.box, self.trace,
                                        pixel_offset=int(view) * height * width))
        forest = RayForest.concatenate(forests) if forests else \
            RayForest.pack([], self.trace.effective_depth)
        targets = self.dataset.images[views, rows, cols].astype(np.float64) / 255.0
        logger.info(f"Traced {forest.num_pixels} masked rays, "
                    f"{int(forest.internal.sum())} internal segments")
        return forest, targets

    @property
    def checkpoint_dir(self) -> Path:
        return self.output_dir / "checkpoints"

    def renderer(self, jitter: Optional[bool] = None) -> VolumeRenderer:
        return VolumeRenderer(self.fields, n_coarse=self.train.n_coarse, n_fine=self.train.n_fine,
                              jitter=self.train.jitter if jitter is None else jitter,
                              seed=self.train.seed)

    def sample_batch(self, iteration: int) -> np.ndarray:
        """Pixel rows of the batch used at iteration; depends only on (seed, iteration)."""
        rng = np.random.default_rng([self.train.seed, iteration])
        return rng.integers(0, self.forest.num_pixels, size=self.train.rays_per_batch)

    def compute_losses(self, index: np.ndarray, iteration: int) -> LossTerms:
        forest = self.forest.take(index)
        result = render_forest(forest, self.renderer(), self.trace, dtype=self.dtype, salt=iteration)
        pred = gamma_correct(result.linear)
        gt = torch.as_tensor(self.targets[index], dtype=self.dtype)

        l_color = photometric_loss(pred, gt)
        l_trans = sparsity_loss(result.seg_trans, torch.as_tensor(forest.internal))
        l_reg = eikonal_loss(result.gradients)
        total = total_loss(l_color, l_trans, l_reg, self.train.loss_weights,
                           sparsity_enabled=self.train.sparsity_loss_enabled)
        return LossTerms(color=l_color, trans=l_trans, reg=l_reg, total=total)

    def train_step(self) -> Dict[str, float]:
        """One optimizer update; returns the metrics row of this iteration."""
        start = time.perf_counter()
        iteration = self.iteration
        with torch.autograd.set_detect_anomaly(self.train.detect_anomaly):
            try:
                terms = self.compute_losses(self.sample_batch(iteration), iteration)
            except NonFiniteError as e:
                self._diverged(iteration, str(e))

            self.optimizer.zero_grad(set_to_none=True)
            terms.total.backward()
        for name, p in self.fields.named_parameters():
            if p.grad is not None and not bool(torch.isfinite(p.grad).all()):
                self._diverged(iteration, f"Non-finite gradient for parameter '{name}'")

        self.optimizer.step()
        self.scheduler.step()
        self.iteration += 1

        s = float(self.fields.sharpness().detach())
        assert s >= self.fields.cfg.sdf.sharpness_floor, f"sharpness fell below its floor: {s}"
        return {
            "iteration": self.iteration,
            **terms.as_floats(),
            "s": s,
            "wall_time_ms": (time.perf_counter() - start) * 1000.0,
        }

    def _diverged(self, iteration: int, reason: str):
        path = save_checkpoint(self.checkpoint_dir / f"diverged_{iteration:06d}.pt", self.fields,
                               iteration, self.optimizer, self.scheduler, self.resolved_config)
        logger.error(f"Training diverged at iteration {iteration}: {reason}")
        raise TrainingDivergedError(f"Iteration {iteration}: {reason}", checkpoint_path=str(path))

    def save(self) -> Path:
        return save_checkpoint(self.checkpoint_dir / checkpoint_name(self.iteration), self.fields,
                               self.iteration, self.optimizer, self.scheduler, self.resolved_config)

    def restore(self, checkpoint: Checkpoint) -> None:
        """
        Continue from a checkpoint: fields, optimizer, schedule and iteration.

        Raises:
            DatasetError: If the checkpoint was written for another field architecture
        """
        source = checkpoint.path or "checkpoint"
        try:
            self.fields.load_state_dict(checkpoint.fields.state_dict())
            if checkpoint.optimizer_state is not None:
                self.optimizer.load_state_dict(checkpoint.optimizer_state)
            if checkpoint.scheduler_state is not None:
                self.scheduler.load_state_dict(checkpoint.scheduler_state)
        except (KeyError, ValueError, RuntimeError) as e:
            raise DatasetError(f"{source}: does not match the configured field architecture: {e}") from e
        self.iteration = checkpoint.iteration
        logger.info(f"Resumed at iteration {self.iteration}")

    def validate(self) -> float:
        """Render the validation view, write it as PNG, return its PSNR."""
        view = min(self.train.validation_view, self.dataset.num_views - 1)
        camera = self.dataset.cameras[view]
        image = render_view(camera, self.dataset.box, self.renderer(jitter=False), self.trace,
                            dtype=self.dtype)
        value = psnr(image, self.dataset.intensities(view))
        path = self.output_dir / "validation" / f"iter_{self.iteration:06d}.png"
        path.parent.mkdir(parents=True, exist_ok=True)
        imageio.imwrite(path, to_8bit(image))
        logger.info(f"Validation view {view} at iteration {self.iteration}: PSNR {value:.3f} dB")
        return value

    def train_loop(self) -> Path:
        """
        Run the remaining iterations with periodic checkpoints and validation renders.

        Returns:
            Path of the final checkpoint

        Raises:
            DatasetError: On I/O failures, with the iteration they happened at
            TrainingDivergedError: On a non-finite loss or gradient
        """
        metrics = MetricsLog(self.output_dir / "metrics.csv")
        cfg = self.train
        try:
            if self.iteration == 0:
                metrics.truncate_after(0)
                self.save()
            else:
                metrics.truncate_after(self.iteration)

            progress = tqdm(range(self.iteration, cfg.iterations), desc="train", unit="it")
            for _ in progress:
                row = self.train_step()
                metrics.append(row)
                progress.set_postfix(loss=f"{row['total']:.4f}", s=f"{row['s']:.1f}")
                if cfg.log_every and self.iteration % cfg.log_every == 0:
                    logger.info(f"Iteration {self.iteration}: total {row['total']:.6f}, "
                                f"color {row['L_color']:.6f}, trans {row['L_trans']:.6f}, "
                                f"reg {row['L_reg']:.6f}, s {row['s']:.3f}")
                if cfg.checkpoint_every and self.iteration % cfg.checkpoint_every == 0:
                    self.save()
                if cfg.validate_every and self.iteration % cfg.validate_every == 0:
                    self.validate()

            final = self.checkpoint_dir / checkpoint_name(self.iteration)
            return final if final.exists() else self.save()
        except OSError as e:
            if isinstance(e, DatasetError):
                raise
            raise DatasetError(f"I/O failure at iteration {self.iteration}: {e}") from e
