"""
Root configuration model. Section models live next to the code they configure and
are composed here; every level forbids unknown keys.
"""
import os
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from field.neural_field import FieldConfig
from forge.scene_forge import SceneConfig
from render.hybrid_renderer import TraceConfig
from training.trainer import TrainConfig


class MeshConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    resolution: int = Field(default=128, ge=8)
    gt_resolution: int = Field(default=256, ge=8)
    keep_largest_component: bool = True
    eval_seed: int = 0


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    dataset_dir: str = "runs/dataset"
    output_dir: str = "runs/output"
    threads: Optional[int] = Field(default=None, ge=1)
    scene: SceneConfig = SceneConfig()
    trace: TraceConfig = TraceConfig()
    field: FieldConfig = FieldConfig()
    train: TrainConfig = TrainConfig()
    mesh: MeshConfig = MeshConfig()

    @property
    def resolved_threads(self) -> int:
        return self.threads or os.cpu_count() or 1
