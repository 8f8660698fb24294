"""
Shared fixtures: a tiny forged scene and small networks that keep tests fast.
"""
import pytest

from field.neural_field import AppearanceConfig, EncodingConfig, FieldConfig, SdfConfig
from forge.scene_forge import CameraConfig, SceneConfig, forge_dataset
from render.hybrid_renderer import TraceConfig
from training.trainer import TrainConfig


def tiny_scene_config(**overrides) -> SceneConfig:
    params = dict(
        camera=CameraConfig(focal=8.0, cx=4.0, cy=4.0, width=8, height=8),
        num_views=2,
        camera_radius=2.0,
        seed=0,
    )
    params.update(overrides)
    return SceneConfig(**params)


@pytest.fixture
def trace_config():
    return TraceConfig()


@pytest.fixture
def tiny_dataset(trace_config):
    return forge_dataset(tiny_scene_config(), trace_config)


@pytest.fixture
def tiny_field_config():
    return FieldConfig(
        encoding=EncodingConfig(num_freqs_position=2, num_freqs_direction=1),
        sdf=SdfConfig(hidden_layers=2, hidden_width=16),
        appearance=AppearanceConfig(hidden_layers=1, hidden_width=16),
    )


@pytest.fixture
def tiny_train_config():
    return TrainConfig(
        rays_per_batch=16,
        n_coarse=8,
        n_fine=4,
        iterations=4,
        seed=3,
        checkpoint_every=2,
        validate_every=4,
        log_every=1,
    )
