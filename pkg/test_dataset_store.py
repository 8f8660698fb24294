"""
Tests for dataset files, checkpoints and the metrics log.
"""
import json

import imageio.v2 as imageio
import numpy as np
import pytest
import torch

from conftest import tiny_scene_config
from field.neural_field import build_fields
from forge.scene_forge import forge_dataset
from storage.checkpoint_store import checkpoint_name, load_checkpoint, save_checkpoint
from storage.dataset_store import get_dataset_store
from storage.metrics_log import MetricsLog
from utils.errors import DatasetError


@pytest.fixture
def store():
    return get_dataset_store()


@pytest.fixture
def written(store, tiny_dataset, tmp_path):
    return store.write(tiny_dataset, tmp_path / "scene")


def test_round_trip(store, tiny_dataset, written):
    loaded = store.read(written)
    np.testing.assert_array_equal(loaded.images, tiny_dataset.images)
    np.testing.assert_array_equal(loaded.masks, tiny_dataset.masks)
    for a, b in zip(loaded.cameras, tiny_dataset.cameras):
        np.testing.assert_array_equal(a.c2w, b.c2w)
        assert a.intrinsics == b.intrinsics
    assert loaded.box.to_dict() == tiny_dataset.box.to_dict()
    np.testing.assert_array_equal(loaded.ambient, tiny_dataset.ambient)
    assert loaded.with_box and loaded.seed == tiny_dataset.seed
    assert loaded.object_spec == tiny_dataset.object_spec
    assert loaded.generator_config == tiny_dataset.generator_config
    assert loaded.companion is None
    assert loaded.root == written


def test_companion_round_trip(store, trace_config, tmp_path):
    dataset = forge_dataset(tiny_scene_config(render_without_box_companion=True), trace_config)
    loaded = store.read(store.write(dataset, tmp_path / "scene"))
    assert loaded.companion is not None and not loaded.companion.with_box
    np.testing.assert_array_equal(loaded.companion.images, dataset.companion.images)


def test_exists(store, written, tmp_path):
    assert store.exists(written)
    assert not store.exists(tmp_path / "nowhere")


def test_masked_pixels_order(tiny_dataset):
    views, rows, cols = tiny_dataset.masked_pixels()
    assert len(views) == int(tiny_dataset.masks.sum())
    assert np.all(np.diff(views) >= 0)


def test_tampered_image_rejected(store, written):
    path = written / "images" / "view_0000.png"
    image = imageio.imread(path)
    imageio.imwrite(path, 255 - np.asarray(image))
    with pytest.raises(DatasetError, match="checksum"):
        store.read(written)


def test_missing_file_rejected(store, written):
    (written / "masks" / "view_0001.png").unlink()
    with pytest.raises(DatasetError, match="missing"):
        store.read(written)


def test_missing_manifest_rejected(store, tmp_path):
    with pytest.raises(DatasetError, match="manifest missing"):
        store.read(tmp_path)


def test_wrong_format_version_rejected(store, written):
    manifest_path = written / "poses.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["format_version"] = 99
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(DatasetError, match="format version"):
        store.read(written)


def test_garbled_manifest_rejected(store, written):
    (written / "poses.json").write_text("{not json")
    with pytest.raises(DatasetError):
        store.read(written)


def test_checkpoint_round_trip(tiny_field_config, tmp_path):
    fields = build_fields(tiny_field_config, seed=5)
    path = save_checkpoint(tmp_path / checkpoint_name(12), fields, 12, config={"seed": 5})
    assert path.name == "ckpt_000012.pt"
    loaded = load_checkpoint(path)
    assert loaded.iteration == 12
    assert loaded.config == {"seed": 5}
    assert loaded.optimizer_state is None
    for key, value in fields.state_dict().items():
        torch.testing.assert_close(loaded.fields.state_dict()[key], value, rtol=0, atol=0)


def test_checkpoint_keeps_precision(tiny_field_config, tmp_path):
    fields = build_fields(tiny_field_config, seed=0, dtype=torch.float32)
    loaded = load_checkpoint(save_checkpoint(tmp_path / "f32.pt", fields, 0))
    assert loaded.fields.dtype == torch.float32


def test_checkpoint_errors(tmp_path):
    with pytest.raises(DatasetError, match="not found"):
        load_checkpoint(tmp_path / "absent.pt")
    (tmp_path / "garbage.pt").write_bytes(b"not a checkpoint")
    with pytest.raises(DatasetError, match="Unreadable"):
        load_checkpoint(tmp_path / "garbage.pt")
    torch.save({"format_version": 99}, tmp_path / "future.pt")
    with pytest.raises(DatasetError, match="version"):
        load_checkpoint(tmp_path / "future.pt")


def row(iteration):
    return {"iteration": iteration, "L_color": 0.5, "L_trans": 0.1, "L_reg": 0.2, "total": 0.53,
            "s": 20.0, "wall_time_ms": 3.0}


def test_metrics_append_and_truncate(tmp_path):
    log = MetricsLog(tmp_path / "run" / "metrics.csv")
    for i in range(1, 6):
        log.append(row(i))
    assert [r["iteration"] for r in log.rows()] == [1, 2, 3, 4, 5]
    log.truncate_after(3)
    assert [r["iteration"] for r in log.rows()] == [1, 2, 3]
    # reopening keeps existing rows
    assert len(MetricsLog(tmp_path / "run" / "metrics.csv").rows()) == 3
