"""
Tests for the command-line front end: exit codes and the forge/train/extract/eval chain.
"""
import logging

import pytest

from commands.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, resolve_overrides, run
from commands.command_factory import CommandFactory
from commands.trace_debug_command import parse_triple
from field.neural_field import FieldConfig, build_fields
from storage.checkpoint_store import save_checkpoint
from utils.errors import ConfigError
from utils.logger import set_level

TINY_SCENE = [
    "--set", "scene.camera={focal: 8.0, cx: 4.0, cy: 4.0, width: 8, height: 8}",
    "--set", "scene.num_views=2",
    "--set", "scene.camera_radius=2.0",
]

TINY_TRAIN = [
    "--set", "train.iterations=2",
    "--set", "train.rays_per_batch=16",
    "--set", "train.n_coarse=8",
    "--set", "train.n_fine=4",
    "--set", "train.checkpoint_every=0",
    "--set", "train.validate_every=0",
    "--set", "field.sdf={hidden_layers: 2, hidden_width: 16, init_radius: 0.3}",
    "--set", "field.appearance={hidden_layers: 1, hidden_width: 16}",
    "--set", "mesh.resolution=16",
    "--set", "mesh.gt_resolution=16",
]


def test_every_command_is_registered():
    assert set(CommandFactory.get_available_command_types()) == {
        "forge", "train", "render", "extract", "eval", "trace-debug"}
    with pytest.raises(ConfigError):
        CommandFactory.get_command_class("serve")


def test_output_dir_targets_dataset_for_forge():
    parser = build_parser()
    forge = parser.parse_args(["forge", "--output-dir", "data/x"])
    train = parser.parse_args(["train", "--output-dir", "runs/y", "--set", "train.seed=1"])
    assert resolve_overrides(forge) == ['dataset_dir="data/x"']
    assert resolve_overrides(train) == ["train.seed=1", 'output_dir="runs/y"']


@pytest.mark.parametrize("argv", [
    ["bogus"],
    [],
    ["train", "--set", "train.nope=1"],
    ["train", "--set", "train.iterations"],
    ["forge", "--config", "does/not/exist.yaml"],
    ["render"],
])
def test_configuration_problems_exit_2(argv):
    assert run(argv) == EXIT_CONFIG


def test_missing_dataset_exits_3(tmp_path):
    argv = ["train", "--output-dir", str(tmp_path / "out"),
            "--set", f'dataset_dir="{tmp_path / "missing"}"']
    assert run(argv) == EXIT_RUNTIME


def test_missing_checkpoint_exits_3(tmp_path):
    assert run(["extract", "--checkpoint", str(tmp_path / "absent.pt")]) == EXIT_RUNTIME


def test_parse_triple():
    assert parse_triple("5, 0,0").tolist() == [5.0, 0.0, 0.0]
    for text in ("1,2", "a,b,c"):
        with pytest.raises(ConfigError):
            parse_triple(text)


def test_trace_debug_prints_tree(capsys, tmp_path):
    argv = ["trace-debug", "--pixel", "2", "2", "--output-dir", str(tmp_path),
            "--set", "scene.camera={focal: 10.0, cx: 2.5, cy: 2.5, width: 5, height: 5}"]
    assert run(argv) == EXIT_OK
    out = capsys.readouterr().out
    assert "pixel (2, 2), 5 segments" in out
    assert "root linear:" in out
    intensity = [float(v) for v in out.split("intensity:")[1].split()]
    assert round(255 * intensity[0]) == 185
    assert (tmp_path / "resolved_config.yaml").is_file()


def test_forge_writes_dataset_and_snapshot(tmp_path):
    data = tmp_path / "data"
    assert run(["forge", "--output-dir", str(data)] + TINY_SCENE) == EXIT_OK
    assert (data / "poses.json").is_file()
    assert (data / "resolved_config.yaml").is_file()
    assert len(list((data / "images").glob("*.png"))) == 2


@pytest.mark.slow
def test_forge_train_extract_eval_chain(tmp_path):
    data, out = tmp_path / "data", tmp_path / "out"
    common = TINY_SCENE + TINY_TRAIN + ["--set", f'dataset_dir="{data}"']
    assert run(["forge", "--output-dir", str(data)] + TINY_SCENE) == EXIT_OK
    assert run(["train", "--output-dir", str(out)] + common) == EXIT_OK
    checkpoint = out / "checkpoints" / "ckpt_000002.pt"
    assert checkpoint.is_file()
    assert (out / "metrics.csv").is_file()

    assert run(["render", "--output-dir", str(out), "--checkpoint", str(checkpoint),
                "--views", "1"] + common) == EXIT_OK
    assert (out / "renders" / "view_0001.png").is_file()

    assert run(["extract", "--output-dir", str(out), "--checkpoint", str(checkpoint)] + common) == EXIT_OK
    assert (out / "mesh.obj").is_file()
    assert run(["eval", "--output-dir", str(out)] + common) == EXIT_OK
    report = (out / "chamfer.txt").read_text()
    assert report.startswith("score_x100: ")


def test_trace_debug_empty_box_root_color(capsys, tmp_path):
    argv = ["trace-debug", "--pixel", "2", "2", "--output-dir", str(tmp_path),
            "--set", "scene.object=null",
            "--set", "scene.camera={focal: 10.0, cx: 2.5, cy: 2.5, width: 5, height: 5}"]
    assert run(argv) == EXIT_OK
    line = next(text for text in capsys.readouterr().out.splitlines() if text.startswith("root linear:"))
    assert float(line.split()[2]) == pytest.approx(0.773922, abs=1e-5)


def test_bad_key_writes_nothing(tmp_path):
    assert run(["forge", "--output-dir", str(tmp_path / "data"), "--set", "scene.nope=1"]) == EXIT_CONFIG
    assert not (tmp_path / "data").exists()


@pytest.mark.parametrize("override", [
    "scene.box.half_extents=[-0.5, 0.5, 0.5]",
    "scene.box.ior=0.9",
    "scene.box.rotation=[1, 0, 0, 0, 2, 0, 0, 0, 1]",
])
def test_invalid_box_exits_2(tmp_path, override):
    assert run(["forge", "--output-dir", str(tmp_path / "data"), "--set", override]) == EXIT_CONFIG
    assert not (tmp_path / "data").exists()


def test_resume_from_other_architecture_exits_3(tmp_path):
    data, out = tmp_path / "data", tmp_path / "out"
    assert run(["forge", "--output-dir", str(data)] + TINY_SCENE) == EXIT_OK
    foreign = save_checkpoint(tmp_path / "foreign.pt", build_fields(FieldConfig()), 0)
    argv = (["train", "--output-dir", str(out), "--resume", str(foreign),
             "--set", f'dataset_dir="{data}"'] + TINY_SCENE + TINY_TRAIN)
    assert run(argv) == EXIT_RUNTIME
    assert not (out / "checkpoints").exists()


@pytest.fixture
def restore_log_level():
    yield
    set_level("INFO")


def test_log_level_reaches_module_loggers(restore_log_level):
    assert run(["forge", "--log-level", "ERROR", "--set", "scene.nope=1"]) == EXIT_CONFIG
    assert not logging.getLogger("forge.scene_forge").isEnabledFor(logging.INFO)
    assert run(["forge", "--log-level", "DEBUG", "--set", "scene.nope=1"]) == EXIT_CONFIG
    assert logging.getLogger("render.volume_renderer").isEnabledFor(logging.DEBUG)
