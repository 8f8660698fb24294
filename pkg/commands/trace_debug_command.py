"""
trace-debug: print one pixel's ray tree with per-node optics and colors.
"""
import argparse

import numpy as np
import torch

from commands.base_command import BaseCommand
from field.sdf_factory import SdfFactory
from forge.scene_forge import SphereTracer
from render.hybrid_renderer import accumulate, describe_tree, gamma_correct, trace
from render.volume_renderer import Segment, SegmentBatch, VolumeRenderer
from scene.camera import Camera
from utils.errors import ConfigError
from utils.logger import get_logger

logger = get_logger(__name__)


def parse_triple(text: str) -> np.ndarray:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as e:
        raise ConfigError(f"Expected three comma-separated numbers, got '{text}'") from e
    if len(values) != 3:
        raise ConfigError(f"Expected three comma-separated numbers, got '{text}'")
    return np.asarray(values)


class TraceDebugCommand(BaseCommand):
    """
    Trace a single pixel and dump the tree.

    Internal radiance comes from the scene's analytic object, or from a checkpoint
    when one is given.
    """

    name = "trace-debug"
    help = "dump a single pixel's ray tree"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--pixel", nargs=2, type=int, metavar=("ROW", "COL"), default=None,
                            help="pixel to trace (default: image center)")
        parser.add_argument("--view", type=int, default=None,
                            help="take the camera from this dataset view")
        parser.add_argument("--camera-position", default="5,0,0",
                            help="camera position x,y,z looking at the origin (when --view is not given)")
        parser.add_argument("--checkpoint", default=None, help="use a trained field for internal radiance")

    def _camera(self) -> Camera:
        if self.args.view is not None:
            dataset = self.load_dataset()
            if not 0 <= self.args.view < dataset.num_views:
                raise ConfigError(f"View {self.args.view} outside the dataset's {dataset.num_views} views")
            return dataset.cameras[self.args.view]
        return Camera.look_at(parse_triple(self.args.camera_position), self.config.scene.camera.build())

    def _radiance_provider(self):
        if self.args.checkpoint:
            fields = self.load_checkpoint().fields
            train = self.config.train
            return VolumeRenderer(fields, train.n_coarse, train.n_fine, jitter=False, seed=train.seed), \
                fields.dtype
        obj = SdfFactory.from_dict(self.config.scene.object)
        return SphereTracer(obj, self.config.trace.ambient), torch.float64

    def run(self) -> int:
        camera = self._camera()
        k = camera.intrinsics
        row, col = self.args.pixel if self.args.pixel else (k.height // 2, k.width // 2)
        box = self.config.scene.box.build()
        cfg = self.config.trace

        provider, dtype = self._radiance_provider()

        def internal_radiance(node):
            batch = SegmentBatch.from_segments([Segment.from_node(node)], dtype=dtype)
            batch.pixel_ids = np.array([row * k.width + col])
            batch.slots = np.array([node.slot])
            output = provider(batch)
            return (output.color[0].detach().cpu().numpy().astype(np.float64),
                    float(output.transmittance[0]))

        tree = trace(camera.ray_through_pixel(row, col), box, cfg)
        record = {}
        with torch.no_grad():
            linear = accumulate(tree, internal_radiance, cfg, record=record)
        intensity = gamma_correct(linear)
        self.snapshot()

        print(f"pixel ({row}, {col}), {len(tree)} segments, depth budget {tree.depth_budget}")
        for line in describe_tree(tree, record):
            print(line)
        print(f"root linear: {linear[0]:.6f} {linear[1]:.6f} {linear[2]:.6f}")
        print(f"intensity: {intensity[0]:.6f} {intensity[1]:.6f} {intensity[2]:.6f}")
        return 0
