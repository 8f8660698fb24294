"""
render: novel views of a checkpoint at the dataset's poses.
"""
import argparse

import imageio.v2 as imageio
from tqdm import tqdm

from commands.base_command import BaseCommand
from render.hybrid_renderer import render_view, to_8bit
from render.volume_renderer import VolumeRenderer
from utils.errors import ConfigError
from utils.logger import get_logger

logger = get_logger(__name__)


def parse_views(text: str, count: int) -> list:
    if not text:
        return list(range(count))
    try:
        views = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"--views must be a comma-separated list of integers, got '{text}'") from e
    bad = [v for v in views if not 0 <= v < count]
    if bad:
        raise ConfigError(f"Views {bad} outside the dataset's {count} views")
    return views


class RenderCommand(BaseCommand):
    """Render PNG images from a trained checkpoint."""

    name = "render"
    help = "render views from a checkpoint"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--checkpoint", required=True, help="checkpoint file")
        parser.add_argument("--views", default="", help="comma-separated view indices (default: all)")

    def run(self) -> int:
        dataset = self.load_dataset()
        views = parse_views(self.args.views, dataset.num_views)
        fields = self.load_checkpoint().fields
        train = self.config.train
        renderer = VolumeRenderer(fields, train.n_coarse, train.n_fine, jitter=False, seed=train.seed)

        out_dir = self.output_dir / "renders"
        out_dir.mkdir(parents=True, exist_ok=True)
        self.snapshot(out_dir)
        for view in tqdm(views, desc="render", unit="view"):
            image = render_view(dataset.cameras[view], dataset.box, renderer, self.config.trace,
                                dtype=fields.dtype)
            imageio.imwrite(out_dir / f"view_{view:04d}.png", to_8bit(image))
        logger.info(f"Rendered {len(views)} views to {out_dir}")
        return 0
