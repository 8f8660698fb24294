"""
extract: mesh the zero level set of a checkpoint's SDF.
"""
import argparse
from pathlib import Path

from commands.base_command import BaseCommand
from meshing.mesh_tools import largest_component, marching_cubes, write_obj
from utils.errors import MeshError
from utils.logger import get_logger

logger = get_logger(__name__)


class ExtractCommand(BaseCommand):
    """Marching cubes over the box, optionally keeping the largest component."""

    name = "extract"
    help = "extract a mesh from a checkpoint"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--checkpoint", required=True, help="checkpoint file")
        parser.add_argument("--out", default=None, help="OBJ path (default: <output_dir>/mesh.obj)")

    def run(self) -> int:
        fields = self.load_checkpoint().fields
        box = self.config.scene.box.build()
        mesh = marching_cubes(fields.numpy_sdf, box.world_bounds(), self.config.mesh.resolution)
        if mesh.is_empty:
            raise MeshError("no surface found: the SDF has no zero crossing inside the box")
        if self.config.mesh.keep_largest_component:
            mesh = largest_component(mesh)

        out = Path(self.args.out) if self.args.out else self.output_dir / "mesh.obj"
        write_obj(mesh, out)
        self.snapshot(out.parent)
        return 0
