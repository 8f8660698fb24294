"""
eval: Chamfer-L1 of an OBJ against the scene's analytic ground truth.
"""
import argparse
from pathlib import Path

from commands.base_command import BaseCommand
from field.sdf_factory import SdfFactory
from meshing.mesh_tools import chamfer_l1, marching_cubes, read_obj
from utils.errors import MeshError
from utils.logger import get_logger

logger = get_logger(__name__)


class EvalCommand(BaseCommand):
    """Score a reconstructed mesh."""

    name = "eval"
    help = "Chamfer-L1 (x100) against the analytic ground truth"

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--mesh", default=None, help="OBJ to score (default: <output_dir>/mesh.obj)")

    def run(self) -> int:
        mesh_path = Path(self.args.mesh) if self.args.mesh else self.output_dir / "mesh.obj"
        pred = read_obj(mesh_path)
        obj = SdfFactory.from_dict(self.config.scene.object)
        if obj is None:
            raise MeshError("The scene has no object to evaluate against")

        box = self.config.scene.box.build()
        gt = marching_cubes(obj.numpy_sdf, box.world_bounds(), self.config.mesh.gt_resolution)
        report = chamfer_l1(pred, gt, seed=self.config.mesh.eval_seed)

        report_path = mesh_path.parent / "chamfer.txt"
        report_path.write_text(report.to_text(), encoding="utf-8")
        self.snapshot(report_path.parent)
        print(report.to_text(), end="")
        logger.info(f"Chamfer-L1 x100 of {mesh_path}: {report.score_x100:.6g}")
        return 0
