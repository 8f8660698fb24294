"""
Surface extraction and evaluation: marching cubes on an SDF grid, largest-component
cleanup, area-weighted surface sampling and the Chamfer-L1 score.
"""
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence, Union

import mcubes
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from utils.errors import MeshError, NonFiniteError
from utils.logger import get_logger

logger = get_logger(__name__)

DEGENERATE_AREA = 1e-12
MIN_CHAMFER_SAMPLES = 10000

SdfFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class TriangleMesh:
    """Indexed triangle mesh with float64 vertices and int64 triangles."""
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0 or
                                    self.triangles.max() >= len(self.vertices)):
            raise MeshError(f"Triangle indices out of range for {len(self.vertices)} vertices")

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def is_empty(self) -> bool:
        return self.num_triangles == 0

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def submesh(self, triangle_mask: np.ndarray) -> "TriangleMesh":
        """Keep the selected triangles and only the vertices they use."""
        triangles = self.triangles[triangle_mask]
        used = np.unique(triangles)
        remap = np.full(self.num_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        return TriangleMesh(self.vertices[used], remap[triangles])


def marching_cubes(sdf: SdfFn, bounds: Union[np.ndarray, Sequence[Sequence[float]]],
                   resolution: int, chunk: int = 262144) -> TriangleMesh:
    """
    Extract the zero level set of sdf on a regular grid.

    Args:
        sdf: Maps (M, 3) float64 points to (M,) values
        bounds: [[x0, y0, z0], [x1, y1, z1]]
        resolution: Grid points per axis, at least 8
        chunk: Points per sdf call

    Returns:
        Mesh in world coordinates, degenerate triangles removed

    Raises:
        NonFiniteError: If the field is non-finite somewhere; names the grid index
    """
    if resolution < 8:
        raise MeshError(f"Marching cubes resolution must be at least 8, got {resolution}")
    bounds = np.asarray(bounds, dtype=np.float64).reshape(2, 3)
    axes = [np.linspace(bounds[0, k], bounds[1, k], resolution) for k in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)

    values = np.empty(len(grid))
    for start in range(0, len(grid), chunk):
        values[start:start + chunk] = np.asarray(sdf(grid[start:start + chunk]), dtype=np.float64)
    bad = np.nonzero(~np.isfinite(values))[0]
    if len(bad):
        i, j, k = np.unravel_index(bad[0], (resolution,) * 3)
        raise NonFiniteError(f"SDF is non-finite at grid index ({i}, {j}, {k}), "
                             f"point {grid[bad[0]].tolist()}")

    volume = values.reshape(resolution, resolution, resolution)
    vertices, triangles = mcubes.marching_cubes(volume, 0.0)
    if len(triangles) == 0:
        logger.info("Marching cubes found no zero crossing")
        return TriangleMesh.empty()

    spacing = (bounds[1] - bounds[0]) / (resolution - 1)
    mesh = TriangleMesh(bounds[0] + np.asarray(vertices) * spacing, triangles)
    mesh = mesh.submesh(mesh.triangle_areas() > DEGENERATE_AREA)
    logger.info(f"Marching cubes at {resolution}^3: {mesh.num_vertices} vertices, "
                f"{mesh.num_triangles} triangles")
    return mesh


def largest_component(mesh: TriangleMesh) -> TriangleMesh:
    """
    The connected component with the most vertices.

    Ties go to the most triangles, then to the lowest minimum vertex index.
    """
    if mesh.is_empty:
        return TriangleMesh.empty()

    t = mesh.triangles
    rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
    cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    adjacency = coo_matrix((np.ones(len(rows)), (rows, cols)),
                           shape=(mesh.num_vertices, mesh.num_vertices))
    count, labels = connected_components(adjacency, directed=False)
    if count == 1:
        return mesh

    vertex_counts = np.bincount(labels, minlength=count)
    triangle_counts = np.bincount(labels[t[:, 0]], minlength=count)
    first_vertex = np.full(count, mesh.num_vertices, dtype=np.int64)
    np.minimum.at(first_vertex, labels, np.arange(mesh.num_vertices))

    best = max(range(count), key=lambda c: (vertex_counts[c], triangle_counts[c], -first_vertex[c]))
    logger.debug(f"{count} components; keeping one with {vertex_counts[best]} vertices")
    return mesh.submesh(labels[t[:, 0]] == best)


def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> np.ndarray:
    """
    n points uniformly distributed over the mesh area.

    Raises:
        MeshError: On an empty mesh or n < 1
    """
    if mesh.is_empty:
        raise MeshError("Cannot sample an empty mesh")
    if n < 1:
        raise MeshError(f"Need at least one sample, got {n}")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0.0:
        raise MeshError("Mesh has zero surface area")

    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))[:, None]
    r2 = rng.random(n)[:, None]
    a, b, c = (mesh.vertices[mesh.triangles[chosen, k]] for k in range(3))
    return (1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c


@dataclass(frozen=True)
class ChamferReport:
    score_x100: float
    n_samples_pred: int
    n_samples_gt: int

    def to_text(self) -> str:
        return (f"score_x100: {self.score_x100:.6g}\n"
                f"n_samples_pred: {self.n_samples_pred}\n"
                f"n_samples_gt: {self.n_samples_gt}\n")


def chamfer_samples(num_vertices_gt: int) -> int:
    return max(MIN_CHAMFER_SAMPLES, int(math.ceil(0.2 * num_vertices_gt)))


def nearest_distances(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Euclidean distance from each source point to its nearest target point."""
    distances, _ = cKDTree(target).query(source)
    return distances


def chamfer_l1(pred: TriangleMesh, gt: TriangleMesh, seed: int = 0) -> ChamferReport:
    """
    Symmetric mean nearest-neighbor distance between surface samples, times 100.

    Both meshes get N = max(10000, ceil(0.2 * gt vertex count)) samples drawn with
    the same seed.
    """
    if pred.is_empty or gt.is_empty:
        raise MeshError("Chamfer distance needs two non-empty meshes")
    n = chamfer_samples(gt.num_vertices)
    pred_points = sample_surface(pred, n, seed)
    gt_points = sample_surface(gt, n, seed)

    to_gt = nearest_distances(pred_points, gt_points)
    to_pred = nearest_distances(gt_points, pred_points)
    score = 100.0 * 0.5 * (float(np.mean(to_gt)) + float(np.mean(to_pred)))
    return ChamferReport(score_x100=score, n_samples_pred=n, n_samples_gt=n)


def write_obj(mesh: TriangleMesh, path: Union[str, Path]) -> Path:
    """ASCII OBJ with v/f records only, 1-based indices."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    logger.info(f"Wrote mesh with {mesh.num_vertices} vertices to {path}")
    return path


def read_obj(path: Union[str, Path]) -> TriangleMesh:
    """
    Read v/f records of an OBJ file; other records are ignored.

    Raises:
        MeshError: On malformed records, naming file and line
    """
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"Mesh file not found: {path}")
    vertices, triangles = [], []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            parts = line.split()
            if not parts or parts[0] not in ("v", "f"):
                continue
            try:
                if parts[0] == "v":
                    vertices.append([float(x) for x in parts[1:4]])
                    if len(vertices[-1]) != 3:
                        raise ValueError("vertex needs three coordinates")
                else:
                    face = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                    if len(face) < 3:
                        raise ValueError("face needs at least three indices")
                    # fan-triangulate polygons
                    triangles += [[face[0], face[k], face[k + 1]] for k in range(1, len(face) - 1)]
            except ValueError as e:
                raise MeshError(f"{path}:{number}: {e}") from e
    return TriangleMesh(np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
                        np.asarray(triangles, dtype=np.int64).reshape(-1, 3))
