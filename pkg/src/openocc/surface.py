"""Surface reconstruction: oriented normals, an indicator-field Poisson solve
on a regular grid, mesh voxelization, and KNN semantic transfer.

The solve is the regular-grid variant of Poisson reconstruction: splat the
oriented normals onto grid nodes with trilinear weights, solve the Poisson
equation for the indicator field with conjugate gradients, then extract the
isosurface at the mean field value over the input points.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg
from scipy.spatial import cKDTree
from scipy.stats import mode
from skimage.measure import marching_cubes

from .errors import NumericalError, ValidationError
from .scene import (
    FREE,
    OCCUPIED,
    DenseLabelGrid,
    PointCloud,
    VoxelGridSpec,
    _as_points,
    _as_vec3,
)


@dataclass(frozen=True)
class OrientedPointCloud:
    """Points with unit normals, the input to the Poisson solve."""

    positions: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        pos = _as_points(self.positions)
        nrm = _as_points(self.normals)
        if len(pos) != len(nrm):
            raise ValidationError(
                f"{len(pos)} positions but {len(nrm)} normals"
            )
        lengths = np.linalg.norm(nrm, axis=1)
        if len(nrm) and not np.allclose(lengths, 1.0, atol=1e-6):
            raise ValidationError("normals must be unit length")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        verts = _as_points(self.vertices)
        tris = np.asarray(self.triangles)
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValidationError(f"triangles must be (M, 3), got {tris.shape}")
        tris = tris.astype(np.int64)
        if len(tris):
            if tris.min() < 0 or tris.max() >= len(verts):
                raise ValidationError("triangle index out of range")
            areas = triangle_areas(verts, tris)
            if np.any(areas <= 1e-12):
                raise ValidationError("mesh contains a degenerate triangle")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def estimate_normals(cloud: PointCloud, k: int, viewpoint) -> OrientedPointCloud:
    """Per-point normal = smallest-eigenvalue direction of the k-NN covariance,
    flipped so it points away from the viewpoint (normal . (p - view) >= 0)."""
    if k < 3:
        raise ValidationError(f"normal estimation needs k >= 3, got {k}")
    pts = cloud.positions
    if len(pts) < k:
        raise ValidationError(
            f"normal estimation with k={k} needs at least {k} points, "
            f"got {len(pts)}"
        )
    view = _as_vec3(viewpoint)

    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k)
    neigh = pts[idx]                                   # (n, k, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    # eigh sorts eigenvalues ascending: column 0 is the normal direction.
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    flip = np.einsum("ni,ni->n", normals, pts - view) < 0.0
    normals[flip] *= -1.0
    return OrientedPointCloud(pts, normals)


@dataclass(frozen=True)
class PoissonDiagnostics:
    """Solver evidence: the extraction level is the mean field value at the
    input points, whose spread is reported alongside."""

    level: float
    chi_mean: float
    chi_std: float
    iterations: int
    residual: float


def _trilinear_scatter(values: np.ndarray, frac: np.ndarray, i0: np.ndarray,
                       grid: np.ndarray) -> None:
    # Accumulate per-point values into the 8 surrounding grid nodes.
    for dx in (0, 1):
        wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
        for dy in (0, 1):
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            for dz in (0, 1):
                wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                w = wx * wy * wz
                np.add.at(
                    grid,
                    (i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz),
                    values * w[:, None] if values.ndim == 2 else values * w,
                )


def _trilinear_gather(grid: np.ndarray, frac: np.ndarray,
                      i0: np.ndarray) -> np.ndarray:
    out = np.zeros(len(frac))
    for dx in (0, 1):
        wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
        for dy in (0, 1):
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            for dz in (0, 1):
                wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                out += grid[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz] \
                    * wx * wy * wz
    return out


def poisson_reconstruct(
    cloud: OrientedPointCloud,
    grid_res: int,
    padding: float = 0.15,
    with_diagnostics: bool = False,
):
    """Reconstruct a triangle mesh from oriented points.

    Splats normals onto a grid_res^3 node grid covering the padded bounding
    cube, solves the Poisson equation for the indicator field chi with
    conjugate gradients (relative tolerance 1e-6, at most 10 * grid_res
    iterations), and runs marching cubes at the mean chi over input points.
    """
    if len(cloud) < 10:
        raise ValidationError(
            f"reconstruction needs at least 10 oriented points, got {len(cloud)}"
        )
    if grid_res < 8:
        raise ValidationError(f"grid_res must be at least 8, got {grid_res}")
    pts = cloud.positions
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[1] < 1e-9 * max(sv[0], 1.0):
        raise ValidationError("degenerate input: points are collinear")

    lo, hi = pts.min(axis=0), pts.max(axis=0)
    side = float((hi - lo).max()) * (1.0 + 2.0 * padding)
    center = (lo + hi) / 2.0
    origin = center - side / 2.0
    h = side / (grid_res - 1)

    f = (pts - origin) / h
    i0 = np.clip(np.floor(f).astype(np.int64), 0, grid_res - 2)
    frac = f - i0

    vec = np.zeros((grid_res, grid_res, grid_res, 3))
    _trilinear_scatter(cloud.normals, frac, i0, vec)

    div = (
        np.gradient(vec[..., 0], h, axis=0)
        + np.gradient(vec[..., 1], h, axis=1)
        + np.gradient(vec[..., 2], h, axis=2)
    )

    n = grid_res ** 3
    inv_h2 = 1.0 / (h * h)

    def neg_laplacian(x: np.ndarray) -> np.ndarray:
        g = x.reshape(grid_res, grid_res, grid_res)
        out = 6.0 * g.copy()
        out[:-1] -= g[1:]
        out[1:] -= g[:-1]
        out[:, :-1] -= g[:, 1:]
        out[:, 1:] -= g[:, :-1]
        out[:, :, :-1] -= g[:, :, 1:]
        out[:, :, 1:] -= g[:, :, :-1]
        return (out * inv_h2).ravel()

    op = LinearOperator((n, n), matvec=neg_laplacian)
    b = -div.ravel()
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    chi_flat, info = cg(op, b, rtol=1e-6, atol=0.0,
                        maxiter=10 * grid_res, callback=count)
    if info != 0:
        raise NumericalError(
            f"conjugate gradients did not converge (info={info}) "
            f"after {iters} iterations"
        )
    residual = float(np.linalg.norm(neg_laplacian(chi_flat) - b)
                     / max(np.linalg.norm(b), 1e-30))
    chi = chi_flat.reshape(grid_res, grid_res, grid_res)

    at_points = _trilinear_gather(chi, frac, i0)
    level = float(at_points.mean())
    spread = float(at_points.std())
    if not (chi.min() < level < chi.max()):
        raise NumericalError("isosurface level lies outside the field range")

    verts, faces, _, _ = marching_cubes(chi, level=level, spacing=(h, h, h))
    verts = verts + origin
    keep = triangle_areas(verts, faces.astype(np.int64)) > 1e-12
    mesh = TriangleMesh(verts, faces[keep])
    if len(mesh.triangles) == 0:
        raise NumericalError("reconstruction produced an empty mesh")
    if with_diagnostics:
        diag = PoissonDiagnostics(level, level, spread, iters, residual)
        return mesh, diag
    return mesh


def _triangle_box_candidates(tri: np.ndarray, spec: VoxelGridSpec):
    lo = np.floor((tri.min(axis=0) - spec.origin) / spec.voxel_size).astype(np.int64)
    hi = np.floor((tri.max(axis=0) - spec.origin) / spec.voxel_size).astype(np.int64)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.asarray(spec.dims) - 1)
    if np.any(hi < lo):
        return None
    ii, jj, kk = np.meshgrid(
        np.arange(lo[0], hi[0] + 1),
        np.arange(lo[1], hi[1] + 1),
        np.arange(lo[2], hi[2] + 1),
        indexing="ij",
    )
    return np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)


_BOX_AXES = np.eye(3)


def _triangle_overlaps_boxes(tri: np.ndarray, centers: np.ndarray,
                             half: float) -> np.ndarray:
    """Separating-axis triangle/axis-aligned-cube test, one triangle against
    many equal cubes. Touching counts as overlap."""
    rel = tri[None, :, :] - centers[:, None, :]          # (B, 3 verts, 3)
    ok = np.ones(len(centers), dtype=bool)

    # Cube face axes.
    pmin = rel.min(axis=1)
    pmax = rel.max(axis=1)
    ok &= np.all(pmin <= half, axis=1) & np.all(pmax >= -half, axis=1)

    edges = np.stack([tri[1] - tri[0], tri[2] - tri[1], tri[0] - tri[2]])
    normal = np.cross(edges[0], edges[1])

    # Triangle plane.
    r = half * np.abs(normal).sum()
    d = rel[:, 0, :] @ normal
    ok &= np.abs(d) <= r

    # Nine edge-cross axes.
    axes = np.cross(edges[:, None, :], _BOX_AXES[None, :, :]).reshape(9, 3)
    radii = half * np.abs(axes).sum(axis=1)              # (9,)
    proj = np.einsum("bvk,ak->bva", rel, axes)           # (B, 3, 9)
    ok &= np.all(
        (proj.min(axis=1) <= radii) & (proj.max(axis=1) >= -radii), axis=1
    )
    return ok


def voxelize_mesh(mesh: TriangleMesh, spec: VoxelGridSpec) -> DenseLabelGrid:
    """Mark OCCUPIED every cell some triangle touches; the rest stay FREE.
    Only the surface shell is produced, interiors are not filled."""
    labels = np.full(spec.dims, FREE, dtype=np.uint16)
    half = spec.voxel_size / 2.0
    for tri_idx in mesh.triangles:
        tri = mesh.vertices[tri_idx]
        cand = _triangle_box_candidates(tri, spec)
        if cand is None:
            continue
        centers = spec.voxel_centers(cand)
        hit = _triangle_overlaps_boxes(tri, centers, half)
        sel = cand[hit]
        labels[sel[:, 0], sel[:, 1], sel[:, 2]] = OCCUPIED
    return DenseLabelGrid(spec, labels)


def knn_assign_labels(grid: DenseLabelGrid, labeled: PointCloud,
                      k: int = 5) -> DenseLabelGrid:
    """Give every occupied cell the majority label of the k labeled points
    nearest its center; ties take the smallest class id. FREE cells keep FREE.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if labeled.labels is None or len(labeled) == 0:
        raise ValidationError("label transfer needs a non-empty labeled cloud")

    occ = grid.occupied_indices()
    if len(occ) == 0:
        return grid
    centers = grid.spec.voxel_centers(occ)
    k_eff = min(k, len(labeled))
    tree = cKDTree(labeled.positions)
    _, idx = tree.query(centers, k=k_eff)
    if k_eff == 1:
        idx = idx[:, None]
    votes = labeled.labels[idx]                          # (M, k_eff)
    # mode picks the smallest value among tied majorities.
    winners = mode(votes, axis=1).mode

    labels = grid.labels.copy()
    labels[occ[:, 0], occ[:, 1], occ[:, 2]] = winners.astype(labels.dtype)
    return DenseLabelGrid(grid.spec, labels)


def export_obj(mesh: TriangleMesh, path: str | Path) -> None:
    """ASCII OBJ: 'v x y z' lines then 'f i j k' lines with 1-based indices."""
    lines = [f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}" for v in mesh.vertices]
    lines += [f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}" for t in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")
