"""Strand and scalp geometry.

A hairstyle lives on a UV-parametrized scalp: each texel of a regular grid
carries a root position plus an orthonormal local frame (rows: tangent,
bitangent, normal), and strands are stored root-relative in that frame.
Includes the built-in analytic unit-hemisphere scalp, a triangle-mesh scalp
builder for arbitrary OBJ heads, and polyline resampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

WORLD = "world"
LOCAL = "local"


@dataclass
class Strand:
    """Fixed-length 3D polyline, world or root-local coordinates (meters)."""

    points: np.ndarray  # (L, 3)
    space: str = WORLD
    degenerate: bool = False  # set by resample on zero-length input

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError(f"points must be (L, 3), got {self.points.shape}")
        if len(self.points) < 1:
            raise ValueError("strand needs at least one point")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("strand coordinates must be finite")
        if self.space not in (WORLD, LOCAL):
            raise ValueError(f"bad space flag {self.space!r}")

    @property
    def length(self) -> int:
        return len(self.points)

    def arc_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


@dataclass
class Frame:
    """Root-local basis: origin plus rotation rows (tangent, bitangent, normal)."""

    origin: np.ndarray  # (3,)
    axes: np.ndarray    # (3, 3), rows are the basis vectors

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.axes = np.asarray(self.axes, dtype=np.float64)
        if self.origin.shape != (3,) or self.axes.shape != (3, 3):
            raise ValueError("frame needs origin (3,) and axes (3,3)")

    def is_orthonormal(self, tol=1e-6) -> bool:
        return (np.allclose(self.axes @ self.axes.T, np.eye(3), atol=tol)
                and abs(np.linalg.det(self.axes) - 1.0) <= tol)


@dataclass
class ScalpGrid:
    """Per-texel root frames over the scalp UV square.

    Texel (ix, iy) samples UV ((ix+0.5)/width, (iy+0.5)/height).  Arrays are
    indexed [iy, ix]; `valid` marks texels that lie on the scalp.
    """

    width: int
    height: int
    origins: np.ndarray  # (H, W, 3)
    axes: np.ndarray     # (H, W, 3, 3)
    valid: np.ndarray    # (H, W) bool

    def frame(self, ix: int, iy: int) -> Frame:
        if not self.valid[iy, ix]:
            raise ValueError(f"texel ({ix}, {iy}) is not on the scalp")
        return Frame(self.origins[iy, ix], self.axes[iy, ix])

    def valid_count(self) -> int:
        return int(self.valid.sum())


@dataclass
class HairMap:
    """Strands stored per texel of a scalp grid, in local space.

    `strands` rows follow the row-major order of True entries in `mask`;
    mask may cover a subset of the grid's valid texels.
    """

    mask: np.ndarray      # (H, W) bool
    strands: np.ndarray   # (N, L, 3) float32, N == mask.sum()
    grid: Optional[ScalpGrid] = None

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.strands = np.asarray(self.strands, dtype=np.float32)
        if self.strands.ndim != 3 or self.strands.shape[2] != 3:
            raise ValueError("strands must be (N, L, 3)")
        if self.strands.shape[0] != int(self.mask.sum()):
            raise ValueError(
                f"strand count {self.strands.shape[0]} != mask popcount "
                f"{int(self.mask.sum())}")
        if self.grid is not None:
            if self.mask.shape != self.grid.valid.shape:
                raise ValueError("mask/grid shape mismatch")
            if np.any(self.mask & ~self.grid.valid):
                raise ValueError("mask includes texels off the scalp")

    @property
    def strand_length(self) -> int:
        return self.strands.shape[1]

    @property
    def shape(self):
        return self.mask.shape

    def texel_indices(self) -> np.ndarray:
        """Flat row-major texel indices of the stored strands."""
        return np.flatnonzero(self.mask)

    def world_strands(self) -> np.ndarray:
        """(N, L, 3) world-space points via the per-texel frames."""
        if self.grid is None:
            raise ValueError("hair map carries no scalp grid")
        iy, ix = np.nonzero(self.mask)
        axes = self.grid.axes[iy, ix]          # (N, 3, 3)
        orig = self.grid.origins[iy, ix]       # (N, 3)
        return np.einsum("nkd,nlk->nld", axes, self.strands.astype(np.float64)) + orig[:, None, :]


@dataclass
class LatentMap:
    """Per-texel strand latents sharing a validity mask with the source map."""

    mask: np.ndarray      # (H, W) bool
    latents: np.ndarray   # (N, M) float32, N == mask.sum()

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.latents = np.asarray(self.latents, dtype=np.float32)
        if self.latents.ndim != 2:
            raise ValueError("latents must be (N, M)")
        if self.latents.shape[0] != int(self.mask.sum()):
            raise ValueError("latent count != mask popcount")

    @property
    def channels(self) -> int:
        return self.latents.shape[1]

    @property
    def shape(self):
        return self.mask.shape

    def dense(self) -> np.ndarray:
        """(H, W, M) array with zeros at invalid texels."""
        h, w = self.mask.shape
        out = np.zeros((h, w, self.channels), dtype=np.float32)
        out[self.mask] = self.latents
        return out

    @staticmethod
    def from_dense(data: np.ndarray, mask: np.ndarray) -> "LatentMap":
        mask = np.asarray(mask, dtype=bool)
        return LatentMap(mask=mask, latents=np.asarray(data, np.float32)[mask])


# ---------------------------------------------------------------------------
# local-frame conversion

def to_local(strand: Strand, frame: Frame) -> Strand:
    """World -> root-local: p_local = axes @ (p_world - origin)."""
    if strand.space != WORLD:
        raise ValueError("strand is already in local space")
    pts = (strand.points - frame.origin) @ frame.axes.T
    return Strand(points=pts, space=LOCAL)


def from_local(strand: Strand, frame: Frame) -> Strand:
    """Root-local -> world: p_world = axes^T @ p_local + origin."""
    if strand.space != LOCAL:
        raise ValueError("strand is already in world space")
    pts = strand.points @ frame.axes + frame.origin
    return Strand(points=pts, space=WORLD)


def resample(strand: Strand, n_out: int) -> Strand:
    """Resample onto `n_out` points at uniform arc-length fractions.

    Endpoints are preserved exactly.  A zero-total-length input yields
    n_out copies of the root with the degenerate flag set.
    """
    if n_out < 2:
        raise ValueError("n_out must be >= 2")
    pts = strand.points
    if len(pts) < 2:
        raise ValueError("strand needs at least 2 points to resample")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0.0:
        out = np.repeat(pts[:1], n_out, axis=0)
        return Strand(points=out, space=strand.space, degenerate=True)
    targets = np.linspace(0.0, total, n_out)
    out = np.stack([np.interp(targets, cum, pts[:, d]) for d in range(3)], axis=1)
    out[0] = pts[0]
    out[-1] = pts[-1]
    return Strand(points=out, space=strand.space)


# ---------------------------------------------------------------------------
# built-in analytic hemisphere scalp

def hemisphere_grid(width: int = 256, height: int = 256,
                    radius: float = 1.0, rim: float = 0.995) -> ScalpGrid:
    """Unit-hemisphere scalp with planar-projection UV.

    UV (u, v) maps to the hemisphere point above disk coordinates
    (x, y) = (2u-1, 2v-1); texels outside radius `rim` are invalid (the rim
    itself is excluded to keep tangents well-conditioned).  Frames are exact:
    normal = surface normal, tangent = normalized dP/du projected to the
    tangent plane, bitangent = normal x tangent.
    """
    if width < 2 or height < 2:
        raise ValueError("grid must be at least 2x2")
    u = (np.arange(width) + 0.5) / width
    v = (np.arange(height) + 0.5) / height
    uu, vv = np.meshgrid(u, v)            # (H, W)
    x = 2.0 * uu - 1.0
    y = 2.0 * vv - 1.0
    r2 = x * x + y * y
    valid = r2 <= rim * rim
    z = np.sqrt(np.clip(1.0 - r2, 0.0, None))

    origins = np.stack([x, y, z], axis=-1) * radius
    normal = np.stack([x, y, z], axis=-1)  # unit sphere: normal == position/R
    # dP/du = (2, 0, -2x/z); project onto tangent plane and normalize
    with np.errstate(divide="ignore", invalid="ignore"):
        du = np.stack([np.full_like(x, 2.0), np.zeros_like(x),
                       np.where(z > 0, -2.0 * x / np.maximum(z, 1e-12), 0.0)],
                      axis=-1)
    dot = np.sum(du * normal, axis=-1, keepdims=True)
    tangent = du - dot * normal
    tnorm = np.linalg.norm(tangent, axis=-1, keepdims=True)
    tangent = tangent / np.maximum(tnorm, 1e-12)
    bitangent = np.cross(normal, tangent)

    axes = np.stack([tangent, bitangent, normal], axis=-2)  # (H, W, 3, 3)
    axes[~valid] = np.eye(3)
    origins[~valid] = 0.0
    return ScalpGrid(width=width, height=height, origins=origins, axes=axes,
                     valid=valid)


def hemisphere_uv_frame(u: float, v: float, radius: float = 1.0) -> Frame:
    """Analytic hemisphere frame at a UV sample (oracle for grid tests)."""
    x, y = 2.0 * u - 1.0, 2.0 * v - 1.0
    r2 = x * x + y * y
    if r2 >= 1.0:
        raise ValueError("UV outside hemisphere")
    z = np.sqrt(1.0 - r2)
    normal = np.array([x, y, z])
    du = np.array([2.0, 0.0, -2.0 * x / z])
    tangent = du - (du @ normal) * normal
    tangent /= np.linalg.norm(tangent)
    bitangent = np.cross(normal, tangent)
    return Frame(origin=normal * radius,
                 axes=np.stack([tangent, bitangent, normal]))


# ---------------------------------------------------------------------------
# triangle-mesh scalp

@dataclass
class TriMesh:
    """Triangle mesh with per-corner UVs (as read from `f v/vt` OBJ faces)."""

    vertices: np.ndarray   # (V, 3)
    uvs: np.ndarray        # (T, 2)
    faces_v: np.ndarray    # (F, 3) int, vertex indices
    faces_vt: np.ndarray   # (F, 3) int, uv indices


def load_obj_mesh(path) -> TriMesh:
    """Read an ASCII OBJ with `v`, `vt` and triangular `f v/vt` records."""
    verts, uvs, fv, fvt = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif tag == "vt":
                uvs.append([float(p) for p in parts[1:3]])
            elif tag == "f":
                if len(parts) != 4:
                    raise ValueError(
                        f"line {lineno}: only triangular faces supported")
                vi, ti = [], []
                for corner in parts[1:]:
                    fields = corner.split("/")
                    if len(fields) < 2 or not fields[1]:
                        raise ValueError(
                            f"line {lineno}: faces must be 'f v/vt' records")
                    vi.append(int(fields[0]) - 1)
                    ti.append(int(fields[1]) - 1)
                fv.append(vi)
                fvt.append(ti)
    if not fv:
        raise ValueError(f"{path}: no faces found")
    return TriMesh(vertices=np.asarray(verts, np.float64),
                   uvs=np.asarray(uvs, np.float64),
                   faces_v=np.asarray(fv, np.int64),
                   faces_vt=np.asarray(fvt, np.int64))


def build_scalp_grid(mesh: TriMesh, width: int, height: int) -> ScalpGrid:
    """Rasterize mesh faces into a UV texel grid of root frames.

    Texel (ix, iy) samples UV ((ix+0.5)/W, (iy+0.5)/H); a texel is valid when
    that UV lands inside a face.  Raises on zero-area faces (3D or UV) and on
    non-injective UVs (a texel interior-claimed by two faces).
    """
    if width < 2 or height < 2:
        raise ValueError("grid must be at least 2x2")
    V, UV = mesh.vertices, mesh.uvs
    origins = np.zeros((height, width, 3))
    axes = np.tile(np.eye(3), (height, width, 1, 1))
    valid = np.zeros((height, width), dtype=bool)
    interior = np.zeros((height, width), dtype=bool)

    us = (np.arange(width) + 0.5) / width
    vs = (np.arange(height) + 0.5) / height

    for f in range(len(mesh.faces_v)):
        p0, p1, p2 = V[mesh.faces_v[f]]
        t0, t1, t2 = UV[mesh.faces_vt[f]]
        e1, e2 = p1 - p0, p2 - p0
        n = np.cross(e1, e2)
        area3d = 0.5 * np.linalg.norm(n)
        duv1, duv2 = t1 - t0, t2 - t0
        det_uv = duv1[0] * duv2[1] - duv2[0] * duv1[1]
        if area3d < 1e-14 or abs(det_uv) < 1e-14:
            raise ValueError(f"face {f} has zero area")
        n = n / (2.0 * area3d)
        # surface u-derivative from the UV chart, projected to the face plane
        tangent = (duv2[1] * e1 - duv1[1] * e2) / det_uv
        tangent = tangent - (tangent @ n) * n
        tn = np.linalg.norm(tangent)
        if tn < 1e-14:
            raise ValueError(f"face {f} has a degenerate UV tangent")
        tangent /= tn
        bitangent = np.cross(n, tangent)
        frame_axes = np.stack([tangent, bitangent, n])

        # texels inside this face's UV bbox
        lo_u, hi_u = min(t0[0], t1[0], t2[0]), max(t0[0], t1[0], t2[0])
        lo_v, hi_v = min(t0[1], t1[1], t2[1]), max(t0[1], t1[1], t2[1])
        jx = np.nonzero((us >= lo_u - 1e-12) & (us <= hi_u + 1e-12))[0]
        jy = np.nonzero((vs >= lo_v - 1e-12) & (vs <= hi_v + 1e-12))[0]
        if len(jx) == 0 or len(jy) == 0:
            continue
        gu, gv = np.meshgrid(us[jx], vs[jy])
        # barycentric coordinates in UV
        d = gu * 0.0
        w1 = (duv2[1] * (gu - t0[0]) - duv2[0] * (gv - t0[1])) / det_uv
        w2 = (-duv1[1] * (gu - t0[0]) + duv1[0] * (gv - t0[1])) / det_uv
        w0 = 1.0 - w1 - w2
        inside = (w0 >= -1e-12) & (w1 >= -1e-12) & (w2 >= -1e-12)
        strict = (w0 >= 1e-7) & (w1 >= 1e-7) & (w2 >= 1e-7)
        if not inside.any():
            continue
        yy, xx = np.nonzero(inside)
        for y, x_ in zip(yy, xx):
            iy, ix = jy[y], jx[x_]
            if strict[y, x_] and interior[iy, ix]:
                raise ValueError(
                    f"non-injective UV: texel ({ix}, {iy}) claimed by "
                    f"multiple faces (face {f})")
            if valid[iy, ix] and not strict[y, x_]:
                continue  # keep the first/strict claim at shared edges
            pos = (w0[y, x_] * p0 + w1[y, x_] * p1 + w2[y, x_] * p2)
            origins[iy, ix] = pos
            axes[iy, ix] = frame_axes
            valid[iy, ix] = True
            interior[iy, ix] |= bool(strict[y, x_])

    return ScalpGrid(width=width, height=height, origins=origins, axes=axes,
                     valid=valid)


def hemisphere_mesh(segments: int = 48, radius: float = 1.0,
                    rim: float = 0.97) -> TriMesh:
    """Triangulated hemisphere over the planar-projection UV chart.

    Grid of (segments+1)^2 UV samples; cells fully inside disk radius `rim`
    are triangulated.  Used to exercise the mesh scalp path with the same
    chart as the analytic grid.
    """
    n = segments + 1
    u = np.linspace(0.0, 1.0, n)
    uu, vv = np.meshgrid(u, u)
    x, y = 2.0 * uu - 1.0, 2.0 * vv - 1.0
    r2 = x * x + y * y
    keep = r2 <= rim * rim
    z = np.sqrt(np.clip(1.0 - r2, 0.0, None))
    verts = np.stack([x, y, z], axis=-1).reshape(-1, 3) * radius
    uvflat = np.stack([uu, vv], axis=-1).reshape(-1, 2)

    faces = []
    for j in range(segments):
        for i in range(segments):
            a = j * n + i
            b = a + 1
            c = a + n
            d = c + 1
            if keep.reshape(-1)[[a, b, c, d]].all():
                faces.append([a, b, d])
                faces.append([a, d, c])
    faces = np.asarray(faces, np.int64)
    return TriMesh(vertices=verts, uvs=uvflat, faces_v=faces, faces_vt=faces)


def write_obj_mesh(mesh: TriMesh, path) -> None:
    """Write a TriMesh as ASCII OBJ with `v`, `vt`, `f v/vt` records."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in mesh.vertices:
            fh.write(f"v {p[0]:.6f} {p[1]:.6f} {p[2]:.6f}\n")
        for t in mesh.uvs:
            fh.write(f"vt {t[0]:.6f} {t[1]:.6f}\n")
        for fv, ft in zip(mesh.faces_v, mesh.faces_vt):
            fh.write("f " + " ".join(f"{v + 1}/{t + 1}"
                                     for v, t in zip(fv, ft)) + "\n")


def nearest_valid_texels(grid: ScalpGrid, roots: np.ndarray) -> np.ndarray:
    """Flat texel index of the closest valid root frame for each query point."""
    from scipy.spatial import cKDTree

    iy, ix = np.nonzero(grid.valid)
    flat = iy * grid.width + ix
    tree = cKDTree(grid.origins[iy, ix])
    _, nearest = tree.query(np.asarray(roots, dtype=np.float64))
    return flat[np.atleast_1d(nearest)]
