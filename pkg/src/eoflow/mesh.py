"""Triangular meshes for the built-in micro-channel geometries.

All meshes come from a structured background grid whose lines conform to the
obstacle and junction coordinates, with each quad split along a parity-
alternating diagonal. This keeps mesh generation deterministic and, for the
channel geometries, exactly symmetric about the horizontal centerline.
Meshes are immutable after construction and safe to share across threads.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

UNIT_SQUARE = "unit_square"
CHANNEL = "channel"
T_JUNCTION = "tjunction"
ROUGH_CHANNEL = "rough_channel"

GEOMETRY_KINDS = (UNIT_SQUARE, CHANNEL, T_JUNCTION, ROUGH_CHANNEL)


class BoundaryTag:
    """Boundary edge classification; tags partition the boundary."""

    INLET = 0
    OUTLET = 1
    WALL = 2

    ALL = (INLET, OUTLET, WALL)
    NAMES = {INLET: "inlet", OUTLET: "outlet", WALL: "wall"}


@dataclass
class GeometrySpec:
    """Parameters of a built-in geometry.

    ``width`` is the channel width H, ``length`` the channel length L (for the
    T-junction, the length of the main channel). The roughness fields only
    apply to ``rough_channel``: rectangular obstacles of size
    ``roughness_width`` x ``roughness_height`` protrude from both walls at
    centers spaced ``roughness_spacing`` apart.
    """

    kind: str = UNIT_SQUARE
    width: float = 1.0
    length: float = 1.0
    roughness_height: float = 0.0
    roughness_width: float = 0.0
    roughness_spacing: float = 0.0
    edge_length: float = 0.125

    def validate(self):
        if self.kind not in GEOMETRY_KINDS:
            raise ParameterError(f"unknown geometry kind {self.kind!r}")
        if self.width <= 0 or self.length <= 0:
            raise ParameterError("geometry width and length must be positive")
        if self.edge_length <= 0:
            raise ParameterError("target edge length must be positive")
        if self.kind == ROUGH_CHANNEL:
            if not 0 <= self.roughness_height < self.width / 2:
                raise ParameterError(
                    "roughness height must satisfy 0 <= h_r < H/2, got "
                    f"h_r={self.roughness_height}, H={self.width}"
                )
            if self.roughness_height > 0:
                if not 0 < self.roughness_width < self.roughness_spacing <= self.length:
                    raise ParameterError(
                        "roughness must satisfy 0 < w < D <= L"
                    )


@dataclass
class TriMesh:
    """Conforming triangulation with tagged boundary edges.

    vertices        (nv, 2) coordinates in meters
    triangles       (nt, 3) vertex indices, counter-clockwise
    boundary_edges  (nb, 2) vertex pairs, each owned by exactly one triangle
    boundary_tags   (nb,)   BoundaryTag value per boundary edge
    h_max           largest triangle diameter
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    h_max: float = field(default=0.0)

    @classmethod
    def create(cls, vertices, triangles, boundary_edges, boundary_tags, h_max=None):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64)
        boundary_tags = np.ascontiguousarray(boundary_tags, dtype=np.int64)
        if h_max is None:
            h_max = _max_diameter(vertices, triangles)
        mesh = cls(vertices, triangles, boundary_edges, boundary_tags, h_max)
        for arr in (mesh.vertices, mesh.triangles, mesh.boundary_edges, mesh.boundary_tags):
            arr.flags.writeable = False
        return mesh

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    def areas(self):
        """Signed triangle areas (positive for CCW orientation)."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _max_diameter(vertices, triangles):
    if len(triangles) == 0:
        return 0.0
    p = vertices[triangles]
    e = np.stack(
        [p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1
    )
    return float(np.sqrt((e ** 2).sum(axis=2).max()))


def _subdivide(a, b, target, force_even=False):
    n = max(1, int(round((b - a) / target)))
    if force_even and n % 2:
        n += 1
    return np.linspace(a, b, n + 1)


def _join_lines(breaks, target, force_even=False):
    """Coordinate lines through all breakpoints, each gap near target length."""
    parts = [np.array([breaks[0]])]
    for a, b in zip(breaks[:-1], breaks[1:]):
        parts.append(_subdivide(a, b, target, force_even)[1:])
    return np.concatenate(parts)


def _symmetric_lines(half_breaks, height, target):
    """y-lines symmetric about height/2 built by mirroring the lower half.

    ``half_breaks`` must start at 0 and end at height/2.
    """
    lower = _join_lines(half_breaks, target)
    upper = height - lower[-2::-1]
    return np.concatenate([lower, upper])


def _structured(xlines, ylines, keep_cell, tag_of):
    """Triangulate the kept cells of a tensor grid.

    keep_cell(i, j) decides whether grid cell (i, j) is part of the domain;
    tag_of(x, y) tags a boundary edge by its midpoint.
    """
    nx = len(xlines) - 1
    ny = len(ylines) - 1
    keep = np.fromfunction(
        np.vectorize(keep_cell, otypes=[bool]), (nx, ny), dtype=int
    )
    if not keep.any():
        raise ParameterError("geometry contains no cells at this resolution")

    used = np.zeros((nx + 1, ny + 1), dtype=bool)
    ii, jj = np.nonzero(keep)
    for di, dj in ((0, 0), (1, 0), (0, 1), (1, 1)):
        used[ii + di, jj + dj] = True

    vid = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    order = np.argwhere(used.T)  # row-major in (j, i): deterministic numbering
    vid[order[:, 1], order[:, 0]] = np.arange(len(order))
    verts = np.column_stack([xlines[order[:, 1]], ylines[order[:, 0]]])

    tris = []
    b_edges = []
    b_tags = []

    def side_is_boundary(i, j, di, dj):
        ni, nj = i + di, j + dj
        if ni < 0 or nj < 0 or ni >= nx or nj >= ny:
            return True
        return not keep[ni, nj]

    for j in range(ny):
        for i in range(nx):
            if not keep[i, j]:
                continue
            v00 = vid[i, j]
            v10 = vid[i + 1, j]
            v11 = vid[i + 1, j + 1]
            v01 = vid[i, j + 1]
            if (i + j) % 2 == 0:
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
            else:
                tris.append((v00, v10, v01))
                tris.append((v10, v11, v01))
            for (di, dj), (a, b) in (
                ((0, -1), (v00, v10)),
                ((1, 0), (v10, v11)),
                ((0, 1), (v11, v01)),
                ((-1, 0), (v01, v00)),
            ):
                if side_is_boundary(i, j, di, dj):
                    mx = 0.5 * (verts[a, 0] + verts[b, 0])
                    my = 0.5 * (verts[a, 1] + verts[b, 1])
                    b_edges.append((a, b))
                    b_tags.append(tag_of(mx, my))

    return TriMesh.create(verts, np.array(tris), np.array(b_edges), np.array(b_tags))


def _generate_unit_square(spec):
    n = max(1, int(round(1.0 / spec.edge_length)))
    lines = np.linspace(0.0, 1.0, n + 1)
    return _structured(lines, lines, lambda i, j: True, lambda x, y: BoundaryTag.WALL)


def unit_square_mesh(n):
    """n-by-n structured split of the unit square (2 n^2 triangles)."""
    return _generate_unit_square(GeometrySpec(kind=UNIT_SQUARE, edge_length=1.0 / n))


def _generate_channel(spec):
    length, width = spec.length, spec.width
    xlines = _join_lines([0.0, length], spec.edge_length)
    ylines = _symmetric_lines([0.0, width / 2], width, spec.edge_length)
    tol = 1e-9 * max(length, width)

    def tag_of(x, y):
        if x < tol:
            return BoundaryTag.INLET
        if x > length - tol:
            return BoundaryTag.OUTLET
        return BoundaryTag.WALL

    return _structured(xlines, ylines, lambda i, j: True, tag_of)


def _generate_rough_channel(spec):
    length, width = spec.length, spec.width
    h_r, w_obs, spacing = spec.roughness_height, spec.roughness_width, spec.roughness_spacing
    tol = 1e-9 * max(length, width)

    centers = []
    if h_r > 0:
        c = spacing
        while c + w_obs / 2 < length - tol:
            centers.append(c)
            c += spacing

    xbreaks = {0.0, length}
    for c in centers:
        xbreaks.add(c - w_obs / 2)
        xbreaks.add(c + w_obs / 2)
    xlines = _join_lines(sorted(xbreaks), spec.edge_length)

    if h_r > 0:
        ylines = _symmetric_lines([0.0, h_r, width / 2], width, spec.edge_length)
    else:
        ylines = _symmetric_lines([0.0, width / 2], width, spec.edge_length)

    boxes = []
    for c in centers:
        boxes.append((c - w_obs / 2, c + w_obs / 2, 0.0, h_r))
        boxes.append((c - w_obs / 2, c + w_obs / 2, width - h_r, width))

    xc = 0.5 * (xlines[:-1] + xlines[1:])
    yc = 0.5 * (ylines[:-1] + ylines[1:])

    def keep(i, j):
        x, y = xc[i], yc[j]
        for x0, x1, y0, y1 in boxes:
            if x0 < x < x1 and y0 < y < y1:
                return False
        return True

    def tag_of(x, y):
        if x < tol:
            return BoundaryTag.INLET
        if x > length - tol:
            return BoundaryTag.OUTLET
        return BoundaryTag.WALL

    return _structured(xlines, ylines, keep, tag_of)


def _generate_tjunction(spec):
    # main channel [-L/2, L/2] x [0, H] with a branch of width H and length 2H
    # joining at the midpoint of the top wall; inlet on the right end, outlets
    # at the left end and the branch top.
    width = spec.width
    half = spec.length / 2
    branch_half = width / 2
    branch_top = 3 * width
    tol = 1e-9 * max(spec.length, branch_top)

    xlines = _join_lines([-half, -branch_half, branch_half, half], spec.edge_length)
    ylines = _join_lines([0.0, width, branch_top], spec.edge_length)
    xc = 0.5 * (xlines[:-1] + xlines[1:])
    yc = 0.5 * (ylines[:-1] + ylines[1:])

    def keep(i, j):
        x, y = xc[i], yc[j]
        if y < width:
            return True
        return -branch_half < x < branch_half

    def tag_of(x, y):
        if x > half - tol:
            return BoundaryTag.INLET
        if x < -half + tol or y > branch_top - tol:
            return BoundaryTag.OUTLET
        return BoundaryTag.WALL

    return _structured(xlines, ylines, keep, tag_of)


_GENERATORS = {
    UNIT_SQUARE: _generate_unit_square,
    CHANNEL: _generate_channel,
    ROUGH_CHANNEL: _generate_rough_channel,
    T_JUNCTION: _generate_tjunction,
}


def generate(spec):
    """Build the tagged triangulation described by ``spec``."""
    spec.validate()
    return _GENERATORS[spec.kind](spec)


def refine_uniform(mesh):
    """Split every triangle into 4 congruent children.

    Boundary tags are inherited by the two half-edges; h_max halves exactly
    (children are similar to their parent at ratio 1/2).
    """
    verts = [mesh.vertices]
    nv = mesh.num_vertices
    midpoint = {}
    new_coords = []

    def mid(a, b):
        nonlocal nv
        key = (a, b) if a < b else (b, a)
        m = midpoint.get(key)
        if m is None:
            m = nv
            midpoint[key] = m
            nv += 1
            new_coords.append(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
        return m

    tris = np.empty((4 * mesh.num_triangles, 3), dtype=np.int64)
    for t, (a, b, c) in enumerate(mesh.triangles):
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        tris[4 * t + 0] = (a, mab, mca)
        tris[4 * t + 1] = (mab, b, mbc)
        tris[4 * t + 2] = (mca, mbc, c)
        tris[4 * t + 3] = (mab, mbc, mca)

    b_edges = np.empty((2 * len(mesh.boundary_edges), 2), dtype=np.int64)
    b_tags = np.repeat(mesh.boundary_tags, 2)
    for k, (a, b) in enumerate(mesh.boundary_edges):
        m = mid(int(a), int(b))
        b_edges[2 * k + 0] = (a, m)
        b_edges[2 * k + 1] = (m, b)

    if new_coords:
        verts.append(np.array(new_coords))
    vertices = np.vstack(verts)
    return TriMesh.create(vertices, tris, b_edges, b_tags, h_max=mesh.h_max / 2)


def boundary_vertices(mesh, tag):
    """All vertices incident to a boundary edge carrying ``tag``.

    Vertices shared between two tags are returned for both; callers decide
    precedence (scalar Dirichlet data takes the inlet/outlet tag, velocity
    slip evaluation takes the wall tag).
    """
    sel = mesh.boundary_tags == tag
    return np.unique(mesh.boundary_edges[sel])
