"""Reference-element machinery: bases, quadrature, dof maps, norms.

The scalar fields live in the linear-plus-bubble space (one dof per vertex
plus one interior bubble per triangle); velocity uses that space per
component (the inf-sup stable linear/bubble–linear pair), pressure is plain
linear. Bubble value is 27*l1*l2*l3 in barycentric coordinates.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, ParameterError, ShapeError


class SpaceKind:
    P1 = "p1"
    P1_BUBBLE = "p1_bubble"
    MINI_VELOCITY = "mini_velocity"
    P1_PRESSURE = "p1_pressure"


_SCALAR_SPACES = (SpaceKind.P1, SpaceKind.P1_BUBBLE, SpaceKind.P1_PRESSURE)


@dataclass
class QuadRule:
    """Quadrature on the reference triangle, exact to ``degree``.

    points are barycentric rows (nq, 3); weights sum to the reference
    triangle area 1/2. All built-in rules have positive weights.
    """

    degree: int
    points: np.ndarray
    weights: np.ndarray


def _orbit3(a):
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


def _orbit6(a, b):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _make_rule(degree, groups):
    pts, wts = [], []
    for w, orbit in groups:
        pts.extend(orbit)
        wts.extend([w] * len(orbit))
    points = np.array(pts)
    weights = 0.5 * np.array(wts)  # normalize: tabulated weights sum to 1
    return QuadRule(degree, points, weights)


_RULES = {
    1: _make_rule(1, [(1.0, [(1 / 3, 1 / 3, 1 / 3)])]),
    2: _make_rule(2, [(1 / 3, _orbit3(1 / 6))]),
    4: _make_rule(
        4,
        [
            (0.223381589678011, _orbit3(0.445948490915965)),
            (0.109951743655322, _orbit3(0.091576213509771)),
        ],
    ),
    6: _make_rule(
        6,
        [
            (0.116786275726379, _orbit3(0.249286745170910)),
            (0.050844906370207, _orbit3(0.063089014491502)),
            (0.082851075618374, _orbit6(0.053145049844817, 0.310352451033784)),
        ],
    ),
}


def quad_rule(degree):
    """Smallest built-in rule exact for polynomials up to ``degree`` (1..6).

    Odd degrees without a positive-weight rule of their own are served by the
    next even rule.
    """
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= 6:
        raise ParameterError(f"quadrature degree must be an integer in 1..6, got {degree}")
    for d in (1, 2, 4, 6):
        if d >= degree:
            return _RULES[d]
    raise AssertionError("unreachable")


def _check_barycentric(point):
    lam = np.asarray(point, dtype=np.float64)
    if lam.shape != (3,):
        raise DomainError("expected a barycentric coordinate triple")
    tol = 1e-12
    if abs(lam.sum() - 1.0) > 1e-10 or (lam < -tol).any() or (lam > 1 + tol).any():
        raise DomainError(f"point {point} lies outside the reference triangle")
    return lam


def eval_basis(space, point):
    """Basis values and reference gradients at one barycentric point.

    Vector spaces report the scalar basis of one component. Returns
    ``(values (nb,), gradients (nb, 2))`` with gradients taken with respect
    to the reference coordinates (l2, l3).
    """
    lam = _check_barycentric(point)
    l1, l2, l3 = lam
    p1_vals = np.array([l1, l2, l3])
    p1_grads = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if space in (SpaceKind.P1, SpaceKind.P1_PRESSURE):
        return p1_vals, p1_grads
    if space in (SpaceKind.P1_BUBBLE, SpaceKind.MINI_VELOCITY):
        bubble = 27.0 * l1 * l2 * l3
        bgrad = 27.0 * np.array([l3 * (l1 - l2), l2 * (l1 - l3)])
        return (
            np.concatenate([p1_vals, [bubble]]),
            np.vstack([p1_grads, bgrad]),
        )
    raise ParameterError(f"unknown space {space!r}")


def basis_table(space, rule):
    """Basis values/reference gradients at every quadrature point.

    Returns ``(phi (nb, nq), dphi (nb, nq, 2))``.
    """
    cols = [eval_basis(space, p) for p in rule.points]
    phi = np.stack([v for v, _ in cols], axis=1)
    dphi = np.stack([g for _, g in cols], axis=1)
    return phi, dphi


@dataclass
class DofMap:
    """Global dof numbering: cell_dofs[t, k] is the dof of local basis k."""

    space: str
    n_dofs: int
    cell_dofs: np.ndarray


def build_dofmap(mesh, space):
    nv, nt = mesh.num_vertices, mesh.num_triangles
    if space in (SpaceKind.P1, SpaceKind.P1_PRESSURE):
        return DofMap(space, nv, mesh.triangles.copy())
    if space == SpaceKind.P1_BUBBLE:
        bubbles = nv + np.arange(nt, dtype=np.int64)[:, None]
        return DofMap(space, nv + nt, np.hstack([mesh.triangles, bubbles]))
    if space == SpaceKind.MINI_VELOCITY:
        scalar = build_dofmap(mesh, SpaceKind.P1_BUBBLE)
        cell = np.hstack([scalar.cell_dofs, scalar.cell_dofs + scalar.n_dofs])
        return DofMap(space, 2 * scalar.n_dofs, cell)
    raise ParameterError(f"unknown space {space!r}")


def scalar_dof_count(mesh):
    return mesh.num_vertices + mesh.num_triangles


@dataclass
class ElementGeometry:
    """Affine map data per triangle: determinant and inverse Jacobian."""

    det: np.ndarray  # (nt,), equals 2 * area
    jinv: np.ndarray  # (nt, 2, 2)

    @classmethod
    def from_mesh(cls, mesh):
        p = mesh.vertices[mesh.triangles]
        j11 = p[:, 1, 0] - p[:, 0, 0]
        j21 = p[:, 1, 1] - p[:, 0, 1]
        j12 = p[:, 2, 0] - p[:, 0, 0]
        j22 = p[:, 2, 1] - p[:, 0, 1]
        det = j11 * j22 - j12 * j21
        jinv = np.empty((len(det), 2, 2))
        jinv[:, 0, 0] = j22 / det
        jinv[:, 0, 1] = -j12 / det
        jinv[:, 1, 0] = -j21 / det
        jinv[:, 1, 1] = j11 / det
        return cls(det, jinv)


def physical_gradients(geom, ref_grads):
    """Map reference gradients to physical: (nb, nq, 2) -> (nt, nb, nq, 2)."""
    return np.einsum("emk,iqm->eiqk", geom.jinv, ref_grads)


def quadrature_points_xy(mesh, rule):
    """Physical coordinates of all quadrature points: (nt, nq, 2)."""
    corners = mesh.vertices[mesh.triangles]
    return np.einsum("qi,eik->eqk", rule.points, corners)


def _cellwise(coefs, dofmap):
    return coefs[dofmap.cell_dofs]


def _check_length(coefs, dofmap):
    if coefs.shape != (dofmap.n_dofs,):
        raise ShapeError(
            f"coefficient vector of length {coefs.shape} does not match "
            f"{dofmap.n_dofs} dofs of {dofmap.space}"
        )


def _scalar_quadrature_sq(mesh, coefs, dofmap, rule, derivative):
    geom = ElementGeometry.from_mesh(mesh)
    phi, dphi = basis_table(dofmap.space, rule)
    cw = _cellwise(coefs, dofmap)
    if derivative:
        grads = physical_gradients(geom, dphi)
        g = _kernels.field_gradients(cw, grads)
        dens = (g ** 2).sum(axis=2)
    else:
        vals = _kernels.field_values(cw, phi)
        dens = vals ** 2
    return float(np.einsum("q,eq,e->", rule.weights, dens, geom.det))


def _norm(mesh, space, coefs, derivative, quad_degree):
    coefs = np.asarray(coefs, dtype=np.float64)
    rule = quad_rule(quad_degree)
    if space == SpaceKind.MINI_VELOCITY:
        ns = scalar_dof_count(mesh)
        if coefs.shape != (2 * ns,):
            raise ShapeError(f"velocity vector must have length {2 * ns}")
        dm = build_dofmap(mesh, SpaceKind.P1_BUBBLE)
        sq = _scalar_quadrature_sq(mesh, coefs[:ns], dm, rule, derivative)
        sq += _scalar_quadrature_sq(mesh, coefs[ns:], dm, rule, derivative)
        return float(np.sqrt(sq))
    dm = build_dofmap(mesh, space)
    _check_length(coefs, dm)
    return float(np.sqrt(_scalar_quadrature_sq(mesh, coefs, dm, rule, derivative)))


def l2_norm(mesh, space, coefs, quad_degree=6):
    """Quadrature L2 norm of a finite element field."""
    return _norm(mesh, space, coefs, derivative=False, quad_degree=quad_degree)


def h1_seminorm(mesh, space, coefs, quad_degree=6):
    """Quadrature H1 seminorm (L2 norm of the gradient)."""
    return _norm(mesh, space, coefs, derivative=True, quad_degree=quad_degree)


def interpolate(mesh, space, fn):
    """Vertex interpolation: nodal values at vertices, zero bubble dofs.

    ``fn(x, y)`` must accept coordinate arrays; for the velocity space it
    must return an array of shape (2, n).
    """
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    if space in (SpaceKind.P1, SpaceKind.P1_PRESSURE):
        return np.asarray(fn(x, y), dtype=np.float64).copy()
    if space == SpaceKind.P1_BUBBLE:
        out = np.zeros(scalar_dof_count(mesh))
        out[: mesh.num_vertices] = fn(x, y)
        return out
    if space == SpaceKind.MINI_VELOCITY:
        ns = scalar_dof_count(mesh)
        out = np.zeros(2 * ns)
        vals = np.asarray(fn(x, y), dtype=np.float64)
        out[: mesh.num_vertices] = vals[0]
        out[ns : ns + mesh.num_vertices] = vals[1]
        return out
    raise ParameterError(f"unknown space {space!r}")
