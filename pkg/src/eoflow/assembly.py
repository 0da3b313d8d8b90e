"""Assembly of the bilinear forms and load vectors of the discrete system.

Every operator is assembled element by element with a degree-6 quadrature
rule (exact for the worst bubble-bubble-gradient integrand) into triplets and
compressed to CSR. Coefficient fields entering a form (wind, potential,
charge) are evaluated at quadrature points from their scalar linear+bubble
expansions.

Velocity dofs are component-blocked: all x-dofs first, then all y-dofs, each
block ordered as the scalar space (vertices then bubbles).
"""

from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.sparse as sp

from . import _kernels, fem
from .errors import ConstraintError, ParameterError, ShapeError
from .fem import SpaceKind
from .sparsela import CsrMatrix, TripletBuffer, compress


@dataclass
class PhysParams:
    """Physical constants of the coupled model.

    ``mobility``, ``diffusivity`` and ``valence`` are per-species arrays of
    one common length M. The charge diffusivity is the arithmetic mean of the
    species diffusivities.
    """

    viscosity: float = 1.0
    permittivity: float = 1.0
    mobility: np.ndarray = dataclass_field(default_factory=lambda: np.array([1.0]))
    diffusivity: np.ndarray = dataclass_field(default_factory=lambda: np.array([1.0]))
    valence: np.ndarray = dataclass_field(default_factory=lambda: np.array([1.0]))

    def __post_init__(self):
        self.mobility = np.asarray(self.mobility, dtype=np.float64)
        self.diffusivity = np.asarray(self.diffusivity, dtype=np.float64)
        self.valence = np.asarray(self.valence, dtype=np.float64)
        if not (len(self.mobility) == len(self.diffusivity) == len(self.valence)):
            raise ParameterError("per-species parameter arrays must have equal length")
        if self.species_count < 1:
            raise ParameterError("at least one species is required")
        if (self.diffusivity <= 0).any():
            raise ParameterError("species diffusivities must be positive")
        if self.viscosity <= 0:
            raise ParameterError("viscosity must be positive")
        if self.permittivity <= 0:
            raise ParameterError("permittivity must be positive")

    @property
    def species_count(self):
        return len(self.diffusivity)

    @property
    def averaged_diffusivity(self):
        return float(self.diffusivity.mean())


class FormContext:
    """Per-mesh precomputed tables shared by all forms.

    Holds the quadrature rule, basis values, mapped gradients, and the dof
    maps of the scalar, velocity and pressure spaces. Read-only during
    assembly.
    """

    def __init__(self, mesh, quad_degree=6):
        self.mesh = mesh
        self.rule = fem.quad_rule(quad_degree)
        self.geom = fem.ElementGeometry.from_mesh(mesh)
        self.scalar_map = fem.build_dofmap(mesh, SpaceKind.P1_BUBBLE)
        self.velocity_map = fem.build_dofmap(mesh, SpaceKind.MINI_VELOCITY)
        self.pressure_map = fem.build_dofmap(mesh, SpaceKind.P1_PRESSURE)

        self.phi_s, dphi_s = fem.basis_table(SpaceKind.P1_BUBBLE, self.rule)
        self.grad_s = fem.physical_gradients(self.geom, dphi_s)
        self.phi_p, _ = fem.basis_table(SpaceKind.P1_PRESSURE, self.rule)
        self.quad_xy = fem.quadrature_points_xy(mesh, self.rule)

    @property
    def n_scalar(self):
        return self.scalar_map.n_dofs

    @property
    def n_velocity(self):
        return self.velocity_map.n_dofs

    @property
    def n_pressure(self):
        return self.pressure_map.n_dofs

    def check_scalar(self, coefs, name="field"):
        coefs = np.asarray(coefs, dtype=np.float64)
        if coefs.shape != (self.n_scalar,):
            raise ShapeError(f"{name} must have {self.n_scalar} scalar dofs")
        return coefs

    def check_velocity(self, coefs, name="velocity"):
        coefs = np.asarray(coefs, dtype=np.float64)
        if coefs.shape != (self.n_velocity,):
            raise ShapeError(f"{name} must have {self.n_velocity} velocity dofs")
        return coefs

    def scalar_at_quadrature(self, coefs):
        return _kernels.field_values(coefs[self.scalar_map.cell_dofs], self.phi_s)

    def scalar_grad_at_quadrature(self, coefs):
        return _kernels.field_gradients(coefs[self.scalar_map.cell_dofs], self.grad_s)

    def velocity_at_quadrature(self, coefs):
        ns = self.n_scalar
        wx = _kernels.field_values(coefs[:ns][self.scalar_map.cell_dofs], self.phi_s)
        wy = _kernels.field_values(coefs[ns:][self.scalar_map.cell_dofs], self.phi_s)
        return np.stack([wx, wy], axis=2)


def _assemble_scalar(ctx, local):
    dm = ctx.scalar_map
    nb = dm.cell_dofs.shape[1]
    rows = np.repeat(dm.cell_dofs, nb, axis=1)
    cols = np.tile(dm.cell_dofs, (1, nb))
    buf = TripletBuffer(dm.n_dofs, dm.n_dofs)
    buf.add_batch(rows, cols, local)
    return compress(buf)


def _block_diag_velocity(ctx, scalar_matrix):
    m = scalar_matrix.scipy
    return CsrMatrix(sp.block_diag((m, m), format="csr"))


def _local_zeros(ctx, nb=4):
    return np.zeros((ctx.mesh.num_triangles, nb, nb))


def mass_matrix(ctx, space=SpaceKind.P1_BUBBLE):
    """Mass matrix (u, v); symmetric positive definite."""
    local = _kernels.local_mass(ctx.geom.det, ctx.rule.weights, ctx.phi_s)
    scalar = _assemble_scalar(ctx, local)
    if space == SpaceKind.MINI_VELOCITY:
        return _block_diag_velocity(ctx, scalar)
    return scalar


def stiffness_matrix(ctx, kappa=1.0, space=SpaceKind.P1_BUBBLE):
    """Diffusion matrix kappa * (grad u, grad v)."""
    if kappa <= 0:
        raise ParameterError("diffusion coefficient must be positive")
    local = _kernels.local_stiffness(
        ctx.geom.det, ctx.rule.weights, ctx.grad_s, _local_zeros(ctx)
    )
    scalar = _assemble_scalar(ctx, kappa * local)
    if space == SpaceKind.MINI_VELOCITY:
        return _block_diag_velocity(ctx, scalar)
    return scalar


def convection_matrix(ctx, wind, skew=True, space=SpaceKind.P1_BUBBLE):
    """Transport by a velocity field: (w . grad u, v).

    With ``skew=True`` the skew-symmetrized form
    (1/2)[(w . grad u, v) - (w . grad v, u)] is returned, which contributes
    exactly zero to the energy balance regardless of the discrete divergence
    of the wind. The plain form of the written scheme sits behind
    ``skew=False``.
    """
    wind = ctx.check_velocity(wind, "wind")
    wq = ctx.velocity_at_quadrature(wind)
    local = _kernels.local_convection(
        ctx.geom.det, ctx.rule.weights, ctx.phi_s, ctx.grad_s, wq, _local_zeros(ctx)
    )
    scalar = _assemble_scalar(ctx, local)
    if skew:
        half = 0.5 * (scalar.scipy - scalar.scipy.T)
        scalar = CsrMatrix(half)
    if space == SpaceKind.MINI_VELOCITY:
        return _block_diag_velocity(ctx, scalar)
    return scalar


def drift_matrix(ctx, potential, gamma=1.0):
    """Electro-drift coupling: entries gamma * int c_j (grad phi . grad psi_i).

    Row index runs over test functions psi, column index over the
    concentration expansion; multiplying by a known concentration vector
    contracts the form to a load vector.
    """
    potential = ctx.check_scalar(potential, "potential")
    if gamma == 0.0:
        n = ctx.n_scalar
        return CsrMatrix(sp.csr_matrix((n, n)))
    gphi = ctx.scalar_grad_at_quadrature(potential)
    local = _kernels.local_drift(
        ctx.geom.det, ctx.rule.weights, ctx.phi_s, ctx.grad_s, gphi, _local_zeros(ctx)
    )
    return _assemble_scalar(ctx, gamma * local)


def divergence_matrix(ctx):
    """Constraint matrix B with (q, u) entries -int q (div u).

    Shape (n_pressure, n_velocity); the momentum block uses its transpose,
    so that the saddle system reads [[A, B^T], [B, 0]].
    """
    local = _kernels.local_divergence(
        ctx.geom.det,
        ctx.rule.weights,
        ctx.phi_p,
        ctx.grad_s,
        np.zeros((ctx.mesh.num_triangles, 3, 4, 2)),
    )
    ns = ctx.n_scalar
    buf = TripletBuffer(ctx.n_pressure, ctx.n_velocity)
    pd = ctx.pressure_map.cell_dofs
    sd = ctx.scalar_map.cell_dofs
    rows = np.repeat(pd, 4, axis=1)
    cols = np.tile(sd, (1, 3))
    buf.add_batch(rows, cols, local[:, :, :, 0].reshape(len(pd), -1))
    buf.add_batch(rows, cols + ns, local[:, :, :, 1].reshape(len(pd), -1))
    return compress(buf)


def body_force_vector(ctx, rho, potential):
    """Electric body force load (rho grad phi, v) on velocity dofs."""
    rho = ctx.check_scalar(rho, "charge density")
    potential = ctx.check_scalar(potential, "potential")
    rq = ctx.scalar_at_quadrature(rho)
    gphi = ctx.scalar_grad_at_quadrature(potential)
    out = np.zeros(ctx.n_velocity)
    for k in range(2):
        local = _kernels.local_load(
            ctx.geom.det,
            ctx.rule.weights,
            ctx.phi_s,
            rq * gphi[:, :, k],
            np.zeros((ctx.mesh.num_triangles, 4)),
        )
        np.add.at(out, ctx.scalar_map.cell_dofs + k * ctx.n_scalar, local)
    return out


def scalar_load_vector(ctx, values_at_quadrature):
    """Load vector (f, psi) from f sampled at the quadrature points."""
    local = _kernels.local_load(
        ctx.geom.det,
        ctx.rule.weights,
        ctx.phi_s,
        values_at_quadrature,
        np.zeros((ctx.mesh.num_triangles, 4)),
    )
    out = np.zeros(ctx.n_scalar)
    np.add.at(out, ctx.scalar_map.cell_dofs, local)
    return out


def velocity_load_vector(ctx, values_at_quadrature):
    """Load vector (f, v) from a vector field sampled as (nt, nq, 2)."""
    out = np.zeros(ctx.n_velocity)
    for k in range(2):
        local = _kernels.local_load(
            ctx.geom.det,
            ctx.rule.weights,
            ctx.phi_s,
            values_at_quadrature[:, :, k],
            np.zeros((ctx.mesh.num_triangles, 4)),
        )
        np.add.at(out, ctx.scalar_map.cell_dofs + k * ctx.n_scalar, local)
    return out


def pressure_integral_vector(ctx):
    """Vector m with m_q = int q dx (used to pin the pressure mean)."""
    local = _kernels.local_load(
        ctx.geom.det,
        ctx.rule.weights,
        ctx.phi_p,
        np.ones((ctx.mesh.num_triangles, len(ctx.rule.weights))),
        np.zeros((ctx.mesh.num_triangles, 3)),
    )
    out = np.zeros(ctx.n_pressure)
    np.add.at(out, ctx.pressure_map.cell_dofs, local)
    return out


def collect_dirichlet(pairs):
    """Merge (dof, value) pairs, rejecting conflicting duplicates."""
    seen = {}
    for dof, value in pairs:
        dof = int(dof)
        if dof in seen and seen[dof] != value:
            raise ConstraintError(
                f"conflicting Dirichlet values {seen[dof]} and {value} for dof {dof}"
            )
        seen[dof] = float(value)
    dofs = np.fromiter(seen.keys(), dtype=np.int64, count=len(seen))
    vals = np.fromiter(seen.values(), dtype=np.float64, count=len(seen))
    order = np.argsort(dofs)
    return dofs[order], vals[order]


def apply_dirichlet(A, b, pairs):
    """Constrain dofs by symmetric elimination.

    Constrained rows become identity rows with the prescribed value on the
    right-hand side; the corresponding columns are folded into the RHS so
    symmetric operators stay symmetric. An empty constraint list returns
    copies with identical content.
    """
    b = np.asarray(b, dtype=np.float64)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ShapeError("apply_dirichlet expects a square system matching b")
    dofs, values = pairs if isinstance(pairs, tuple) else collect_dirichlet(pairs)
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if len(dofs) == 0:
        return A.copy(), b.copy()
    if len(dofs) != len(np.unique(dofs)):
        raise ConstraintError("duplicate dofs in constraint arrays")
    if dofs.min() < 0 or dofs.max() >= A.shape[0]:
        raise ShapeError("constraint dof index out of range")

    n = A.shape[0]
    g = np.zeros(n)
    g[dofs] = values
    b_new = b - A @ g
    b_new[dofs] = values

    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags(keep)
    eye_rows = sp.coo_matrix((np.ones(len(dofs)), (dofs, dofs)), shape=(n, n))
    A_new = D @ A.scipy @ D + eye_rows
    return CsrMatrix(A_new), b_new
