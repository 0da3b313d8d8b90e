"""Decoupled linearly-implicit backward-Euler stepper.

One time step solves, in order: the charge transport equation, the electric
potential Poisson equation, the momentum/pressure saddle-point system, and
one transport equation per ionic species. Every sub-problem is a single
linear solve; nonlinear terms are linearized at the previous velocity, and
the drift coupling uses the previous potential, exactly as the scheme is
written. A failed solve aborts the whole step with the state unchanged.

The convection terms are assembled in skew-symmetrized form by default so
the discrete energy balance of the stability analysis holds verbatim for
velocities that are only weakly divergence-free; the plain form is available
via ``convection="plain"``.
"""

from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.sparse as sp
from scipy.special import erf

from . import assembly as asm
from . import fem
from .errors import ParameterError, SingularMatrixError, StepError
from .fem import SpaceKind
from .mesh import BoundaryTag, boundary_vertices
from .sparsela import (
    CachedDirectSolver,
    CsrMatrix,
    DirectFactor,
    SolverReport,
    solve_iterative,
)

# initial concentration profile constants (smoothed step in x)
ERF_ALPHA = 4.0e4
ERF_B1 = 100.0
ERF_B3 = 0.1
ERF_GAMMA = 50.0


@dataclass
class BcSet:
    """Boundary data: inlet velocity/concentrations, electrode potentials,
    and the wall slip coefficient xi (> 0) of the law u = -xi grad(phi)."""

    u_in: np.ndarray = dataclass_field(default_factory=lambda: np.zeros(2))
    c_in: np.ndarray = dataclass_field(default_factory=lambda: np.ones(1))
    phi_in: float = 0.0
    phi_out: float = 0.0
    xi: float = 1e-6

    def __post_init__(self):
        self.u_in = np.asarray(self.u_in, dtype=np.float64)
        self.c_in = np.asarray(self.c_in, dtype=np.float64)
        if self.u_in.shape != (2,):
            raise ParameterError("inlet velocity must be a 2-vector")
        if self.xi <= 0:
            raise ParameterError("slip coefficient xi must be positive")


@dataclass
class SimState:
    """Discrete fields at one time level.

    rho, phi and each c[i] hold scalar linear+bubble coefficients; u holds
    component-blocked velocity coefficients; p holds vertex pressures.
    """

    step: int
    time: float
    tau: float
    rho: np.ndarray
    phi: np.ndarray
    u: np.ndarray
    p: np.ndarray
    c: np.ndarray  # (M, n_scalar)


@dataclass
class EnergyRecord:
    """Per-step stability monitor: L2 norms of the transported fields and
    the H1 seminorm of the potential."""

    rho_l2: float
    u_l2: float
    phi_h1: float
    c_l2: np.ndarray

    def entries(self):
        return np.concatenate([[self.rho_l2, self.u_l2, self.phi_h1], self.c_l2])

    def all_finite(self):
        return bool(np.isfinite(self.entries()).all())


@dataclass
class Forcing:
    """Optional manufactured right-hand sides, vectorized over (x, y) at a
    fixed time: f_rho(x,y,t), f_u(x,y,t) -> (2,...), f_c(i,x,y,t)."""

    f_rho: object = None
    f_u: object = None
    f_c: object = None


def slip_velocity(phi, mesh, xi, geom=None):
    """Wall Dirichlet values of the slip law u = -xi grad(phi).

    The nodal gradient is the area-weighted average of the element gradients
    of the linear part (the bubble gradient vanishes at centroids). Returns
    ``(wall_vertex_ids, values (n, 2))``.
    """
    if geom is None:
        geom = fem.ElementGeometry.from_mesh(mesh)
    tri = mesh.triangles
    vertex_coefs = phi[tri]  # (nt, 3) linear part
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    gphys = np.einsum("emk,im->eik", geom.jinv, ref)  # (nt, 3, 2)
    egrad = np.einsum("ei,eik->ek", vertex_coefs, gphys)
    area = 0.5 * geom.det

    num = np.zeros((mesh.num_vertices, 2))
    den = np.zeros(mesh.num_vertices)
    np.add.at(num, tri.ravel(), np.repeat(egrad * area[:, None], 3, axis=0))
    np.add.at(den, tri.ravel(), np.repeat(area, 3))
    nodal = num / den[:, None]

    wall = boundary_vertices(mesh, BoundaryTag.WALL)
    return wall, -xi * nodal[wall]


class PhysicalPlan:
    """Dirichlet sets for the channel problems.

    Scalar fields give corner vertices to the inlet/outlet data; the
    velocity gives corners shared with a wall to the slip law. The outlet is
    a natural (do-nothing) boundary for the velocity, so the pressure level
    is pinned by the outlet when one exists.
    """

    def __init__(self, mesh, params, bcs, n_scalar):
        self.mesh = mesh
        self.bcs = bcs
        self.n_scalar = n_scalar
        inlet = set(boundary_vertices(mesh, BoundaryTag.INLET).tolist())
        outlet = set(boundary_vertices(mesh, BoundaryTag.OUTLET).tolist())
        wall = set(boundary_vertices(mesh, BoundaryTag.WALL).tolist())

        self.inlet = np.array(sorted(inlet), dtype=np.int64)
        self.outlet = np.array(sorted(outlet), dtype=np.int64)
        self.wall_only = np.array(sorted(wall - inlet - outlet), dtype=np.int64)
        self.slip_verts = np.array(sorted(wall), dtype=np.int64)
        self.uin_verts = np.array(sorted(inlet - wall), dtype=np.int64)
        self.has_outlet = (mesh.boundary_tags == BoundaryTag.OUTLET).any()

        if len(bcs.c_in) != params.species_count:
            raise ParameterError("c_in length must match the species count")
        self.rho_in = float(np.dot(params.valence, bcs.c_in))

    def rho_pairs(self, t):
        return self.inlet, np.full(len(self.inlet), self.rho_in)

    def phi_pairs(self, t):
        dofs = np.concatenate([self.inlet, self.outlet, self.wall_only])
        vals = np.concatenate(
            [
                np.full(len(self.inlet), self.bcs.phi_in),
                np.full(len(self.outlet), self.bcs.phi_out),
                np.zeros(len(self.wall_only)),
            ]
        )
        return dofs, vals

    def c_pairs(self, i, t):
        return self.inlet, np.full(len(self.inlet), self.bcs.c_in[i])

    def velocity_pairs(self, t, phi_for_slip, geom):
        wall, slip = slip_velocity(phi_for_slip, self.mesh, self.bcs.xi, geom)
        ns = self.n_scalar
        dofs = np.concatenate([wall, self.uin_verts, wall + ns, self.uin_verts + ns])
        vals = np.concatenate(
            [
                slip[:, 0],
                np.full(len(self.uin_verts), self.bcs.u_in[0]),
                slip[:, 1],
                np.full(len(self.uin_verts), self.bcs.u_in[1]),
            ]
        )
        return dofs, vals


class AnalyticDirichletPlan:
    """Dirichlet data taken from analytic fields on the whole boundary
    (manufactured-solution runs)."""

    def __init__(self, mesh, case, n_scalar):
        verts = np.unique(mesh.boundary_edges)
        self.dofs = verts
        self.x = mesh.vertices[verts, 0]
        self.y = mesh.vertices[verts, 1]
        self.case = case
        self.n_scalar = n_scalar
        self.has_outlet = False

    def rho_pairs(self, t):
        return self.dofs, self.case.rho(self.x, self.y, t)

    def phi_pairs(self, t):
        return self.dofs, self.case.phi(self.x, self.y, t)

    def c_pairs(self, i, t):
        return self.dofs, self.case.c(i, self.x, self.y, t)

    def velocity_pairs(self, t, phi_for_slip, geom):
        uv = self.case.u(self.x, self.y, t)
        ns = self.n_scalar
        dofs = np.concatenate([self.dofs, self.dofs + ns])
        return dofs, np.concatenate([uv[0], uv[1]])


class Stepper:
    """Advances the coupled system one backward-Euler step at a time."""

    def __init__(
        self,
        mesh,
        params,
        bcs=None,
        tau=1e-7,
        *,
        forcing=None,
        plan=None,
        convection="skew",
        solver="direct",
        solver_tol=1e-10,
        slip_potential="current",
        quad_degree=6,
    ):
        if convection not in ("skew", "plain"):
            raise ParameterError("convection must be 'skew' or 'plain'")
        if solver not in ("direct", "iterative"):
            raise ParameterError("solver must be 'direct' or 'iterative'")
        if slip_potential not in ("current", "lagged"):
            raise ParameterError("slip_potential must be 'current' or 'lagged'")
        if tau <= 0:
            raise ParameterError("time step must be positive")

        self.mesh = mesh
        self.params = params
        self.bcs = bcs
        self.tau = float(tau)
        self.skew = convection == "skew"
        self.solver = solver
        self.solver_tol = solver_tol
        self.slip_potential = slip_potential
        self.forcing = forcing or Forcing()

        self.ctx = asm.FormContext(mesh, quad_degree)
        ns = self.ctx.n_scalar
        if plan is None:
            if bcs is None:
                raise ParameterError("physical runs need boundary data")
            plan = PhysicalPlan(mesh, params, bcs, ns)
        self.plan = plan

        # time-independent operators
        self.M_s = asm.mass_matrix(self.ctx)
        self.K_s = asm.stiffness_matrix(self.ctx)
        self.M_v = asm.mass_matrix(self.ctx, SpaceKind.MINI_VELOCITY)
        self.K_v = asm.stiffness_matrix(self.ctx, space=SpaceKind.MINI_VELOCITY)
        self.B = asm.divergence_matrix(self.ctx)
        self.p_integral = asm.pressure_integral_vector(self.ctx)
        self.area = float(self.ctx.geom.det.sum() / 2)

        # the potential operator never changes: factor it once
        self._phi_dofs, _ = self.plan.phi_pairs(0.0)
        A_phi = CsrMatrix(self.params.permittivity * self.K_s.scipy)
        self._A_phi_raw = A_phi
        A_bc, _ = asm.apply_dirichlet(A_phi, np.zeros(ns), (self._phi_dofs, np.zeros(len(self._phi_dofs))))
        self._phi_factor = DirectFactor(A_bc) if solver == "direct" else None
        self._A_phi_bc = A_bc

        # per-equation cached factorizations (refreshed automatically when
        # the coefficients drift too far between steps)
        self._cached = {}

    # -- linear solve helpers ------------------------------------------------

    def _solve(self, A, b, what):
        try:
            if self.solver == "direct":
                solver = self._cached.get(what)
                if solver is None:
                    solver = self._cached[what] = CachedDirectSolver()
                return solver.solve(A, b)
            x, report = solve_iterative(A, b, tol=self.solver_tol)
            if not report.success:
                raise StepError(f"{what} solve did not converge", report)
            return x
        except SingularMatrixError as exc:
            report = SolverReport(0, float("inf"), False)
            raise StepError(f"{what} solve failed: {exc}", report) from exc

    def _scalar_system(self, kappa, conv, drift_scaled):
        A = self.M_s.scipy * (1.0 / self.tau) + kappa * self.K_s.scipy
        if conv is not None:
            A = A + conv.scipy
        if drift_scaled is not None:
            A = A + drift_scaled
        return CsrMatrix(A)

    def _forcing_load_scalar(self, fn, t):
        if fn is None:
            return None
        xq = self.ctx.quad_xy[:, :, 0]
        yq = self.ctx.quad_xy[:, :, 1]
        return asm.scalar_load_vector(self.ctx, np.asarray(fn(xq, yq, t)))

    def _forcing_load_velocity(self, t):
        if self.forcing.f_u is None:
            return None
        xq = self.ctx.quad_xy[:, :, 0]
        yq = self.ctx.quad_xy[:, :, 1]
        fu = np.asarray(self.forcing.f_u(xq, yq, t))  # (2, nt, nq)
        return asm.velocity_load_vector(self.ctx, np.moveaxis(fu, 0, -1))

    # -- the four sub-steps --------------------------------------------------

    def step_charge(self, state, t, conv_prev=None, drift_prev=None):
        """Transport solve for the charge density at the new time level."""
        p = self.params
        if conv_prev is None:
            conv_prev = asm.convection_matrix(self.ctx, state.u, skew=self.skew)
        if drift_prev is None:
            drift_prev = asm.drift_matrix(self.ctx, state.phi, 1.0)
        A = self._scalar_system(p.averaged_diffusivity, conv_prev, None)
        rhs = self.M_s @ state.rho / self.tau
        coupling = p.mobility * p.valence**2
        for i in range(p.species_count):
            rhs -= coupling[i] * (drift_prev @ state.c[i])
        load = self._forcing_load_scalar(self.forcing.f_rho, t)
        if load is not None:
            rhs += load
        A_bc, b_bc = asm.apply_dirichlet(A, rhs, self.plan.rho_pairs(t))
        return self._solve(A_bc, b_bc, "charge")

    def step_potential(self, rho, t):
        """Poisson solve driven by the charge density."""
        dofs, vals = self.plan.phi_pairs(t)
        b = self.M_s @ rho
        g = np.zeros(self.ctx.n_scalar)
        g[dofs] = vals
        b = b - self._A_phi_raw @ g
        b[dofs] = vals
        if self._phi_factor is not None:
            try:
                return self._phi_factor.solve(b)
            except SingularMatrixError as exc:
                raise StepError(f"potential solve failed: {exc}") from exc
        return self._solve(self._A_phi_bc, b, "potential")

    def step_stokes(self, state, rho_n, phi_n, t, conv_prev=None):
        """One linearized momentum/pressure saddle-point solve."""
        p = self.params
        ns, nu, npr = self.ctx.n_scalar, self.ctx.n_velocity, self.ctx.n_pressure
        if conv_prev is None:
            conv_prev = asm.convection_matrix(self.ctx, state.u, skew=self.skew)
        conv_v = sp.block_diag((conv_prev.scipy, conv_prev.scipy), format="csr")
        A_v = self.M_v.scipy * (1.0 / self.tau) + p.viscosity * self.K_v.scipy + conv_v

        rhs_v = self.M_v @ state.u / self.tau
        rhs_v += asm.body_force_vector(self.ctx, rho_n, phi_n)
        load = self._forcing_load_velocity(t)
        if load is not None:
            rhs_v += load

        Bm = self.B.scipy
        use_gauge = not self.plan.has_outlet
        if use_gauge:
            # Velocity Dirichlet everywhere leaves the pressure defined up to
            # a constant: border the system with one scalar multiplier tied
            # to a single pressure dof (a dense mean-value row would destroy
            # the sparse factorization), then shift to the zero-mean gauge.
            e_col = sp.csr_matrix(
                (np.ones(1), (np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64))),
                shape=(npr, 1),
            )
            blocks = [
                [A_v, Bm.T, None],
                [Bm, None, e_col],
                [None, e_col.T, None],
            ]
            rhs = np.concatenate([rhs_v, np.zeros(npr), [0.0]])
        else:
            blocks = [[A_v, Bm.T], [Bm, None]]
            rhs = np.concatenate([rhs_v, np.zeros(npr)])
        A = CsrMatrix(sp.bmat(blocks, format="csr"))

        phi_for_slip = phi_n if self.slip_potential == "current" else state.phi
        pairs = self.plan.velocity_pairs(t, phi_for_slip, self.ctx.geom)
        A_bc, b_bc = asm.apply_dirichlet(A, rhs, pairs)
        x = self._solve(A_bc, b_bc, "momentum")
        u_n = x[:nu]
        p_n = x[nu : nu + npr]
        # zero-mean gauge; the velocity is unaffected
        p_n = p_n - (self.p_integral @ p_n) / self.area
        return u_n, p_n

    def step_concentration(self, state, u_n, i, t, conv_n=None, drift_prev=None):
        """Transport solve for species i; drift uses the lagged potential."""
        p = self.params
        if conv_n is None:
            conv_n = asm.convection_matrix(self.ctx, u_n, skew=self.skew)
        if drift_prev is None:
            drift_prev = asm.drift_matrix(self.ctx, state.phi, 1.0)
        nz = p.mobility[i] * p.valence[i]
        A = self._scalar_system(p.diffusivity[i], conv_n, nz * drift_prev.scipy)
        rhs = self.M_s @ state.c[i] / self.tau
        load = self._forcing_load_scalar(
            None if self.forcing.f_c is None else (lambda x, y, tt: self.forcing.f_c(i, x, y, tt)),
            t,
        )
        if load is not None:
            rhs += load
        A_bc, b_bc = asm.apply_dirichlet(A, rhs, self.plan.c_pairs(i, t))
        return self._solve(A_bc, b_bc, f"species {i}")

    # -- orchestration ---------------------------------------------------------

    def energies(self, state):
        rho_l2 = float(np.sqrt(max(state.rho @ (self.M_s @ state.rho), 0.0)))
        u_l2 = float(np.sqrt(max(state.u @ (self.M_v @ state.u), 0.0)))
        phi_h1 = float(np.sqrt(max(state.phi @ (self.K_s @ state.phi), 0.0)))
        c_l2 = np.sqrt(
            np.maximum([ci @ (self.M_s @ ci) for ci in state.c], 0.0)
        )
        return EnergyRecord(rho_l2, u_l2, phi_h1, c_l2)

    def advance(self, state):
        """Run one full step; returns the new state and its energy record.

        Sub-steps share the per-step operators (previous-velocity convection,
        previous-potential drift). Any failure leaves ``state`` untouched.
        """
        t = state.time + self.tau
        conv_prev = asm.convection_matrix(self.ctx, state.u, skew=self.skew)
        drift_prev = asm.drift_matrix(self.ctx, state.phi, 1.0)

        rho_n = self.step_charge(state, t, conv_prev, drift_prev)
        phi_n = self.step_potential(rho_n, t)
        u_n, p_n = self.step_stokes(state, rho_n, phi_n, t, conv_prev)
        conv_n = asm.convection_matrix(self.ctx, u_n, skew=self.skew)
        c_n = np.stack(
            [
                self.step_concentration(state, u_n, i, t, conv_n, drift_prev)
                for i in range(self.params.species_count)
            ]
        )

        new_state = SimState(state.step + 1, t, self.tau, rho_n, phi_n, u_n, p_n, c_n)
        return new_state, self.energies(new_state)

    def zero_state(self):
        ns, nu, npr = self.ctx.n_scalar, self.ctx.n_velocity, self.ctx.n_pressure
        return SimState(
            0,
            0.0,
            self.tau,
            np.zeros(ns),
            np.zeros(ns),
            np.zeros(nu),
            np.zeros(npr),
            np.zeros((self.params.species_count, ns)),
        )

    def initial_state(self):
        """Charge-neutral initial data from the smoothed-step profiles.

        Defined for the three-species setup: c1 and c3 follow the erf
        profiles, c2 balances the charge exactly, so the initial charge
        density vanishes identically and the initial potential solve uses
        only boundary data. Velocity and pressure start at rest.
        """
        p = self.params
        if p.species_count != 3:
            raise ParameterError("the built-in initial profiles require 3 species")
        state = self.zero_state()
        nv = self.mesh.num_vertices
        x = self.mesh.vertices[:, 0]
        c1, c2, c3 = species_profiles(x, p.valence)
        state.c[0, :nv] = c1
        state.c[1, :nv] = c2
        state.c[2, :nv] = c3
        z1, z2, z3 = p.valence
        # associate the sum as in the c2 construction so the neutrality
        # identity cancels exactly in floating point
        state.rho = (z1 * state.c[0] + z3 * state.c[2]) + z2 * state.c[1]
        state.phi = self.step_potential(state.rho, 0.0)
        return state


def species_profiles(x, valence):
    """Initial concentrations: smoothed step in x for species 1 and 3, with
    species 2 chosen so the net charge is identically zero."""
    c1 = 0.5 * ERF_B1 * (ERF_GAMMA + 1 - (ERF_GAMMA - 1) * erf(ERF_ALPHA * np.asarray(x)))
    c3 = ERF_B3 * (1 + erf(ERF_ALPHA * np.asarray(x)))
    z1, z2, z3 = valence
    c2 = -(z1 * c1 + z3 * c3) / z2
    return c1, c2, c3


def run_transient(stepper, state, n_steps, on_step=None):
    """March ``n_steps`` steps, collecting the energy records."""
    records = []
    for _ in range(n_steps):
        state, rec = stepper.advance(state)
        records.append(rec)
        if on_step is not None:
            on_step(state, rec)
    return state, records
