"""Convergence-rate tables, stability sweeps, and the qualitative studies.

Spatial rates are measured against the analytic manufactured fields at the
final time with the time step slaved to h^2 so the temporal error stays
subdominant. Temporal rates are measured against a same-mesh reference run
with a much smaller step, which cancels the fixed spatial error and isolates
the first-order-in-tau behavior (a time-independent manufactured solution
then sits at the solver-tolerance floor, as it should).
"""

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import _kernels, assembly as asm, fem, mesh as meshmod
from .fem import SpaceKind
from .mesh import BoundaryTag
from .scheme import AnalyticDirichletPlan, Forcing, SimState, Stepper, run_transient

STAGNATION_FACTOR = 1e-3
CIRCULATION_CONSISTENCY = 0.5


# ---------------------------------------------------------------------------
# error measurement against analytic fields


def _scalar_error(ctx, coefs, exact, exact_grad, t):
    xq = ctx.quad_xy[:, :, 0]
    yq = ctx.quad_xy[:, :, 1]
    vals = ctx.scalar_at_quadrature(np.asarray(coefs))
    diff = vals - exact(xq, yq, t)
    l2 = np.einsum("q,eq,e->", ctx.rule.weights, diff**2, ctx.geom.det)
    g = ctx.scalar_grad_at_quadrature(np.asarray(coefs))
    ge = exact_grad(xq, yq, t)
    gdiff = g - np.moveaxis(ge, 0, -1)
    h1 = np.einsum("q,eq,e->", ctx.rule.weights, (gdiff**2).sum(axis=2), ctx.geom.det)
    return math.sqrt(max(l2, 0.0)), math.sqrt(max(h1, 0.0))


def _velocity_error(ctx, coefs, exact, exact_grad, t):
    ns = ctx.n_scalar
    xq = ctx.quad_xy[:, :, 0]
    yq = ctx.quad_xy[:, :, 1]
    ue = exact(xq, yq, t)
    ge = exact_grad(xq, yq, t)
    l2 = 0.0
    h1 = 0.0
    for k in range(2):
        comp = np.asarray(coefs)[k * ns : (k + 1) * ns]
        vals = ctx.scalar_at_quadrature(comp)
        diff = vals - ue[k]
        l2 += np.einsum("q,eq,e->", ctx.rule.weights, diff**2, ctx.geom.det)
        g = ctx.scalar_grad_at_quadrature(comp)
        gdiff = g - np.moveaxis(ge[k], 0, -1)
        h1 += np.einsum("q,eq,e->", ctx.rule.weights, (gdiff**2).sum(axis=2), ctx.geom.det)
    return math.sqrt(max(l2, 0.0)), math.sqrt(max(h1, 0.0))


def _pressure_error(ctx, coefs, exact, t):
    xq = ctx.quad_xy[:, :, 0]
    yq = ctx.quad_xy[:, :, 1]
    cw = np.asarray(coefs)[ctx.pressure_map.cell_dofs]
    vals = _kernels.field_values(cw, ctx.phi_p)
    diff = vals - exact(xq, yq, t)
    l2 = np.einsum("q,eq,e->", ctx.rule.weights, diff**2, ctx.geom.det)
    return math.sqrt(max(l2, 0.0)), float("nan")


def state_errors(ctx, state, case, t):
    """Per-field (L2, H1-seminorm) errors against the analytic fields."""
    errors = {
        "rho": _scalar_error(ctx, state.rho, case.rho, case.grad_rho, t),
        "phi": _scalar_error(ctx, state.phi, case.phi, case.grad_phi, t),
        "u": _velocity_error(ctx, state.u, case.u, case.grad_u, t),
        "p": _pressure_error(ctx, state.p, case.p, t),
    }
    for i in range(case.params.species_count):
        errors[f"c{i + 1}"] = _scalar_error(
            ctx,
            state.c[i],
            lambda x, y, tt, i=i: case.c(i, x, y, tt),
            lambda x, y, tt, i=i: case.grad_c(i, x, y, tt),
            t,
        )
    return errors


# ---------------------------------------------------------------------------
# rate tables


@dataclass
class RateTable:
    """Errors across refinement levels and least-squares fitted slopes.

    ``entries`` rows are (level, h, tau, {field: (l2, h1)}); slopes are
    fitted on log-log data across all levels with nonzero errors.
    """

    axis: str  # "h" or "tau"
    entries: list = dataclass_field(default_factory=list)

    def add(self, level, h, tau, errors):
        self.entries.append((level, h, tau, errors))

    @property
    def fields(self):
        return list(self.entries[0][3].keys()) if self.entries else []

    def _series(self, field, which):
        idx = 0 if which == "l2" else 1
        xs = np.array([e[1] if self.axis == "h" else e[2] for e in self.entries])
        ys = np.array([e[3][field][idx] for e in self.entries])
        return xs, ys

    def slope(self, field, which="l2", skip_coarsest=0):
        xs, ys = self._series(field, which)
        xs, ys = xs[skip_coarsest:], ys[skip_coarsest:]
        good = ys > 0
        if good.sum() < 2 or not np.isfinite(ys[good]).all():
            return float("nan")
        return float(np.polyfit(np.log(xs[good]), np.log(ys[good]), 1)[0])

    def slopes(self, which="l2"):
        return {f: self.slope(f, which) for f in self.fields}

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("level,h,tau,field,L2,H1,slope\n")
            for level, h, tau, errors in self.entries:
                for f, (l2, h1) in errors.items():
                    fh.write(
                        f"{level},{h:.17g},{tau:.17g},{f},{l2:.17g},{h1:.17g},"
                        f"{self.slope(f):.6g}\n"
                    )


def _interpolated_state(stepper, case, t=0.0):
    mesh = stepper.mesh
    state = stepper.zero_state()
    state.time = t
    state.rho = fem.interpolate(mesh, SpaceKind.P1_BUBBLE, lambda x, y: case.rho(x, y, t))
    state.phi = fem.interpolate(mesh, SpaceKind.P1_BUBBLE, lambda x, y: case.phi(x, y, t))
    state.u = fem.interpolate(mesh, SpaceKind.MINI_VELOCITY, lambda x, y: case.u(x, y, t))
    state.p = fem.interpolate(mesh, SpaceKind.P1_PRESSURE, lambda x, y: case.p(x, y, t))
    for i in range(case.params.species_count):
        state.c[i] = fem.interpolate(
            mesh, SpaceKind.P1_BUBBLE, lambda x, y: case.c(i, x, y, t)
        )
    return state


def make_mms_stepper(case, mesh, tau, convection="skew", quad_degree=6):
    """Stepper with all-boundary analytic Dirichlet data and forcing."""
    ns = fem.scalar_dof_count(mesh)
    plan = AnalyticDirichletPlan(mesh, case, ns)
    forcing = Forcing(f_rho=case.f_rho, f_u=case.f_u, f_c=case.f_c)
    return Stepper(
        mesh,
        case.params,
        bcs=None,
        tau=tau,
        forcing=forcing,
        plan=plan,
        convection=convection,
        quad_degree=quad_degree,
    )


def run_mms_case(case, mesh, tau, T, convection="skew"):
    """March the manufactured problem from interpolated initial data to T."""
    n_steps = max(1, round(T / tau))
    tau = T / n_steps
    stepper = make_mms_stepper(case, mesh, tau, convection)
    state = _interpolated_state(stepper, case, 0.0)
    state, _ = run_transient(stepper, state, n_steps)
    return stepper, state


def run_mms_spatial(case, levels=4, base_n=8, T=0.1, convection="skew"):
    """Uniform-refinement error table with tau = h^2/4 at each level."""
    table = RateTable(axis="h")
    for level in range(levels):
        n = base_n * 2**level
        mesh = meshmod.unit_square_mesh(n)
        tau = mesh.h_max**2 / 4
        stepper, state = run_mms_case(case, mesh, tau, T, convection)
        errors = state_errors(stepper.ctx, state, case, state.time)
        table.add(level, mesh.h_max, state.tau, errors)
    return table


def _difference_errors(stepper, state, ref_state):
    """Coefficient-space L2/H1 errors between two same-mesh states."""
    M, K = stepper.M_s, stepper.K_s
    Mv, Kv = stepper.M_v, stepper.K_v

    def scalar(d):
        return (
            math.sqrt(max(d @ (M @ d), 0.0)),
            math.sqrt(max(d @ (K @ d), 0.0)),
        )

    du = state.u - ref_state.u
    dp = state.p - ref_state.p
    errors = {
        "rho": scalar(state.rho - ref_state.rho),
        "phi": scalar(state.phi - ref_state.phi),
        "u": (
            math.sqrt(max(du @ (Mv @ du), 0.0)),
            math.sqrt(max(du @ (Kv @ du), 0.0)),
        ),
    }
    # vertex pressure difference measured with the scalar mass restricted
    nv = stepper.mesh.num_vertices
    dps = np.zeros(stepper.ctx.n_scalar)
    dps[:nv] = dp
    errors["p"] = (math.sqrt(max(dps @ (M @ dps), 0.0)), float("nan"))
    for i in range(state.c.shape[0]):
        errors[f"c{i + 1}"] = scalar(state.c[i] - ref_state.c[i])
    return errors


def run_mms_temporal(case, taus=None, n=64, T=0.1, ref_divisor=8, convection="skew"):
    """Fixed-mesh tau-refinement table against a small-tau reference run."""
    if taus is None:
        taus = [T / 10, T / 20, T / 40, T / 80]
    mesh = meshmod.unit_square_mesh(n)
    tau_ref = min(taus) / ref_divisor
    _, ref_state = run_mms_case(case, mesh, tau_ref, T, convection)

    table = RateTable(axis="tau")
    for level, tau in enumerate(sorted(taus, reverse=True)):
        stepper, state = run_mms_case(case, mesh, tau, T, convection)
        errors = _difference_errors(stepper, state, ref_state)
        table.add(level, mesh.h_max, state.tau, errors)
    return table


def consistency_residuals(case, ns=(8, 16, 32), tau_factor=1.0):
    """Transport-equation residuals of the interpolated analytic fields.

    For each mesh the assembled charge and species systems (coefficients
    frozen at interpolated analytic data, tau tied to h^2) are applied to
    the interpolated solution at the new time. The residual acts on test
    functions, so it is a functional: it is measured in the discrete dual of
    the H1 norm (one SPD solve against mass + stiffness) and must vanish as
    h -> 0 at first order or better when the hard-coded forcing is correct.
    """
    from .sparsela import DirectFactor

    out = []
    for n in ns:
        mesh = meshmod.unit_square_mesh(n)
        tau = tau_factor * mesh.h_max**2
        stepper = make_mms_stepper(case, mesh, tau)
        ctx = stepper.ctx
        state0 = _interpolated_state(stepper, case, 0.0)
        t1 = tau
        state1 = _interpolated_state(stepper, case, t1)

        conv = asm.convection_matrix(ctx, state0.u, skew=stepper.skew)
        drift = asm.drift_matrix(ctx, state0.phi, 1.0)
        interior = np.ones(ctx.n_scalar, dtype=bool)
        interior[np.unique(mesh.boundary_edges)] = False
        riesz = DirectFactor(
            asm.CsrMatrix(stepper.M_s.scipy + stepper.K_s.scipy)
        )

        def dual_norm(r):
            r = np.where(interior, r, 0.0)
            return math.sqrt(max(float(r @ riesz.solve(r)), 0.0))

        res = {}
        p = case.params
        A = stepper._scalar_system(p.averaged_diffusivity, conv, None)
        rhs = stepper.M_s @ state0.rho / tau
        coupling = p.mobility * p.valence**2
        for i in range(p.species_count):
            rhs -= coupling[i] * (drift @ state0.c[i])
        rhs += stepper._forcing_load_scalar(case.f_rho, t1)
        res["rho"] = dual_norm(A @ state1.rho - rhs)

        conv1 = asm.convection_matrix(ctx, state1.u, skew=stepper.skew)
        for i in range(p.species_count):
            nz = p.mobility[i] * p.valence[i]
            Ai = stepper._scalar_system(p.diffusivity[i], conv1, nz * drift.scipy)
            rhs_i = stepper.M_s @ state0.c[i] / tau
            rhs_i += stepper._forcing_load_scalar(
                lambda x, y, tt, i=i: case.f_c(i, x, y, tt), t1
            )
            res[f"c{i + 1}"] = dual_norm(Ai @ state1.c[i] - rhs_i)
        out.append((mesh.h_max, res))
    return out


# ---------------------------------------------------------------------------
# stability sweep


@dataclass
class StabilityResult:
    tau: float
    n_steps: int
    labels: list
    max_entries: np.ndarray
    early_max: np.ndarray  # maxima over the first five steps
    all_finite: bool

    def bounded_by(self, factor=10.0):
        scale = np.where(self.early_max > 0, self.early_max, np.inf)
        with np.errstate(invalid="ignore"):
            ratio = self.max_entries / scale
        ok = self.max_entries <= factor * self.early_max
        ok |= self.max_entries == 0.0
        return bool(self.all_finite and ok.all()), ratio


def energy_labels(species_count):
    return ["rho", "u", "phi"] + [f"c{i + 1}" for i in range(species_count)]


def run_stability_sweep(make_stepper, taus, T, initial="builtin"):
    """Run the same problem at several step sizes and record energy maxima.

    ``make_stepper(tau)`` builds a fresh stepper; ``initial`` selects the
    built-in charge-neutral profile ("builtin") or the rest state ("zero").
    Failures and non-finite energies are reported as data, not raised.
    """
    results = []
    for tau in taus:
        stepper = make_stepper(tau)
        state = stepper.initial_state() if initial == "builtin" else stepper.zero_state()
        n_steps = max(1, round(T / tau))
        entries = []
        finite = True
        try:
            for _ in range(n_steps):
                state, rec = stepper.advance(state)
                entries.append(rec.entries())
                if not rec.all_finite():
                    finite = False
                    break
        except Exception:
            finite = False
        arr = np.array(entries) if entries else np.zeros((1, 3 + stepper.params.species_count))
        early = arr[: min(5, len(arr))]
        results.append(
            StabilityResult(
                tau=tau,
                n_steps=len(entries),
                labels=energy_labels(stepper.params.species_count),
                max_entries=arr.max(axis=0),
                early_max=early.max(axis=0),
                all_finite=finite and bool(np.isfinite(arr).all()),
            )
        )
    return results


# ---------------------------------------------------------------------------
# roughness study


def max_u1(state, mesh):
    """Largest nodal streamwise speed |u1| over the vertices."""
    return float(np.abs(state.u[: mesh.num_vertices]).max())


def run_roughness_study(make_stepper, heights, T, tau):
    """Final-time max |u1| for each roughness height.

    ``make_stepper(height)`` builds the stepper on the matching geometry.
    Returns a list of (height, max_u1) pairs in the given order.
    """
    pairs = []
    for height in heights:
        stepper = make_stepper(height)
        state = stepper.initial_state()
        n_steps = max(1, round(T / tau))
        state, _ = run_transient(stepper, state, n_steps)
        pairs.append((height, max_u1(state, stepper.mesh)))
    return pairs


# ---------------------------------------------------------------------------
# vortex detection


def vortex_detect(u, mesh):
    """Count interior stagnation vertices with consistently-signed rotation.

    A vertex qualifies when its speed is below STAGNATION_FACTOR times the
    mesh-wide maximum and the circulation of the velocity around its
    (angle-sorted) one-ring dominates the fluctuation of the edge
    contributions.
    """
    nv = mesh.num_vertices
    ns = fem.scalar_dof_count(mesh)
    ux = u[:nv]
    uy = u[ns : ns + nv]
    speed = np.hypot(ux, uy)
    vmax = speed.max()
    if vmax == 0.0:
        return 0

    neighbors = [set() for _ in range(nv)]
    for a, b, c in mesh.triangles:
        neighbors[a].update((b, c))
        neighbors[b].update((a, c))
        neighbors[c].update((a, b))
    boundary = set(np.unique(mesh.boundary_edges).tolist())

    count = 0
    for v in range(nv):
        if v in boundary or speed[v] >= STAGNATION_FACTOR * vmax:
            continue
        ring = np.array(sorted(neighbors[v]))
        rel = mesh.vertices[ring] - mesh.vertices[v]
        order = np.argsort(np.arctan2(rel[:, 1], rel[:, 0]))
        ring = ring[order]
        nxt = np.roll(ring, -1)
        mid_u = 0.5 * (ux[ring] + ux[nxt])
        mid_v = 0.5 * (uy[ring] + uy[nxt])
        dx = mesh.vertices[nxt, 0] - mesh.vertices[ring, 0]
        dy = mesh.vertices[nxt, 1] - mesh.vertices[ring, 1]
        gamma = mid_u * dx + mid_v * dy
        total = gamma.sum()
        spread = np.abs(gamma).sum()
        if spread > 0 and abs(total) > CIRCULATION_CONSISTENCY * spread:
            count += 1
    return count
