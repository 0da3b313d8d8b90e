"""Manufactured solutions for convergence verification.

The default case on the unit square uses a divergence-free velocity, a
zero-mean pressure, and a potential/charge pair that satisfies the Poisson
equation identically, so only the transport and momentum equations need
forcing. The forcing expressions below were derived symbolically once and
are hard-coded; tests cross-check them against central finite differences of
the analytic fields.
"""

from dataclasses import dataclass

import numpy as np

PI = np.pi


@dataclass
class MmsCase:
    """Closed-form space-time fields plus the forcing they induce.

    All field callables are vectorized over coordinate arrays at a fixed
    time. ``u``/``grad_u`` return shapes (2, ...) and (2, 2, ...) with the
    second gradient axis indexing d/dx, d/dy. The analytic velocity is
    divergence-free and the potential satisfies the Poisson pair with the
    charge density identically (so the potential equation is unforced).
    """

    name: str
    params: object  # PhysParams
    rho: object
    phi: object
    u: object
    p: object
    c: object  # c(i, x, y, t)
    f_rho: object
    f_u: object
    f_c: object  # f_c(i, x, y, t)
    grad_rho: object
    grad_phi: object
    grad_u: object
    grad_c: object  # grad_c(i, x, y, t)


def _trig(x, y):
    sx, cx = np.sin(PI * x), np.cos(PI * x)
    sy, cy = np.sin(PI * y), np.cos(PI * y)
    return sx, cx, sy, cy


def default_case(params):
    """The standard smooth manufactured case on the unit square."""
    eps = params.permittivity
    mu = params.viscosity
    d0 = params.averaged_diffusivity
    nu = params.mobility
    z = params.valence
    dd = params.diffusivity
    nz2_sum = float((nu * z**2).sum())

    def g(t):
        return np.exp(-t)

    def rho(x, y, t):
        sx, _, sy, _ = _trig(x, y)
        return 2 * PI**2 * eps * sx * sy * g(t)

    def phi(x, y, t):
        sx, _, sy, _ = _trig(x, y)
        return sx * sy * g(t)

    def u(x, y, t):
        sx, _, sy, _ = _trig(x, y)
        s2x, s2y = np.sin(2 * PI * x), np.sin(2 * PI * y)
        gg = g(t)
        return np.stack([sx * sx * s2y * gg, -s2x * sy * sy * gg])

    def p(x, y, t):
        _, cx, _, cy = _trig(x, y)
        return cx * cy * g(t)

    def c(i, x, y, t):
        sx, _, sy, _ = _trig(x, y)
        return 1.0 + 0.5 * sx * sy * g(t)

    def grad_phi(x, y, t):
        sx, cx, sy, cy = _trig(x, y)
        gg = g(t)
        return np.stack([PI * cx * sy * gg, PI * sx * cy * gg])

    def grad_rho(x, y, t):
        return 2 * PI**2 * eps * grad_phi(x, y, t)

    def grad_c(i, x, y, t):
        return 0.5 * grad_phi(x, y, t)

    def grad_u(x, y, t):
        sx, cx, sy, cy = _trig(x, y)
        s2x, c2x = np.sin(2 * PI * x), np.cos(2 * PI * x)
        s2y, c2y = np.sin(2 * PI * y), np.cos(2 * PI * y)
        gg = g(t)
        u1x = PI * s2x * s2y * gg
        u1y = 2 * PI * sx * sx * c2y * gg
        u2x = -2 * PI * c2x * sy * sy * gg
        u2y = -PI * s2x * s2y * gg
        return np.stack([np.stack([u1x, u1y]), np.stack([u2x, u2y])])

    def _drift_density(x, y, t):
        # -div(c grad phi) for the shared concentration profile
        sx, cx, sy, cy = _trig(x, y)
        gg = g(t)
        s = sx * sy
        cc = 1.0 + 0.5 * s * gg
        phi_x = PI * cx * sy * gg
        phi_y = PI * sx * cy * gg
        lap_phi = -2 * PI**2 * s * gg
        c_x = 0.5 * PI * cx * sy * gg
        c_y = 0.5 * PI * sx * cy * gg
        return -(c_x * phi_x + c_y * phi_y + cc * lap_phi)

    def f_rho(x, y, t):
        sx, cx, sy, cy = _trig(x, y)
        gg = g(t)
        r = 2 * PI**2 * eps * sx * sy * gg
        rho_t = -r
        lap_rho = -2 * PI**2 * r
        rho_x = 2 * PI**3 * eps * cx * sy * gg
        rho_y = 2 * PI**3 * eps * sx * cy * gg
        s2x, s2y = np.sin(2 * PI * x), np.sin(2 * PI * y)
        u1 = sx * sx * s2y * gg
        u2 = -s2x * sy * sy * gg
        return rho_t - d0 * lap_rho + u1 * rho_x + u2 * rho_y + nz2_sum * _drift_density(x, y, t)

    def f_u(x, y, t):
        sx, cx, sy, cy = _trig(x, y)
        s2x, c2x = np.sin(2 * PI * x), np.cos(2 * PI * x)
        s2y, c2y = np.sin(2 * PI * y), np.cos(2 * PI * y)
        gg = g(t)
        u1 = sx * sx * s2y * gg
        u2 = -s2x * sy * sy * gg
        u1_x = PI * s2x * s2y * gg
        u1_y = 2 * PI * sx * sx * c2y * gg
        u2_x = -2 * PI * c2x * sy * sy * gg
        u2_y = -PI * s2x * s2y * gg
        lap_u1 = 2 * PI**2 * s2y * gg * (c2x - 2 * sx * sx)
        lap_u2 = 2 * PI**2 * s2x * gg * (2 * sy * sy - c2y)
        p_x = -PI * sx * cy * gg
        p_y = -PI * cx * sy * gg
        r = 2 * PI**2 * eps * sx * sy * gg
        phi_x = PI * cx * sy * gg
        phi_y = PI * sx * cy * gg
        f1 = -u1 - mu * lap_u1 + u1 * u1_x + u2 * u1_y + p_x - r * phi_x
        f2 = -u2 - mu * lap_u2 + u1 * u2_x + u2 * u2_y + p_y - r * phi_y
        return np.stack([f1, f2])

    def f_c(i, x, y, t):
        sx, _, sy, _ = _trig(x, y)
        gg = g(t)
        s = sx * sy
        c_t = -0.5 * s * gg
        lap_c = -PI**2 * s * gg
        # the manufactured velocity is orthogonal to grad(sin sin): no
        # convective contribution survives analytically
        return c_t - dd[i] * lap_c + nu[i] * z[i] * _drift_density(x, y, t)

    return MmsCase(
        name="default",
        params=params,
        rho=rho,
        phi=phi,
        u=u,
        p=p,
        c=c,
        f_rho=f_rho,
        f_u=f_u,
        f_c=f_c,
        grad_rho=grad_rho,
        grad_phi=grad_phi,
        grad_u=grad_u,
        grad_c=grad_c,
    )


def zero_case(params):
    """All fields identically zero except unit concentrations; every
    discrete error must vanish to solver precision."""

    def zero(x, y, t):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def zero2(x, y, t):
        z = np.zeros_like(np.asarray(x, dtype=np.float64))
        return np.stack([z, z])

    def zero22(x, y, t):
        z = np.zeros_like(np.asarray(x, dtype=np.float64))
        return np.stack([np.stack([z, z]), np.stack([z, z])])

    return MmsCase(
        name="zero",
        params=params,
        rho=zero,
        phi=zero,
        u=zero2,
        p=zero,
        c=lambda i, x, y, t: np.zeros_like(np.asarray(x, dtype=np.float64)),
        f_rho=zero,
        f_u=zero2,
        f_c=lambda i, x, y, t: np.zeros_like(np.asarray(x, dtype=np.float64)),
        grad_rho=zero2,
        grad_phi=zero2,
        grad_u=zero22,
        grad_c=lambda i, x, y, t: zero2(x, y, t),
    )


def steady_case(params):
    """Time-independent variant of the default case (g == 1) with the time
    derivatives dropped from the forcing; used to isolate temporal error."""
    base = default_case(params)

    def at_t0(fn):
        return lambda x, y, t: fn(x, y, 0.0)

    def f_rho(x, y, t):
        # remove the rho_t = -rho contribution of the decaying case
        return base.f_rho(x, y, 0.0) + base.rho(x, y, 0.0)

    def f_u(x, y, t):
        return base.f_u(x, y, 0.0) + base.u(x, y, 0.0)

    def f_c(i, x, y, t):
        sx, sy = np.sin(PI * x), np.sin(PI * y)
        return base.f_c(i, x, y, 0.0) + 0.5 * sx * sy

    return MmsCase(
        name="steady",
        params=params,
        rho=at_t0(base.rho),
        phi=at_t0(base.phi),
        u=at_t0(base.u),
        p=at_t0(base.p),
        c=lambda i, x, y, t: base.c(i, x, y, 0.0),
        f_rho=f_rho,
        f_u=f_u,
        f_c=f_c,
        grad_rho=at_t0(base.grad_rho),
        grad_phi=at_t0(base.grad_phi),
        grad_u=at_t0(base.grad_u),
        grad_c=lambda i, x, y, t: base.grad_c(i, x, y, 0.0),
    )
