"""Independent dense oracles for the assembly and transport tests.

Everything here is deliberately written from scratch: basis functions are
evaluated in physical coordinates from barycentric determinant formulas,
integration uses a tensor Gauss-Legendre rule mapped to each triangle (exact
for the polynomial integrands of every assembled form), and matrices are
accumulated densely with plain Python loops. No code is shared with the
package's assembly path.
"""

import numpy as np

_GL_N = 8
_gl_x, _gl_w = np.polynomial.legendre.leggauss(_GL_N)
_gl_x = 0.5 * (_gl_x + 1.0)  # map to [0, 1]
_gl_w = 0.5 * _gl_w


def triangle_quadrature(v0, v1, v2):
    """Quadrature points/weights on one triangle (collapsed-square map)."""
    pts = []
    wts = []
    area2 = abs(
        (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (v1[1] - v0[1])
    )
    for iu, u in enumerate(_gl_x):
        for iv, v in enumerate(_gl_x):
            xi, eta = u, v * (1.0 - u)
            x = v0[0] + xi * (v1[0] - v0[0]) + eta * (v2[0] - v0[0])
            y = v0[1] + xi * (v1[1] - v0[1]) + eta * (v2[1] - v0[1])
            w = _gl_w[iu] * _gl_w[iv] * (1.0 - u) * area2
            pts.append((x, y))
            wts.append(w)
    return np.array(pts), np.array(wts)


def barycentric(tri_coords, x, y):
    """Barycentric values and their (constant) gradients at one point."""
    (x1, y1), (x2, y2), (x3, y3) = tri_coords
    det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    lam = np.array(
        [
            ((y2 - y3) * (x - x3) + (x3 - x2) * (y - y3)) / det,
            ((y3 - y1) * (x - x3) + (x1 - x3) * (y - y3)) / det,
            ((y1 - y2) * (x - x1) + (x2 - x1) * (y - y1)) / det,
        ]
    )
    grads = (
        np.array(
            [
                [y2 - y3, x3 - x2],
                [y3 - y1, x1 - x3],
                [y1 - y2, x2 - x1],
            ]
        )
        / det
    )
    return lam, grads


def p1b_basis(tri_coords, x, y):
    """Linear + bubble basis values and gradients at one physical point."""
    lam, grads = barycentric(tri_coords, x, y)
    bubble = 27.0 * lam[0] * lam[1] * lam[2]
    bgrad = 27.0 * (
        grads[0] * lam[1] * lam[2]
        + lam[0] * grads[1] * lam[2]
        + lam[0] * lam[1] * grads[2]
    )
    return np.concatenate([lam, [bubble]]), np.vstack([grads, bgrad])


def scalar_dofs(mesh, t):
    nv = mesh.num_vertices
    return list(mesh.triangles[t]) + [nv + t]


def _field_at(mesh, coefs, t, tri_coords, x, y):
    vals, _ = p1b_basis(tri_coords, x, y)
    dofs = scalar_dofs(mesh, t)
    return sum(coefs[d] * vals[k] for k, d in enumerate(dofs))


def _field_grad_at(mesh, coefs, t, tri_coords, x, y):
    _, grads = p1b_basis(tri_coords, x, y)
    dofs = scalar_dofs(mesh, t)
    return sum(coefs[d] * grads[k] for k, d in enumerate(dofs))


def dense_mass(mesh):
    n = mesh.num_vertices + mesh.num_triangles
    A = np.zeros((n, n))
    for t in range(mesh.num_triangles):
        tri = mesh.vertices[mesh.triangles[t]]
        pts, wts = triangle_quadrature(*tri)
        dofs = scalar_dofs(mesh, t)
        for (x, y), w in zip(pts, wts):
            vals, _ = p1b_basis(tri, x, y)
            for i, di in enumerate(dofs):
                for j, dj in enumerate(dofs):
                    A[di, dj] += w * vals[i] * vals[j]
    return A


def dense_stiffness(mesh, kappa=1.0):
    n = mesh.num_vertices + mesh.num_triangles
    A = np.zeros((n, n))
    for t in range(mesh.num_triangles):
        tri = mesh.vertices[mesh.triangles[t]]
        pts, wts = triangle_quadrature(*tri)
        dofs = scalar_dofs(mesh, t)
        for (x, y), w in zip(pts, wts):
            _, grads = p1b_basis(tri, x, y)
            for i, di in enumerate(dofs):
                for j, dj in enumerate(dofs):
                    A[di, dj] += kappa * w * (grads[i] @ grads[j])
    return A


def dense_convection(mesh, wind, skew=False):
    """wind is a component-blocked velocity coefficient vector."""
    n = mesh.num_vertices + mesh.num_triangles
    A = np.zeros((n, n))
    for t in range(mesh.num_triangles):
        tri = mesh.vertices[mesh.triangles[t]]
        pts, wts = triangle_quadrature(*tri)
        dofs = scalar_dofs(mesh, t)
        for (x, y), w in zip(pts, wts):
            vals, grads = p1b_basis(tri, x, y)
            wx = _field_at(mesh, wind[:n], t, tri, x, y)
            wy = _field_at(mesh, wind[n:], t, tri, x, y)
            for i, di in enumerate(dofs):
                for j, dj in enumerate(dofs):
                    A[di, dj] += w * vals[i] * (wx * grads[j][0] + wy * grads[j][1])
    if skew:
        A = 0.5 * (A - A.T)
    return A


def shared_rule_quadrature(v0, v1, v2, bary_points, ref_weights):
    """Physical points/weights of a given barycentric rule on one triangle.

    Used where the form under test is integrated inexactly by design (the
    drift form has degree-7 terms): the oracle then shares the rule data but
    keeps its own mapping, basis evaluation and accumulation loops.
    """
    det = abs(
        (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v2[0] - v0[0]) * (v1[1] - v0[1])
    )
    pts = bary_points @ np.array([v0, v1, v2])
    return pts, np.asarray(ref_weights) * det


def dense_drift(mesh, potential, gamma=1.0, rule=None):
    n = mesh.num_vertices + mesh.num_triangles
    A = np.zeros((n, n))
    for t in range(mesh.num_triangles):
        tri = mesh.vertices[mesh.triangles[t]]
        if rule is None:
            pts, wts = triangle_quadrature(*tri)
        else:
            pts, wts = shared_rule_quadrature(*tri, rule.points, rule.weights)
        dofs = scalar_dofs(mesh, t)
        for (x, y), w in zip(pts, wts):
            vals, grads = p1b_basis(tri, x, y)
            gphi = _field_grad_at(mesh, potential, t, tri, x, y)
            for i, di in enumerate(dofs):
                for j, dj in enumerate(dofs):
                    A[di, dj] += gamma * w * vals[j] * (gphi @ grads[i])
    return A


def dense_divergence(mesh):
    """(q, u) entries -int q (div u); velocity component-blocked."""
    ns = mesh.num_vertices + mesh.num_triangles
    B = np.zeros((mesh.num_vertices, 2 * ns))
    for t in range(mesh.num_triangles):
        tri = mesh.vertices[mesh.triangles[t]]
        pts, wts = triangle_quadrature(*tri)
        dofs = scalar_dofs(mesh, t)
        pdofs = list(mesh.triangles[t])
        for (x, y), w in zip(pts, wts):
            vals, grads = p1b_basis(tri, x, y)
            lam, _ = barycentric(tri, x, y)
            for qi, dq in enumerate(pdofs):
                for j, dj in enumerate(dofs):
                    B[dq, dj] -= w * lam[qi] * grads[j][0]
                    B[dq, dj + ns] -= w * lam[qi] * grads[j][1]
    return B


def dense_body_force(mesh, rho, potential):
    ns = mesh.num_vertices + mesh.num_triangles
    f = np.zeros(2 * ns)
    for t in range(mesh.num_triangles):
        tri = mesh.vertices[mesh.triangles[t]]
        pts, wts = triangle_quadrature(*tri)
        dofs = scalar_dofs(mesh, t)
        for (x, y), w in zip(pts, wts):
            vals, _ = p1b_basis(tri, x, y)
            r = _field_at(mesh, rho, t, tri, x, y)
            gphi = _field_grad_at(mesh, potential, t, tri, x, y)
            for i, di in enumerate(dofs):
                f[di] += w * r * gphi[0] * vals[i]
                f[di + ns] += w * r * gphi[1] * vals[i]
    return f


def dense_load(mesh, fn):
    ns = mesh.num_vertices + mesh.num_triangles
    f = np.zeros(ns)
    for t in range(mesh.num_triangles):
        tri = mesh.vertices[mesh.triangles[t]]
        pts, wts = triangle_quadrature(*tri)
        dofs = scalar_dofs(mesh, t)
        for (x, y), w in zip(pts, wts):
            vals, _ = p1b_basis(tri, x, y)
            fv = fn(x, y)
            for i, di in enumerate(dofs):
                f[di] += w * fv * vals[i]
    return f


def dense_dirichlet(A, b, dofs, values):
    """Symmetric elimination on dense copies."""
    A = A.copy()
    b = b.copy()
    g = np.zeros(len(b))
    g[dofs] = values
    b -= A @ g
    b[dofs] = values
    A[dofs, :] = 0.0
    A[:, dofs] = 0.0
    A[dofs, dofs] = 1.0
    return A, b


def heat_equation_history(mesh, diffusivity, tau, n_steps, c0, dirichlet):
    """Backward-Euler heat flow with a dense solver; returns all levels."""
    M = dense_mass(mesh)
    K = dense_stiffness(mesh, diffusivity)
    dofs, values = dirichlet
    history = [c0.copy()]
    c = c0.copy()
    for _ in range(n_steps):
        A = M / tau + K
        b = M @ c / tau
        A_bc, b_bc = dense_dirichlet(A, b, dofs, values)
        c = np.linalg.solve(A_bc, b_bc)
        history.append(c.copy())
    return history
