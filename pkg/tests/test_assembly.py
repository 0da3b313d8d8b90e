import numpy as np
import pytest

import oracle
from eoflow import assembly as asm, fem
from eoflow.errors import ConstraintError, ShapeError
from eoflow.fem import SpaceKind
from eoflow.mesh import TriMesh, generate, GeometrySpec, ROUGH_CHANNEL, unit_square_mesh
from eoflow.sparsela import solve_direct


def unit_right_triangle():
    return TriMesh.create(
        np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        np.array([[0, 1, 2]]),
        np.array([[0, 1], [1, 2], [2, 0]]),
        np.array([2, 2, 2]),
    )


def small_meshes():
    """Meshes with <= 32 triangles, including a non-square geometry."""
    rough = generate(
        GeometrySpec(
            kind=ROUGH_CHANNEL,
            width=1.0,
            length=2.0,
            roughness_height=0.25,
            roughness_width=0.5,
            roughness_spacing=1.0,
            edge_length=0.7,
        )
    )
    meshes = [unit_right_triangle(), unit_square_mesh(2), unit_square_mesh(3), rough]
    assert all(m.num_triangles <= 32 for m in meshes)
    return meshes


def rel_err(computed, reference):
    scale = np.abs(reference).max()
    if scale == 0.0:
        return np.abs(computed).max()
    return np.abs(computed - reference).max() / scale


def random_scalar_field(mesh, rng):
    return rng.standard_normal(mesh.num_vertices + mesh.num_triangles)


def random_velocity_field(mesh, rng):
    return rng.standard_normal(2 * (mesh.num_vertices + mesh.num_triangles))


# ---------------------------------------------------------------------------
# closed elemental forms


def test_mass_closed_form_unit_right_triangle():
    ctx = asm.FormContext(unit_right_triangle())
    M = asm.mass_matrix(ctx).toarray()
    expected = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24
    assert rel_err(M[:3, :3], expected) < 1e-12


def test_stiffness_closed_form_unit_right_triangle():
    ctx = asm.FormContext(unit_right_triangle())
    K = asm.stiffness_matrix(ctx).toarray()
    expected = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
    assert rel_err(K[:3, :3], expected) < 1e-12


def test_mass_row_sums_equal_area():
    mesh = unit_square_mesh(4)
    ctx = asm.FormContext(mesh)
    M = asm.mass_matrix(ctx)
    # the constant-1 field integrates each basis function; the vertex rows
    # form a partition of unity, so their total is the domain area
    one = np.zeros(ctx.n_scalar)
    one[: mesh.num_vertices] = 1.0
    assert (M @ one)[: mesh.num_vertices].sum() == pytest.approx(1.0, rel=1e-12)


def test_stiffness_kernel_and_linearity():
    mesh = unit_square_mesh(3)
    ctx = asm.FormContext(mesh)
    const = np.zeros(ctx.n_scalar)
    const[: mesh.num_vertices] = 1.0
    K1 = asm.stiffness_matrix(ctx, 1.0)
    assert np.abs(K1 @ const).max() < 1e-13
    K2 = asm.stiffness_matrix(ctx, 2.0)
    assert rel_err(K2.toarray(), 2 * K1.toarray()) < 1e-14


# ---------------------------------------------------------------------------
# dense-oracle comparisons (every operator, meshes <= 32 triangles)


@pytest.mark.parametrize("mesh_idx", range(4))
def test_mass_matches_dense_oracle(mesh_idx):
    mesh = small_meshes()[mesh_idx]
    ctx = asm.FormContext(mesh)
    assert rel_err(asm.mass_matrix(ctx).toarray(), oracle.dense_mass(mesh)) < 1e-12


@pytest.mark.parametrize("mesh_idx", range(4))
def test_stiffness_matches_dense_oracle(mesh_idx):
    mesh = small_meshes()[mesh_idx]
    ctx = asm.FormContext(mesh)
    assert (
        rel_err(asm.stiffness_matrix(ctx, 1.7).toarray(), oracle.dense_stiffness(mesh, 1.7))
        < 1e-12
    )


@pytest.mark.parametrize("mesh_idx", range(4))
def test_convection_matches_dense_oracle(mesh_idx):
    mesh = small_meshes()[mesh_idx]
    rng = np.random.default_rng(mesh_idx)
    wind = random_velocity_field(mesh, rng)
    ctx = asm.FormContext(mesh)
    plain = asm.convection_matrix(ctx, wind, skew=False).toarray()
    assert rel_err(plain, oracle.dense_convection(mesh, wind)) < 1e-12
    skewed = asm.convection_matrix(ctx, wind, skew=True).toarray()
    assert rel_err(skewed, oracle.dense_convection(mesh, wind, skew=True)) < 1e-12


@pytest.mark.parametrize("mesh_idx", range(4))
def test_drift_matches_dense_oracle(mesh_idx):
    # the drift integrand reaches degree 7 when the potential carries bubble
    # components, which the degree-6 rule integrates inexactly by design, so
    # the dense oracle shares the rule data (its loops stay independent)
    mesh = small_meshes()[mesh_idx]
    rng = np.random.default_rng(10 + mesh_idx)
    pot = random_scalar_field(mesh, rng)
    ctx = asm.FormContext(mesh)
    D = asm.drift_matrix(ctx, pot, gamma=0.83).toarray()
    Do = oracle.dense_drift(mesh, pot, gamma=0.83, rule=ctx.rule)
    assert rel_err(D, Do) < 1e-12


@pytest.mark.parametrize("mesh_idx", range(4))
def test_drift_linear_part_exactly_integrated(mesh_idx):
    # for potentials without bubble content the integrand degree is <= 5 and
    # the assembled matrix must match the exact-integration oracle
    mesh = small_meshes()[mesh_idx]
    rng = np.random.default_rng(30 + mesh_idx)
    pot = np.zeros(mesh.num_vertices + mesh.num_triangles)
    pot[: mesh.num_vertices] = rng.standard_normal(mesh.num_vertices)
    ctx = asm.FormContext(mesh)
    D = asm.drift_matrix(ctx, pot, gamma=1.1).toarray()
    assert rel_err(D, oracle.dense_drift(mesh, pot, gamma=1.1)) < 1e-12


@pytest.mark.parametrize("mesh_idx", range(4))
def test_divergence_matches_dense_oracle(mesh_idx):
    mesh = small_meshes()[mesh_idx]
    ctx = asm.FormContext(mesh)
    B = asm.divergence_matrix(ctx).toarray()
    assert rel_err(B, oracle.dense_divergence(mesh)) < 1e-12


@pytest.mark.parametrize("mesh_idx", range(4))
def test_body_force_matches_dense_oracle(mesh_idx):
    mesh = small_meshes()[mesh_idx]
    rng = np.random.default_rng(20 + mesh_idx)
    rho = random_scalar_field(mesh, rng)
    pot = random_scalar_field(mesh, rng)
    ctx = asm.FormContext(mesh)
    f = asm.body_force_vector(ctx, rho, pot)
    assert rel_err(f, oracle.dense_body_force(mesh, rho, pot)) < 1e-12


def test_symmetry_of_mass_and_stiffness():
    mesh = small_meshes()[3]
    ctx = asm.FormContext(mesh)
    M = asm.mass_matrix(ctx).toarray()
    K = asm.stiffness_matrix(ctx).toarray()
    assert np.array_equal(M, M.T)
    assert np.array_equal(K, K.T)


# ---------------------------------------------------------------------------
# operator properties


def test_convection_zero_wind():
    mesh = unit_square_mesh(3)
    ctx = asm.FormContext(mesh)
    C = asm.convection_matrix(ctx, np.zeros(ctx.n_velocity), skew=False)
    assert C.nnz == 0 or np.abs(C.data).max() == 0.0


def test_skew_convection_energy_neutral():
    mesh = unit_square_mesh(4)
    ctx = asm.FormContext(mesh)
    rng = np.random.default_rng(0)
    wind = random_velocity_field(mesh, rng)
    C = asm.convection_matrix(ctx, wind, skew=True)
    fro = C.frobenius()
    for _ in range(100):
        x = rng.standard_normal(ctx.n_scalar)
        assert abs(x @ (C @ x)) <= 1e-13 * fro * (x @ x)


def test_drift_constant_potential_and_zero_gamma():
    mesh = unit_square_mesh(3)
    ctx = asm.FormContext(mesh)
    const = np.zeros(ctx.n_scalar)
    const[: mesh.num_vertices] = 4.2
    D = asm.drift_matrix(ctx, const, gamma=1.0)
    assert np.abs(D.toarray()).max() < 1e-13
    rng = np.random.default_rng(1)
    D0 = asm.drift_matrix(ctx, random_scalar_field(mesh, rng), gamma=0.0)
    assert D0.nnz == 0


def test_drift_linear_potential_matches_oracle():
    mesh = unit_square_mesh(2)
    ctx = asm.FormContext(mesh)
    pot = fem.interpolate(mesh, SpaceKind.P1_BUBBLE, lambda x, y: x)
    D = asm.drift_matrix(ctx, pot).toarray()
    assert rel_err(D, oracle.dense_drift(mesh, pot)) < 1e-12


def test_divergence_kernel_fields():
    mesh = unit_square_mesh(4)
    ctx = asm.FormContext(mesh)
    B = asm.divergence_matrix(ctx)
    u_const = fem.interpolate(
        mesh, SpaceKind.MINI_VELOCITY, lambda x, y: np.stack([np.ones_like(x), -np.ones_like(x)])
    )
    assert np.abs(B @ u_const).max() < 1e-13
    u_rot = fem.interpolate(mesh, SpaceKind.MINI_VELOCITY, lambda x, y: np.stack([-y, x]))
    assert np.abs(B @ u_rot).max() < 1e-13


def test_divergence_linear_field_loads():
    mesh = unit_square_mesh(3)
    ctx = asm.FormContext(mesh)
    B = asm.divergence_matrix(ctx)
    u = fem.interpolate(mesh, SpaceKind.MINI_VELOCITY, lambda x, y: np.stack([x, np.zeros_like(x)]))
    # div u = 1: (B u)_q = -int q
    expected = -oracle.dense_load(mesh, lambda x, y: 1.0)[: mesh.num_vertices]
    assert rel_err(B @ u, expected) < 1e-12


def test_body_force_zero_cases():
    mesh = unit_square_mesh(3)
    ctx = asm.FormContext(mesh)
    rng = np.random.default_rng(4)
    pot = random_scalar_field(mesh, rng)
    assert np.abs(asm.body_force_vector(ctx, np.zeros(ctx.n_scalar), pot)).max() == 0.0
    const = np.zeros(ctx.n_scalar)
    const[: mesh.num_vertices] = 2.0
    rho = random_scalar_field(mesh, rng)
    assert np.abs(asm.body_force_vector(ctx, rho, const)).max() < 1e-13


def test_body_force_partition_of_unity_sum():
    mesh = unit_square_mesh(4)
    ctx = asm.FormContext(mesh)
    one = np.zeros(ctx.n_scalar)
    one[: mesh.num_vertices] = 1.0
    phi = fem.interpolate(mesh, SpaceKind.P1_BUBBLE, lambda x, y: x)
    f = asm.body_force_vector(ctx, one, phi)
    # summing the x-loads over the vertex partition of unity gives the area
    assert f[: mesh.num_vertices].sum() == pytest.approx(1.0, rel=1e-12)
    assert abs(f[ctx.n_scalar : ctx.n_scalar + mesh.num_vertices].sum()) < 1e-13


# ---------------------------------------------------------------------------
# Dirichlet constraints


def test_apply_dirichlet_constrain_everything():
    mesh = unit_square_mesh(2)
    ctx = asm.FormContext(mesh)
    A = asm.stiffness_matrix(ctx)
    A = asm.CsrMatrix(A.scipy + asm.mass_matrix(ctx).scipy)
    g = 0.7
    dofs = np.arange(ctx.n_scalar)
    Abc, b = asm.apply_dirichlet(A, np.zeros(ctx.n_scalar), (dofs, np.full(ctx.n_scalar, g)))
    x = solve_direct(Abc, b)
    assert np.allclose(x, g, atol=1e-14)


def test_apply_dirichlet_empty_is_bit_identical():
    mesh = unit_square_mesh(2)
    ctx = asm.FormContext(mesh)
    A = asm.stiffness_matrix(ctx)
    b = np.arange(ctx.n_scalar, dtype=float)
    A2, b2 = asm.apply_dirichlet(A, b, [])
    assert np.array_equal(A2.indptr, A.indptr)
    assert np.array_equal(A2.indices, A.indices)
    assert np.array_equal(A2.data, A.data)
    assert np.array_equal(b2, b)


def test_apply_dirichlet_conflicting_duplicates():
    mesh = unit_square_mesh(2)
    ctx = asm.FormContext(mesh)
    A = asm.stiffness_matrix(ctx)
    with pytest.raises(ConstraintError):
        asm.apply_dirichlet(A, np.zeros(ctx.n_scalar), [(0, 1.0), (0, 2.0)])
    # equal duplicates are fine
    asm.apply_dirichlet(A, np.zeros(ctx.n_scalar), [(0, 1.0), (0, 1.0)])


def test_apply_dirichlet_matches_dense_oracle():
    mesh = small_meshes()[3]
    ctx = asm.FormContext(mesh)
    rng = np.random.default_rng(6)
    A = asm.stiffness_matrix(ctx, 1.3)
    b = rng.standard_normal(ctx.n_scalar)
    dofs = np.array([0, 3, 7])
    vals = np.array([0.5, -1.0, 2.0])
    Abc, bbc = asm.apply_dirichlet(A, b, (dofs, vals))
    A_oracle, b_oracle = oracle.dense_dirichlet(A.toarray(), b, dofs, vals)
    assert rel_err(Abc.toarray(), A_oracle) < 1e-14
    assert rel_err(bbc, b_oracle) < 1e-14


def test_apply_dirichlet_shape_checks():
    mesh = unit_square_mesh(2)
    ctx = asm.FormContext(mesh)
    A = asm.stiffness_matrix(ctx)
    with pytest.raises(ShapeError):
        asm.apply_dirichlet(A, np.zeros(3), [])
    with pytest.raises(ShapeError):
        asm.apply_dirichlet(A, np.zeros(ctx.n_scalar), [(ctx.n_scalar + 5, 1.0)])


def test_poisson_mms_rate_two():
    """Dirichlet Poisson problem with a manufactured solution."""
    errs, hs = [], []
    mesh = unit_square_mesh(4)
    exact = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
    for _ in range(4):
        ctx = asm.FormContext(mesh)
        K = asm.stiffness_matrix(ctx)
        f = asm.scalar_load_vector(
            ctx,
            2
            * np.pi**2
            * np.sin(np.pi * ctx.quad_xy[:, :, 0])
            * np.sin(np.pi * ctx.quad_xy[:, :, 1]),
        )
        boundary = np.unique(mesh.boundary_edges)
        Abc, bbc = asm.apply_dirichlet(K, f, (boundary, np.zeros(len(boundary))))
        u = solve_direct(Abc, bbc)
        xq, yq = ctx.quad_xy[:, :, 0], ctx.quad_xy[:, :, 1]
        diff = ctx.scalar_at_quadrature(u) - exact(xq, yq)
        errs.append(
            np.sqrt(float(np.einsum("q,eq,e->", ctx.rule.weights, diff**2, ctx.geom.det)))
        )
        hs.append(mesh.h_max)
        from eoflow.mesh import refine_uniform

        mesh = refine_uniform(mesh)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope > 1.9
