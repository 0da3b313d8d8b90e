import numpy as np
import pytest

from eoflow import assembly as asm, fem, mms, verify
from eoflow.fem import SpaceKind
from eoflow.mesh import CHANNEL, GeometrySpec, ROUGH_CHANNEL, generate, unit_square_mesh
from eoflow.scheme import BcSet, Stepper


def mms_params():
    return asm.PhysParams(
        mobility=np.array([0.4, 0.3]),
        diffusivity=np.array([0.7, 1.3]),
        valence=np.array([1.0, -1.0]),
    )


def decoupled_params():
    return asm.PhysParams(
        mobility=np.array([0.0]), diffusivity=np.array([1.0]), valence=np.array([0.0])
    )


# ---------------------------------------------------------------------------
# rate table mechanics


def test_rate_table_fit_and_csv(tmp_path):
    table = verify.RateTable(axis="h")
    for level, h in enumerate([0.4, 0.2, 0.1]):
        table.add(level, h, h * h, {"rho": (h**2, h), "p": (h, float("nan"))})
    assert table.slope("rho") == pytest.approx(2.0, abs=1e-12)
    assert table.slope("rho", "h1") == pytest.approx(1.0, abs=1e-12)
    assert table.slope("p") == pytest.approx(1.0, abs=1e-12)
    path = tmp_path / "rates.csv"
    table.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "level,h,tau,field,L2,H1,slope"
    assert len(lines) == 1 + 3 * 2


def test_rate_table_zero_errors_give_nan_slope():
    table = verify.RateTable(axis="h")
    for level, h in enumerate([0.4, 0.2]):
        table.add(level, h, h, {"rho": (0.0, 0.0)})
    assert np.isnan(table.slope("rho"))


def test_rate_fit_robust_to_dropping_coarsest():
    case = mms.default_case(mms_params())
    table = verify.run_mms_spatial(case, levels=3, base_n=4, T=0.05)
    for field in table.fields:
        full = table.slope(field)
        dropped = table.slope(field, skip_coarsest=1)
        assert abs(full - dropped) < 0.2, f"{field}: {full:.2f} vs {dropped:.2f}"


def test_temporal_determinism():
    case = mms.default_case(mms_params())
    kwargs = dict(taus=[0.05, 0.025], n=8, T=0.1)
    t1 = verify.run_mms_temporal(case, **kwargs)
    t2 = verify.run_mms_temporal(case, **kwargs)
    for (_, _, _, e1), (_, _, _, e2) in zip(t1.entries, t2.entries):
        for f in e1:
            assert np.array_equal(e1[f], e2[f], equal_nan=True)


# ---------------------------------------------------------------------------
# stability sweep


def test_stability_zero_data():
    mesh = generate(GeometrySpec(kind=CHANNEL, width=1.0, length=2.0, edge_length=0.5))
    bcs = BcSet(u_in=np.zeros(2), c_in=np.zeros(1), xi=1e-6)

    def make(tau):
        return Stepper(mesh, decoupled_params(), bcs, tau=tau)

    results = verify.run_stability_sweep(make, [0.1, 0.2], T=0.4, initial="zero")
    for res in results:
        assert res.all_finite
        assert res.max_entries.max() == 0.0
        bounded, _ = res.bounded_by(10.0)
        assert bounded


def test_stability_records_plain_convection_without_asserting():
    # the plain form of the written scheme is recorded as data
    mesh = generate(GeometrySpec(kind=CHANNEL, width=1e-6, length=2e-6, edge_length=2e-7))
    params = asm.PhysParams(
        mobility=np.array([5e-8, 3e-7, 3e-8]),
        diffusivity=np.array([2e-10, 3e-10, 2e-10]),
        valence=np.array([1.0, -1.0, -2.0]),
    )
    bcs = BcSet(u_in=np.array([1e-2, 0.0]), c_in=np.ones(3), xi=1e-6)

    def make(tau):
        return Stepper(mesh, params, bcs, tau=tau, convection="plain")

    results = verify.run_stability_sweep(make, [1e-6], T=5e-6)
    assert len(results) == 1
    assert results[0].n_steps >= 1
    assert results[0].max_entries.shape == (6,)


# ---------------------------------------------------------------------------
# roughness study helpers


def test_roughness_linear_regime_doubles_with_inlet():
    # couplings off: uncharged single species, so no drift, no body force,
    # no slip; the transient Stokes response is linear in the inlet speed
    width = 1e-6
    spec = GeometrySpec(
        kind=ROUGH_CHANNEL,
        width=width,
        length=2 * width,
        roughness_height=0.2 * width,
        roughness_width=width / 4,
        roughness_spacing=2 * width / 3,
        edge_length=1e-7,
    )
    mesh = generate(spec)

    def final_max_u1(speed):
        bcs = BcSet(u_in=np.array([speed, 0.0]), c_in=np.ones(1), xi=1e-6)
        st = Stepper(mesh, decoupled_params(), bcs, tau=1e-7)
        state = st.zero_state()
        for _ in range(10):
            state, _ = st.advance(state)
        return verify.max_u1(state, mesh)

    v1 = final_max_u1(1e-2)
    v2 = final_max_u1(2e-2)
    assert v2 == pytest.approx(2 * v1, rel=1e-6)


# ---------------------------------------------------------------------------
# vortex detection


def test_vortex_uniform_flow_none():
    mesh = unit_square_mesh(8)
    u = fem.interpolate(
        mesh, SpaceKind.MINI_VELOCITY, lambda x, y: np.stack([np.ones_like(x), np.zeros_like(x)])
    )
    assert verify.vortex_detect(u, mesh) == 0


def test_vortex_rigid_rotation_one():
    mesh = unit_square_mesh(8)  # even split: vertex exactly at the center
    u = fem.interpolate(
        mesh, SpaceKind.MINI_VELOCITY, lambda x, y: np.stack([-(y - 0.5), x - 0.5])
    )
    assert verify.vortex_detect(u, mesh) == 1


def test_vortex_zero_field():
    mesh = unit_square_mesh(4)
    ns = fem.scalar_dof_count(mesh)
    assert verify.vortex_detect(np.zeros(2 * ns), mesh) == 0
