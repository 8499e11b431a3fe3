import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from geofluid.chart import Grid, builtin_chart, sample_points
from geofluid.errors import ConsistencyFailed, NegativeDiscriminant
from geofluid.geometry import compute_geometry, covariant_div_v
from geofluid.multid import (
    consistency_check,
    decomposition_residual,
    fluid_nd,
    gcr_residual,
    higher_geometry,
    higher_geometry_from_chart,
    normal_rotation,
    odot,
    pressure_quadratic,
    pressure_roots_nd,
    ricci_two_ways,
    stress_nd,
)


def points(ch, n=5):
    return sample_points(ch, (n,) * ch.dim_domain)


@pytest.mark.parametrize(
    "name,params",
    [
        ("clifford_torus", {}),
        ("round_sphere_nd", {"n": 3}),
        ("graph", {"n": 2, "k": 3}),
        ("graph", {"n": 3, "k": 2}),
        ("geometric_torus", {}),
        ("plane", {"n": 3, "k": 2}),
    ],
)
def test_gauss_codazzi_ricci_and_balance(name, params):
    ch = builtin_chart(name, params)
    hg = higher_geometry_from_chart(ch, points(ch))
    rep = gcr_residual(hg, tol=1e-9)
    assert rep.passed, rep.table()
    assert rep.residuals["A_antisymmetry"] < 1e-12
    assert np.abs(stress_nd(hg).balance).max() < 1e-9


def test_body_force_vanishes_in_codimension_one():
    ch = builtin_chart("round_sphere_nd", {"n": 3})
    hg = higher_geometry_from_chart(ch, points(ch))
    assert np.abs(stress_nd(hg).body_force).max() < 1e-12


@given(st.floats(-np.pi, np.pi))
def test_gauge_invariance_under_frame_rotation(angle):
    ch = builtin_chart("graph", {"n": 2, "k": 3})
    x = points(ch, 4)
    h0 = higher_geometry_from_chart(ch, x)
    h1 = higher_geometry_from_chart(ch, x, rotation=normal_rotation(3, angle, fixed=0))
    for attr in ("L", "s", "scal"):
        assert np.allclose(getattr(h0, attr), getattr(h1, attr), atol=1e-10)
    r0, r1 = gcr_residual(h0).residuals, gcr_residual(h1).residuals
    for k in ("gauss", "codazzi", "ricci"):
        assert abs(r0[k] - r1[k]) < 1e-10


def test_pressure_roots_against_sympy():
    P, M, S, SC = sp.symbols("p m s scal")
    for n in (2, 3, 4, 5):
        quad = -n * (n - 1) * P**2 + 2 * (n - 1) ** 2 * M * P - (n - 1) * (n - 2) * M**2 - SC + S
        vals = {M: 1.3, S: 0.4, SC: -0.7}
        ref = sorted(float(r) for r in sp.solve(quad.subs(vals), P))
        lo, hi, _ = pressure_roots_nd(1.3, -0.7, 0.4, n)
        assert np.allclose([lo, hi], ref)
        assert abs(pressure_quadratic(lo, 1.3, -0.7, 0.4, n)) < 1e-12
    lit = pressure_roots_nd(1.3, -0.7, 0.4, 4, literal=True)
    assert abs(pressure_quadratic(lit[0], 1.3, -0.7, 0.4, 4, literal=True)) < 1e-12
    with pytest.raises(NegativeDiscriminant):
        pressure_roots_nd(0.0, 5.0, 0.0, 3)


def test_odot_index_placement(rng):
    T, S = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    O = odot(T, S)
    i, l, j, k = 0, 1, 2, 1
    assert np.isclose(O[i, l, j, k], T[i, j] * S[k, l] - T[i, k] * S[j, l])


@pytest.mark.parametrize("n", [2, 3])
def test_round_sphere_consistency(n):
    r = 1.7
    ch = builtin_chart("round_sphere_nd", {"n": n, "r": r})
    hg = higher_geometry_from_chart(ch, points(ch, 6 if n == 2 else 4))
    rep = consistency_check(hg)
    assert rep.all_passed
    assert np.nanmax(rep.spread) < 1e-9
    lo, hi = rep.p_roots
    assert np.allclose(lo, hi, atol=1e-8)  # double root on the umbilic sphere
    # double root (n-1)m/n with mean curvature trace m = n/r
    assert np.allclose(np.abs(rep.p), (n - 1) / r, atol=1e-8)
    f = stress_nd(hg, rep.p).f_lower
    assert np.abs(f).max() < 1e-8


def test_surface_reduction_matches_principal_curvatures():
    ch = builtin_chart("geometric_torus", {"a": 1.0, "c": 2.0})
    hg = higher_geometry_from_chart(ch, points(ch, 9))
    lo, hi, _ = pressure_roots_nd(hg.m0, hg.scal, hg.s, 2)
    k = hg.state.principal
    assert np.allclose(np.sort(np.stack([lo, hi], -1), -1), np.sort(k, -1), atol=1e-9)
    rep = consistency_check(hg)
    assert rep.all_passed
    assert np.allclose(rep.p, k[..., 1], atol=1e-12)


@pytest.mark.parametrize("name,params", [("clifford_torus", {}), ("graph", {"n": 2, "k": 3}), ("round_sphere_nd", {"n": 3})])
def test_decomposition_and_ricci_two_ways(name, params):
    ch = builtin_chart(name, params)
    hg = higher_geometry_from_chart(ch, points(ch, 4))
    rep = consistency_check(hg)
    ok = rep.passed
    assert ok.any()
    assert np.abs(decomposition_residual(hg, rep.p)[ok]).max() < 1e-8
    a, b = ricci_two_ways(hg, rep.p)
    assert np.abs((a - b)[ok]).max() < 1e-8


def test_generic_graph_fails_consistency():
    ch = builtin_chart("graph", {"n": 3, "k": 2})
    rep = consistency_check(higher_geometry_from_chart(ch, points(ch, 4)))
    assert rep.summary()["pass_fraction"] < 0.2
    assert rep.summary()["verdict"] == "FAIL"


def test_hyperplane_is_vacuum():
    ch = builtin_chart("plane", {"n": 3, "k": 1})
    hg = higher_geometry_from_chart(ch, points(ch, 3))
    rep = consistency_check(hg)
    assert rep.all_passed and np.allclose(rep.p, 0.0) and np.allclose(rep.common_lambda, 0.0)


def _rank_one_field(w, phi):
    def f_field(x):
        x = np.asarray(x)
        fu = phi(x)[..., None, None] * np.outer(w, w)
        return fu, np.broadcast_to(np.eye(len(w)), fu.shape).copy()

    return f_field


def test_constant_flow_on_flat_torus():
    grid = Grid((12, 12, 6), ((0, 1), (0, 1), (0, 1)), (True, True, True))
    w = np.array([0.3, 0.0, 0.0])
    sol = fluid_nd(_rank_one_field(w, lambda x: np.ones(x.shape[:-1])), grid, t_max=2.0, dt=0.05)
    assert np.allclose(sol.fluid.rho, 1.0)
    assert np.allclose(sol.fluid.v_upper, w)


def test_manufactured_density_converges():
    w = np.array([1.0, 0.5])

    def phi(x):
        return 1 + 0.3 * np.sin(x[..., 0] + 2 * x[..., 1])

    errs, cont = [], []
    for n in (16, 32, 64):
        grid = Grid((n, n), ((0, 1), (0, 1)), (False, False))
        sol = fluid_nd(_rank_one_field(w, phi), grid, t_max=3, dt=0.02, rho0=lambda x: 1 / phi(x))
        errs.append(np.nanmax(np.abs(sol.fluid.rho - 1 / phi(grid.points()))))
        W = sol.fluid.rho[..., None] * sol.fluid.v_upper
        cont.append(np.nanmax(np.abs(covariant_div_v(W, np.zeros(grid.shape + (2, 2, 2)), grid))))
        assert np.allclose(sol.fluid.rho[..., None, None] * np.einsum("...i,...j->...ij", sol.fluid.v_upper, sol.fluid.v_upper), _rank_one_field(w, phi)(grid.points())[0], atol=1e-8)
    assert errs[1] < errs[0] / 3 and errs[2] < errs[1] / 3
    assert cont[2] < cont[0] / 10


def test_failed_consistency_blocks_fluid():
    ch = builtin_chart("graph", {"n": 3, "k": 2})
    grid = ch.grid(3)
    rep = consistency_check(higher_geometry(compute_geometry(ch, grid.points())))
    with pytest.raises(ConsistencyFailed):
        fluid_nd(_rank_one_field(np.ones(3), lambda x: np.ones(x.shape[:-1])), grid, consistency=rep)
