import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from geofluid.errors import MixedDiagonalSigns, QuadratureUnderResolved, RankNotOne, ScheduleViolation
from geofluid.renorm import (
    Bump,
    CorrugatedTorus,
    SampledSurface,
    check_schedule,
    fibonacci_lattice,
    limit_fluid_assembly,
    load_surface_csv,
    pair_fields,
    phi_dictionary,
    renorm_state,
    swap_branch,
    synthetic_sequence,
    verify_vanishing_claims,
    weak_star_pairings,
)

TWO_PI = 2 * np.pi


@pytest.mark.parametrize(
    "amps,lams",
    [
        ([0.5, 0.25], [4, 4.5]),  # non-integer frequency
        ([1.5, 0.25], [4, 16]),  # amplitude above one
        ([0.5, 0.1], [4, 16]),  # a * lambda not increasing
        ([0.5], [4, 16]),
    ],
)
def test_schedule_violations(amps, lams):
    with pytest.raises(ScheduleViolation):
        check_schedule(amps, lams)


def test_default_schedule_is_admissible():
    check_schedule([2.0**-q for q in range(1, 9)], [4**q for q in range(1, 9)])
    check_schedule([0.0, 0.0], [4, 16])


def test_fibonacci_lattice_projections_are_uniform():
    pts = fibonacci_lattice(1000)
    n = len(pts)
    assert n >= 1000
    for ax in (0, 1):
        assert np.allclose(np.sort(pts[:, ax]), np.arange(n) / n)


def test_bump_has_unit_mass():
    b = Bump((0.3, -0.2), 0.1)
    val, _ = quad(lambda t: np.exp(-1 / (1 - t * t)), -1, 1)
    assert abs(val - 0.443993816168079) < 1e-12
    n = 801
    ax = np.linspace(-1, 1, n)
    z = np.stack(np.meshgrid(0.3 + 0.1 * ax, -0.2 + 0.1 * ax, indexing="ij"), -1)
    dz = 0.2 / (n - 1)
    assert abs(b(z).sum() * dz * dz - 1) < 1e-6
    assert len(phi_dictionary(1.0)) == 12


def test_base_torus_curvature():
    a, c = 0.2, 0.4
    x = fibonacci_lattice(200)
    eta = 3.0
    s = renorm_state(CorrugatedTorus(a, c), eta, x)
    th = TWO_PI * x[:, 1]
    K = TWO_PI**2 * np.cos(th) / (a * (c + a * np.cos(th)))
    assert np.allclose(s.gamma * eta**2, K, rtol=1e-10, atol=1e-9)


@pytest.mark.parametrize("q", [0, 1, 2, 3])
def test_renormalized_identities(q):
    seq = synthetic_sequence(Q=3)
    x = fibonacci_lattice(500)
    rep = renorm_state(seq.surfaces[q], seq.eta[q], x).report.residuals
    assert rep["gauss"] < 1e-10
    assert rep["codazzi_z"] < 1e-10


def test_sequence_monotone():
    seq = synthetic_sequence(Q=4)
    eta_ok, delta_ok = seq.monotonicity()
    assert eta_ok and delta_ok
    assert seq.delta[-1] == 0.0


def test_quadrature_refinement_stable():
    seq = synthetic_sequence(Q=3)
    phis = phi_dictionary(float(seq.eta[0]))
    for q in (2, 3):
        a, _ = pair_fields(seq.surfaces[q], seq.eta[q], phis, nodes=512)
        b, _ = pair_fields(seq.surfaces[q], seq.eta[q], phis, nodes=1024)
        for k in a:
            assert np.abs(a[k] - b[k]).max() < 1e-6 * np.abs(b[k]).max()


def test_quadrature_under_resolved():
    surf = CorrugatedTorus(0.2, 0.4, ((0.5, 64.0, (1.0, 0.0)),))
    with pytest.raises(QuadratureUnderResolved):
        pair_fields(surf, 1.0, phi_dictionary(1.0), nodes=64)
    with pytest.raises(QuadratureUnderResolved):
        pair_fields(surf, 1.0, phi_dictionary(1.0), max_nodes=128)


def test_flat_sequence_not_applicable():
    seq = synthetic_sequence(Q=2, amplitudes=[0.0, 0.0])
    res = verify_vanishing_claims(weak_star_pairings(seq, eta=seq.eta[0]))
    assert set(res["verdicts"].values()) == {"NOT-APPLICABLE"}


@pytest.mark.slow
def test_frozen_eta_negative_control():
    seq = synthetic_sequence(Q=3)
    res = verify_vanishing_claims(weak_star_pairings(seq, eta=seq.eta[0]))
    assert "FAIL" in res["verdicts"].values()


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 5))
@settings(max_examples=50)
def test_limit_fluid_rank_one(w1, w2, rho):
    w = np.array([w1, w2])
    if np.abs(w).max() < 1e-3:
        return
    hb = np.outer(w, w)
    for h in (hb, swap_branch(hb)):
        lf = limit_fluid_assembly(h, rho=rho)
        r = lf.report.residuals
        assert r["factorization"] < 1e-9 * (1 + np.abs(hb).max())
        assert r["gauss_limit"] < 1e-9 * (1 + np.abs(hb).max()) ** 2
    assert limit_fluid_assembly(hb).branch == "pressureless"
    assert limit_fluid_assembly(swap_branch(hb)).branch == "negative"


def test_limit_fluid_worked_example():
    lf = limit_fluid_assembly(np.outer([1.0, 2.0], [1.0, 2.0]))
    assert np.allclose(lf.fluid.v_upper, [2.0, -1.0])
    assert lf.fluid.p == 0.0
    sw = limit_fluid_assembly(swap_branch(np.outer([1.0, 2.0], [1.0, 2.0])))
    assert np.isclose(sw.fluid.p, -5.0)
    assert np.allclose(sw.fluid.v_upper, lf.fluid.v_upper)  # the swap leaves F unchanged


def test_limit_fluid_errors():
    with pytest.raises(RankNotOne):
        limit_fluid_assembly(np.eye(2))
    field = np.stack([np.outer([1.0, 1.0], [1.0, 1.0]), -np.outer([1.0, 1.0], [1.0, 1.0])])
    with pytest.raises(MixedDiagonalSigns):
        limit_fluid_assembly(field)


def test_csv_import_round_trip(tmp_path):
    surf = CorrugatedTorus(0.2, 0.4, ((0.5, 3.0, (1.0, 0.0)),))
    n = 32
    ax = np.arange(n) / n
    X = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    Y = surf.jet(X, 0).val
    path = tmp_path / "u.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "y1", "y2", "y3"])
        for x, y in zip(X[::-1], Y[::-1]):
            w.writerow([*x, *y])
    loaded = load_surface_csv(path)
    assert isinstance(loaded, SampledSurface)
    pts = np.random.default_rng(1).random((40, 2))
    a, b = loaded.jet(pts, 2), surf.jet(pts, 2)
    for m in range(3):
        assert np.abs(a.c[m] - b.c[m]).max() < 1e-8 * TWO_PI**m * 100
