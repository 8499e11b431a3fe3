"""Acceptance criteria 1-9, each reported as one PASS/FAIL line."""

import io
import json
import os

import numpy as np

from geofluid.chart import Grid, builtin_chart
from geofluid.cli import FLUID_COLUMNS, run, validate_fields_csv, validate_fields_json, validate_report
from geofluid.fluid2d import construct_fluid, euler_residual, pressure_select, residual_tensor, stress_from_shape, verify_gauss_via_stress
from geofluid.geometry import compute_geometry, gauss_codazzi_residual, nested_fd_residual
from geofluid.multid import consistency_check, gcr_residual, higher_geometry_from_chart, pressure_roots_nd
from geofluid.renorm import fibonacci_lattice, limit_fluid_assembly, renorm_state, swap_branch, synthetic_sequence, verify_vanishing_claims, weak_star_pairings


def shrunk(ch, n, factor):
    rng = tuple((lo * factor, hi * factor) if per is None else (lo, hi) for (lo, hi), per in zip(ch.ranges, ch.periods))
    return ch.grid(n, rng).points()


def test_criterion_1_curvature_oracles(verdict):
    errs = {}
    for r in (1.0, 2.0):
        ch = builtin_chart("sphere", {"r": r})
        errs[f"sphere r={r:g}"] = np.abs(compute_geometry(ch, ch.grid(64).points()).kappa - 1 / r**2).max()
    ch = builtin_chart("geometric_torus", {"a": 1.0, "c": 2.0})
    x = ch.grid(64).points()
    cx = np.cos(x[..., 1])
    torus = np.abs(compute_geometry(ch, x).kappa - cx / (2 + cx)).max()
    ok = max(errs.values()) < 1e-9 and torus < 1e-8
    verdict(1, ok, " ".join(f"{k}: {v:.1e}" for k, v in errs.items()) + f" torus: {torus:.1e}")


def test_criterion_2_gauss_codazzi(verdict):
    names = ("sphere", "geometric_torus", "cylinder", "graph")
    analytic, fd, ratios = {}, {}, []
    for name in names:
        ch = builtin_chart(name)
        rep = gauss_codazzi_residual(compute_geometry(ch, shrunk(ch, 32, 0.95)))
        analytic[name] = max(rep.residuals["gauss"], rep.residuals["codazzi"])
        x = shrunk(ch, 10, 0.8)
        res = nested_fd_residual(ch, x, 1e-3).residuals
        fd[name] = max(res["gauss"], res["codazzi"])
        seq = [nested_fd_residual(ch, x, h).residuals for h in (0.04, 0.02, 0.01)]
        for key in ("gauss", "codazzi"):
            r = [s[key] for s in seq]
            # identically zero residuals (cylinder, sphere Codazzi) carry no rate
            if r[0] > 1e-10:
                ratios += [r[0] / r[1], r[1] / r[2]]
    ok = max(analytic.values()) < 1e-8 and max(fd.values()) < 1e-4 and ratios and all(3.2 <= q <= 4.8 for q in ratios)
    verdict(2, ok, f"analytic max {max(analytic.values()):.1e}, fd(h=1e-3) max {max(fd.values()):.1e}, ratios {min(ratios):.2f}..{max(ratios):.2f}")


def test_criterion_3_stress_identities(verdict):
    worst = [0.0, 0.0, 0.0]
    for name in ("geometric_torus", "graph", "sphere"):
        ch = builtin_chart(name)
        st = compute_geometry(ch, ch.grid(64).points())
        g, H = st.g, st.H[..., 0, :, :]
        P = stress_from_shape(g, H)
        p, _ = pressure_select(st.principal[..., 0], st.principal[..., 1])
        m = np.trace(np.linalg.solve(g, H), axis1=-2, axis2=-1)
        f = residual_tensor(g, P, p)
        worst[0] = max(worst[0], verify_gauss_via_stress(P, g, st.kappa).max())
        worst[1] = max(worst[1], np.abs(p * p - m * p + st.kappa).max())
        worst[2] = max(worst[2], np.abs(np.linalg.det(np.linalg.solve(g, f))).max())
    ok = worst[0] < 1e-9 and worst[1] < 1e-10 and worst[2] < 1e-10
    verdict(3, ok, "det P: {:.1e}, pressure quadratic: {:.1e}, det(g^-1 f): {:.1e}".format(*worst))


def test_criterion_4_torus_euler_solution(verdict):
    ch = builtin_chart("geometric_torus", {"a": 1.0, "c": 2.0})
    b = float(np.arccos(0.1))
    cont, mom, positive = [], 0.0, True
    for n in (32, 64, 128):
        grid = Grid((n, n), ((-np.pi, np.pi), (-b, b)), (True, False))
        sol = construct_fluid(ch, grid, t_max=4.0, dt=0.02)
        res = euler_residual(sol).residuals
        cont.append(res["continuity"])
        mom = max(mom, res["momentum_exact"])
        positive &= all(np.all(pth.rho_along > 0) for pth in sol.paths) and np.all(sol.rho_grid > 0)
    ratios = [cont[0] / cont[1], cont[1] / cont[2]]
    ok = mom < 1e-8 and cont[1] < 5e-3 and all(3.2 <= q <= 4.8 for q in ratios) and positive
    verdict(4, ok, f"momentum {mom:.1e}, continuity {cont[0]:.1e}/{cont[1]:.1e}/{cont[2]:.1e}, ratios {ratios[0]:.2f} {ratios[1]:.2f}, rho>0 {positive}")


def test_criterion_5_sphere_static(verdict):
    worst = 0.0
    ok = True
    for r in (1.0, 2.0):
        ch = builtin_chart("sphere", {"r": r})
        sol = construct_fluid(ch, ch.grid(64))
        fl = sol.fluid
        res = euler_residual(sol).residuals
        ok &= np.abs(fl.f).max() < 1e-10 and np.abs(fl.v_upper).max() < 1e-10
        ok &= np.abs(np.abs(fl.p) - 1 / r).max() < 1e-10 and np.ptp(fl.p) < 1e-10
        worst = max(worst, res["continuity"], res["momentum_exact"], res["momentum_fd"])
    ok &= worst < 1e-10
    verdict(5, bool(ok), f"max Euler residual {worst:.1e}")


def test_criterion_6_renormalization_trend(verdict):
    seq = synthetic_sequence(Q=8)
    eta_ok, delta_ok = seq.monotonicity(slack=0.0)
    x = fibonacci_lattice(4096)
    gauss = max(renorm_state(s, e, x).report.residuals["gauss"] for s, e in zip(seq.surfaces, seq.eta))
    claims = verify_vanishing_claims(weak_star_pairings(seq))
    v = claims["verdicts"]
    ok = eta_ok and delta_ok and gauss < 1e-9 and all(x == "PASS" for x in v.values())
    worst = {k: float(np.max(d["final_over_initial"])) for k, d in claims["details"].items()}
    verdict(6, ok, f"eta up {eta_ok}, delta down {delta_ok}, gauss {gauss:.1e}, " + ", ".join(f"{k} {v[k]} (max ratio {worst[k]:.3f})" for k in v))


def test_criterion_7_limit_fluid(verdict):
    fixtures = [np.outer(w, w) for w in ([1.0, 2.0], [0.5, -1.5], [2.0, 0.0], [0.0, 1.0])]
    grid = Grid((12, 12), ((0.0, 1.0), (0.0, 1.0)), (True, True))
    mom, swap = 0.0, 0.0
    for hb in fixtures:
        field = np.broadcast_to(hb, grid.shape + (2, 2))
        for h in (field, swap_branch(field)):
            lf = limit_fluid_assembly(h, rho=1.3, grid=grid)
            mom = max(mom, lf.report.residuals["momentum"], lf.report.residuals["factorization"])
        a = limit_fluid_assembly(hb, rho=1.3).fluid
        b = limit_fluid_assembly(swap_branch(hb), rho=1.3).fluid
        rvv = [f.rho * np.outer(f.v_upper, f.v_upper) for f in (a, b)]
        swap = max(swap, np.abs(rvv[0] - rvv[1]).max())
    verdict(7, mom < 1e-8 and swap < 1e-10, f"momentum {mom:.1e}, branch swap {swap:.1e}")


def test_criterion_8_multid(verdict):
    ch = builtin_chart("clifford_torus")
    x = ch.grid(48).points()
    gcr = gcr_residual(higher_geometry_from_chart(ch, x)).residuals
    riem = np.abs(compute_geometry(ch, x).Riemann).max()
    ok = max(gcr["gauss"], gcr["codazzi"], gcr["ricci"]) < 1e-8 and riem < 1e-9
    parts = [f"clifford gcr {max(gcr['gauss'], gcr['codazzi'], gcr['ricci']):.1e} R {riem:.1e}"]
    for n in (2, 3):
        sph = builtin_chart("round_sphere_nd", {"n": n})
        hg = higher_geometry_from_chart(sph, shrunk(sph, 8 if n == 2 else 5, 1.0))
        rep = consistency_check(hg)
        lo, hi, _ = pressure_roots_nd(hg.m0, hg.scal, hg.s, n)
        lam_err = np.minimum(np.abs(rep.common_lambda - (hg.m0 - lo)), np.abs(rep.common_lambda - (hg.m0 - hi))).max()
        spread = np.nanmax(rep.spread)
        ok &= rep.all_passed and spread < 1e-9 and lam_err < 1e-8
        parts.append(f"S^{n} spread {spread:.1e} lambda {lam_err:.1e}")
    tor = builtin_chart("geometric_torus")
    pts = tor.grid(16).points()
    rep2 = consistency_check(higher_geometry_from_chart(tor, pts))
    st = compute_geometry(tor, pts)
    p2d, _ = pressure_select(st.principal[..., 0], st.principal[..., 1])
    red = np.abs(rep2.p - p2d).max()
    ok &= rep2.all_passed and red < 1e-12
    parts.append(f"n=2 reduction {red:.1e}")
    verdict(8, bool(ok), ", ".join(parts))


def _cli(argv):
    return run(argv, stdout=io.StringIO(), stderr=io.StringIO())


def test_criterion_9_determinism_and_schema(verdict, tmp_path):
    out = str(tmp_path / "out")
    b = float(np.arccos(0.1))
    cfg = tmp_path / "fluid.json"
    cfg.write_text(json.dumps({"grid": {"counts": [16, 16], "ranges": [[-np.pi, np.pi], [-b, b]]}, "t_max": 4, "dt": 0.02}))
    runs = [
        ["--out", out, "surface", "--chart", "geometric_torus", "--grid", "12x12"],
        ["--out", out, "--format", "json", "verify", "--chart", "sphere", "--grid", "12x12"],
        ["--config", str(cfg), "--out", out, "fluid", "--chart", "geometric_torus"],
        ["--out", out, "--format", "json", "multid", "--chart", "clifford_torus", "--grid", "8x8"],
        ["--out", out, "renorm", "--Q", "2"],
    ]
    codes, snapshots = [], []
    for _ in range(2):
        for argv in runs:
            codes.append(_cli(argv))
        snapshots.append({f: open(os.path.join(out, f), "rb").read() for f in sorted(os.listdir(out))})
    same = snapshots[0] == snapshots[1]
    schema_ok = True
    for name, data in snapshots[1].items():
        text = data.decode()
        try:
            if name.endswith("_report.json"):
                validate_report(text)
            elif name.endswith(".json"):
                validate_fields_json(text)
            else:
                validate_fields_csv(text, FLUID_COLUMNS if name == "fluid.csv" else None)
        except Exception:
            schema_ok = False
    ok = same and schema_ok and all(c in (0, 1) for c in codes)
    verdict(9, ok, f"{len(snapshots[1])} artifacts, byte-identical {same}, schemas valid {schema_ok}, exit codes {sorted(set(codes))}")
