"""n-dimensional submanifolds of codimension k and the fluids built on a distinguished normal.

Index conventions (all arrays carry batch axes first):

* ``H[m, i, j]``: second fundamental form of normal ``m``.
* ``A[v, m, i] = (d_i nu_m) . nu_v``, antisymmetric in ``(v, m)``.
* ``R[i, l, j, k]``: curvature with the Gauss equation
  ``R_iljk = sum_m H_m,ij H_m,kl - H_m,ik H_m,jl``.
* Raised indices always use ``g^{-1}``; ``H'[m, j, i] = g^jk H_m,ki``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional

import numpy as np

from . import jets as J
from .chart import Chart, Grid
from .errors import ConsistencyFailed, NegativeDiscriminant, NegativeF
from .fluid2d import FluidState, default_seeds, integrate_characteristics, resample_to_grid
from .geometry import GeometryState, compute_geometry, divergence_mixed_exact, gauss_residual, shape_eigenvalues
from .report import ResidualReport, sup


def odot(T, S):
    """``(T (.) S)_iljk = T_ij S_kl - T_ik S_jl``."""
    return np.einsum("...ij,...kl->...iljk", T, S) - np.einsum("...ik,...jl->...iljk", T, S)


@dataclass
class HigherGeometry:
    state: GeometryState
    normal_index: int
    mean_vec: np.ndarray  # m^mu = g^ij H_mu,ij
    L: np.ndarray
    s: np.ndarray
    Ric: np.ndarray
    scal: np.ndarray

    @property
    def g(self):
        return self.state.g

    @property
    def H_mu(self):
        return self.state.H

    @property
    def A(self):
        return self.state.A

    @property
    def n(self):
        return self.state.n

    @property
    def k(self):
        return self.state.k

    @property
    def H0(self):
        """Second fundamental form of the distinguished normal."""
        return self.state.H[..., self.normal_index, :, :]

    @property
    def m0(self):
        return self.mean_vec[..., self.normal_index]


def higher_geometry(state: GeometryState, normal_index=0) -> HigherGeometry:
    k = state.k
    if not 0 <= normal_index < k:
        raise ValueError(f"normal_index {normal_index} outside 0..{k - 1}")
    H = state.H
    others = [m for m in range(k) if m != normal_index]
    Ho = H[..., others, :, :]
    L = np.einsum("...mij,...mkl->...iljk", Ho, Ho) - np.einsum("...mik,...mjl->...iljk", Ho, Ho)
    gi = state.g_inv
    s = np.einsum("...ij,...kl,...iljk->...", gi, gi, L)
    Ric = np.einsum("...ij,...iljk->...lk", gi, state.Riemann)
    scal = np.einsum("...kl,...lk->...", gi, Ric)
    return HigherGeometry(state, normal_index, state.mean, L, s, Ric, scal)


def higher_geometry_from_chart(chart: Chart, x, normal_index=0, rotation=None, jets="analytic") -> HigherGeometry:
    return higher_geometry(compute_geometry(chart, x, jets=jets, rotation=rotation), normal_index)


def normal_rotation(k, angle, fixed=0):
    """Rotation of the normal frame in the plane of the first two normals other than ``fixed``."""
    R = np.eye(k)
    others = [m for m in range(k) if m != fixed]
    if len(others) >= 2:
        a, b = others[:2]
        c, s = np.cos(angle), np.sin(angle)
        R[a, a], R[a, b], R[b, a], R[b, b] = c, -s, s, c
    return R


# ---------------------------------------------------------------------------
# Gauss, Codazzi, Ricci


def codazzi_nd_residual(state: GeometryState):
    """``nabla_i H_m,jk - nabla_j H_m,ik - A[v,m,i] H_v,jk + A[v,m,j] H_v,ik``; array ``[m, i, j, k]``."""
    H, dH, G = state.H, state.dH, state.Gamma
    # nabla_i H_m,jk with dH[m, j, k, i] = d_i H_m,jk
    nab = (
        np.einsum("...mjki->...mijk", dH)
        - np.einsum("...pij,...mpk->...mijk", G, H)
        - np.einsum("...pik,...mjp->...mijk", G, H)
    )
    A = state.A
    return (
        nab
        - np.einsum("...mijk->...mjik", nab)
        - np.einsum("...vmi,...vjk->...mijk", A, H)
        + np.einsum("...vmj,...vik->...mijk", A, H)
    )


def ricci_nd_residual(state: GeometryState):
    """Ricci equation for the normal connection; array ``[v, m, i, j]``."""
    A, dA, H = state.A, state.dA, state.H
    gi = state.g_inv
    curv = (
        np.einsum("...vmji->...vmij", dA)
        - dA
        + np.einsum("...emj,...vei->...vmij", A, A)
        - np.einsum("...emi,...vej->...vmij", A, A)
    )
    hh = np.einsum("...pq,...mip,...vjq->...vmij", gi, H, H) - np.einsum("...pq,...mjp,...viq->...vmij", gi, H, H)
    return curv + hh


def gcr_residual(hg: HigherGeometry, tol=None) -> ResidualReport:
    st = hg.state
    rep = ResidualReport()
    rep.add("gauss", sup(gauss_residual(st)), tol)
    rep.add("codazzi", sup(codazzi_nd_residual(st)), tol)
    rep.add("ricci", sup(ricci_nd_residual(st)), tol)
    rep.add("A_antisymmetry", sup(st.A + np.swapaxes(st.A, -3, -2)))
    return rep


# ---------------------------------------------------------------------------
# stress


@dataclass
class StressND:
    P_mixed: np.ndarray  # P[j, i] = P^j_i
    body_force: np.ndarray
    balance: np.ndarray  # nabla_j P^j_i - Pi_i
    f_upper: Optional[np.ndarray] = None
    f_lower: Optional[np.ndarray] = None
    A_tensor: Optional[np.ndarray] = None
    B_tensor: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None


def stress_jet(hg: HigherGeometry) -> J.Jet:
    """Order-1 jet of ``P^j_i = -H'^j_i + m delta^j_i`` for the distinguished normal."""
    st = hg.state
    H = st.jets["H"].take(hg.normal_index, -3)
    Hm = J.jeinsum("jk,ki->ji", st.jets["g_inv"].truncate(1), H)
    m = J.jtrans("ii->", Hm)
    return J.jeinsum(",ji->ji", m, np.eye(hg.n)) - Hm


def body_force(hg: HigherGeometry):
    """``Pi_i = A[v,m0,i] m^v - A[v,m0,j] H'_v^j_i``."""
    st = hg.state
    mu = hg.normal_index
    Hm = st.shape_operator  # [v, j, i]
    A = st.A[..., :, mu, :]  # [v, i]
    return np.einsum("...vi,...v->...i", A, hg.mean_vec) - np.einsum("...vj,...vji->...i", A, Hm)


def stress_nd(hg: HigherGeometry, p=None, rho=None) -> StressND:
    """Stress on the distinguished normal and, given ``p``, the fluid tensors.

    ``f_lower = (m - p) g - H`` equals ``rho v (x) v`` whenever the consistency
    conditions hold; ``A_tensor``/``B_tensor`` split ``R - L`` accordingly.
    """
    Pj = stress_jet(hg)
    Pi = body_force(hg)
    balance = divergence_mixed_exact(Pj, hg.state.Gamma) - Pi
    out = StressND(P_mixed=Pj.val, body_force=Pi, balance=balance)
    if p is not None:
        g, gi = hg.g, hg.state.g_inv
        lam = hg.m0 - np.asarray(p)
        f = lam[..., None, None] * g - hg.H0
        out.f_lower = f
        out.f_upper = gi @ f @ gi
        out.A_tensor = odot(g, f) + odot(f, g)
        out.B_tensor = odot(g, g)
        if rho is not None:
            vv = f / np.asarray(rho)[..., None, None]
            out.sigma = 0.5 * (np.einsum("...ij,...kl->...ijkl", g, vv) + np.einsum("...ij,...kl->...ijkl", vv, g))
    return out


# ---------------------------------------------------------------------------
# pressure


def pressure_quadratic(p, m, scal, s, n, literal=False):
    """Left side of the pressure quadratic (zero at admissible pressures)."""
    c = (n - 1) * (n - 2) * m**2
    return -n * (n - 1) * p**2 + 2 * (n - 1) ** 2 * m * p + (c if literal else -c) - scal + s


def pressure_roots_nd(m, scal, s, n, literal=False, tol=1e-12, strict=True):
    """Roots ``(p_minus, p_plus, disc)`` of the pressure quadratic.

    The default is the form obtained by contracting the Gauss equation; it
    reproduces the round sphere and the 2-D formulas.  ``literal=True`` flips
    the sign of the ``m^2`` term.
    Discriminants within ``tol`` times their natural scale are roundoff
    around a double root and are set to zero (the square root would
    otherwise amplify them).  With ``strict`` a negative discriminant raises.
    """
    if n < 2:
        raise ValueError("pressure_roots_nd needs n >= 2")
    m = np.asarray(m, dtype=float)
    scal = np.asarray(scal, dtype=float)
    s = np.asarray(s, dtype=float)
    sign = 1.0 if literal else -1.0
    disc = (n - 1) ** 4 * m**2 + sign * n * (n - 1) ** 2 * (n - 2) * m**2 + n * (n - 1) * (s - scal)
    scale = (n - 1) ** 4 * m**2 + n * (n - 1) * (np.abs(s) + np.abs(scal)) + 1e-300
    disc = np.where(np.abs(disc) <= tol * scale, 0.0, disc)
    if strict and np.any(disc < 0):
        raise NegativeDiscriminant(f"pressure_roots_nd: discriminant {float(np.min(disc)):.3e} < 0")
    r = np.sqrt(np.where(disc >= 0, disc, np.nan))
    den = n * (n - 1)
    return ((n - 1) ** 2 * m - r) / den, ((n - 1) ** 2 * m + r) / den, disc


# ---------------------------------------------------------------------------
# consistency (rank-one structure of f)


@dataclass
class ConsistencyReport:
    pairs: list
    eigenvalues: np.ndarray  # [..., pair, 2]
    common_lambda: np.ndarray
    spread: np.ndarray
    p_roots: tuple
    discriminant: np.ndarray
    matched_root: np.ndarray  # 'minus' | 'plus' | 'both' | 'none'
    p: np.ndarray
    passed: np.ndarray
    tol: float = 1e-8

    @property
    def all_passed(self):
        return bool(np.all(self.passed))

    def summary(self):
        ok = self.passed
        return {
            "points": int(ok.size),
            "passed": int(ok.sum()),
            "pass_fraction": float(ok.mean()) if ok.size else 1.0,
            "max_spread": float(np.nanmax(np.where(ok, self.spread, np.nan))) if ok.any() else None,
            "verdict": "PASS" if ok.all() else "FAIL",
        }


def consistency_check(hg: HigherGeometry, tol=1e-8, literal=False) -> ConsistencyReport:
    """Pointwise check that ``(m - p) g - H`` is rank one for a root ``p``.

    For every index pair the principal 2x2 blocks ``G, C`` of ``g`` and the
    distinguished ``H`` give eigenvalues of ``G^-1 C``; a common eigenvalue
    ``lambda`` across all pairs must equal ``m - p`` for a pressure root.
    Among admissible choices the largest ``lambda`` is kept (it makes ``f``
    positive semidefinite).
    """
    g, H0, m = hg.g, hg.H0, hg.m0
    n = hg.n
    pairs = list(combinations(range(n), 2))
    ev = []
    for a, b in pairs:
        ix = np.ix_([a, b], [a, b])
        ev.append(shape_eigenvalues(g[(Ellipsis,) + ix], H0[(Ellipsis,) + ix]))
    ev = np.stack(ev, axis=-2)  # [..., pair, 2]
    thr = tol * (1.0 + np.abs(m))
    p_minus, p_plus, disc = pressure_roots_nd(m, hg.scal, hg.s, n, literal=literal, strict=False)
    shape = m.shape
    best_lam = np.full(shape, np.nan)
    best_spread = np.full(shape, np.nan)
    best_p = np.full(shape, np.nan)
    label = np.full(shape, "none", dtype=object)
    for c in range(2):
        cand = ev[..., 0, c]
        d = np.abs(ev - cand[..., None, None])
        pick = np.take_along_axis(ev, np.argmin(d, axis=-1)[..., None], axis=-1)[..., 0]
        common = np.max(np.min(d, axis=-1), axis=-1) <= thr
        lam = pick.mean(axis=-1)
        spread = pick.max(axis=-1) - pick.min(axis=-1)
        hit_m = np.abs(lam - (m - p_minus)) <= thr
        hit_p = np.abs(lam - (m - p_plus)) <= thr
        ok = common & (hit_m | hit_p)
        better = ok & ~(lam <= best_lam)  # NaN-aware "greater than current best"
        best_lam = np.where(better, lam, best_lam)
        best_spread = np.where(better, spread, best_spread)
        best_p = np.where(better, m - lam, best_p)
        lab = np.where(hit_m & hit_p, "both", np.where(hit_m, "minus", "plus"))
        label = np.where(better, lab, label)
    passed = np.isfinite(best_lam)
    return ConsistencyReport(
        pairs=pairs,
        eigenvalues=ev,
        common_lambda=best_lam,
        spread=best_spread,
        p_roots=(p_minus, p_plus),
        discriminant=disc,
        matched_root=label,
        p=best_p,
        passed=passed,
        tol=tol,
    )


def decomposition_residual(hg: HigherGeometry, p):
    """``R - L - (p - m) A - (p - m)^2 B`` with ``A, B`` from ``f = (m - p) g - H``."""
    st = stress_nd(hg, p)
    pm = (np.asarray(p) - hg.m0)[..., None, None, None, None]
    return hg.state.Riemann - hg.L - pm * st.A_tensor - pm**2 * st.B_tensor


def ricci_two_ways(hg: HigherGeometry, p):
    """Ricci from the curvature tensor and from the fluid decomposition."""
    n = hg.n
    g, gi = hg.g, hg.state.g_inv
    st = stress_nd(hg, p)
    f = st.f_lower
    pm = (np.asarray(p) - hg.m0)[..., None, None]
    rv2 = np.einsum("...ij,...ij->...", gi, f)[..., None, None]
    ric = pm * ((n - 2) * f + g * rv2) + pm**2 * (n - 1) * g + np.einsum("...ij,...iljk->...lk", gi, hg.L)
    return hg.Ric, ric


# ---------------------------------------------------------------------------
# velocity and density


def velocity_upper(f_upper, rho, tol=1e-10):
    """``v^j = s_j sqrt(f^jj / rho)`` with signs relative to the largest diagonal entry."""
    f = np.asarray(f_upper, dtype=float)
    diag = np.einsum("...jj->...j", f)
    scale = 1.0 + np.abs(f).max()
    if np.any(diag < -tol * scale):
        raise NegativeF("velocity_upper: negative diagonal entry of f")
    diag = np.where(diag <= tol * scale, 0.0, diag)
    ref = np.argmax(diag, axis=-1)
    row = np.take_along_axis(f, ref[..., None, None], axis=-2)[..., 0, :]
    s = np.where(row < -tol * scale, -1.0, 1.0)
    return s * np.sqrt(diag / np.asarray(rho)[..., None])


def speed_field(f_field: Callable, h=1e-5, tol=1e-10):
    """Characteristic field for ``nabla_k (rho v^k) = 0``: ``a^k = sqrt(det g) s_k sqrt(f^kk)``.

    ``f_field(x) -> (f_upper, g)`` on points ``(M, n)``; the divergence of
    ``a`` uses central differences with step ``h``.
    """

    def a_of(x):
        fu, g = f_field(x)
        return np.sqrt(np.linalg.det(g))[..., None] * velocity_upper(fu, np.ones(fu.shape[:-2]), tol)

    def field_fn(x):
        x = np.asarray(x, dtype=float)
        a = a_of(x)
        div = np.zeros(x.shape[:-1])
        for k in range(x.shape[-1]):
            e = np.zeros(x.shape[-1])
            e[k] = h
            div += (a_of(x + e)[..., k] - a_of(x - e)[..., k]) / (2 * h)
        return a, div

    return field_fn


@dataclass
class FluidND:
    fluid: FluidState
    paths: list
    defined: np.ndarray
    consistency: Optional[ConsistencyReport] = None
    extras: dict = field(default_factory=dict, repr=False)


def fluid_nd(f_field: Callable, grid: Grid, p=None, seeds=None, rho0=1.0, t_max=5.0, dt=0.01, consistency=None, h=1e-5) -> FluidND:
    """Density and velocity for a rank-one ``f`` field given as a callable.

    ``p`` may be an array on the grid (default zero); ``rho0`` is a number
    or a callable of position giving the seed densities.  A failed
    ``consistency`` report raises :class:`ConsistencyFailed`.
    """
    if consistency is not None and not consistency.all_passed:
        bad = int((~consistency.passed).sum())
        raise ConsistencyFailed(f"fluid_nd: consistency conditions fail at {bad} point(s)")
    pts = grid.points()
    flat = pts.reshape(-1, grid.ndim)
    fu, g = f_field(flat)
    fu = fu.reshape(grid.shape + fu.shape[-2:])
    g = g.reshape(grid.shape + g.shape[-2:])
    field_fn = speed_field(f_field, h=h)
    periods = tuple((hi - lo) if per else None for (lo, hi), per in zip(grid.ranges, grid.periodic))
    diag = np.einsum("...jj->...j", fu)
    moving = diag.sum(axis=-1) > 1e-10 * (1.0 + np.abs(fu).max())
    paths = []
    rho = np.broadcast_to(rho0(pts) if callable(rho0) else float(rho0), grid.shape).astype(float)
    if moving.any():
        if seeds is None:
            seeds = default_seeds(field_fn, grid)
        r0 = rho0(np.asarray(seeds)) if callable(rho0) else rho0
        paths = integrate_characteristics(field_fn, seeds, r0, t_max, dt, grid.ranges, periods)
        rho_m = resample_to_grid(paths, pts, grid.ranges, periods, max_dist=2 * max(grid.spacing()))
        rho = np.where(moving, rho_m, rho)
    defined = np.isfinite(rho)
    rho_safe = np.where(defined, rho, 1.0)
    vu = velocity_upper(fu, rho_safe)
    vl = np.einsum("...ij,...j->...i", g, vu)
    pr = np.zeros(grid.shape) if p is None else np.asarray(p, dtype=float)
    fl = FluidState(
        rho=np.where(defined, rho, np.nan),
        v_lower=vl,
        v_upper=vu,
        p=pr,
        speed_sq=np.einsum("...i,...i->...", vu, vl),
        f=fu,
    )
    return FluidND(fl, paths, defined, consistency, extras={"g": g})


def chart_f_field(chart: Chart, normal_index=0, rotation=None, tol=1e-8):
    """``x -> (f_upper, g)`` for a chart, with ``p`` chosen by :func:`consistency_check`.

    Points failing the consistency conditions raise :class:`ConsistencyFailed`.
    """

    def f_field(x):
        hg = higher_geometry_from_chart(chart, x, normal_index, rotation)
        rep = consistency_check(hg, tol=tol)
        if not rep.all_passed:
            raise ConsistencyFailed("chart_f_field: consistency conditions fail along the flow")
        st = stress_nd(hg, rep.p)
        return st.f_upper, hg.g

    return f_field
