"""Intrinsic and extrinsic geometry of an embedding from its derivative jets.

Index conventions (arrays, per sample point):

* ``g[i, j]``, ``g_inv[i, j]``; ``dg[i, j, k] = d_k g_ij``
* ``Gamma[i, j, k]`` is the Christoffel symbol with upper index ``i``
* ``H[m, i, j]`` is the second fundamental form along normal ``m``
* ``A[nu, mu, i] = (d_i nu_mu) . nu_nu`` (normal connection)
* ``R[l, i, j, k] = g_lp (d_j Gamma^p_ik - d_k Gamma^p_ij + Gamma^p_jq Gamma^q_ik - Gamma^p_kq Gamma^q_ij)``

With these, ``R[a, b, c, d] = sum_m H_ac H_bd - H_ad H_bc`` for an embedding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import jets as J
from .chart import Chart, Grid, eval_jet, finite_difference_jet
from .errors import ComplexEigenvalues, NotPositiveDefinite, RankDeficient
from .report import ResidualReport, sup


def tangents(y: J.Jet) -> J.Jet:
    """Jet of the tangent vectors, value shape ``(..., N, n)``."""
    return y.grad()


def first_form(y: J.Jet) -> J.Jet:
    E = tangents(y)
    g = J.jeinsum("ai,aj->ij", E, E)
    ev = np.linalg.eigvalsh(g.val)
    if np.any(ev[..., 0] <= 0):
        raise NotPositiveDefinite("first_form: metric is not positive definite")
    return g


def _generalized_cross(E: J.Jet) -> J.Jet:
    """Normal of a hypersurface: components det[d_1 y, ..., d_n y, e_a]."""
    N, n = E.shape[-2], E.shape[-1]
    if n == 2 and N == 3:
        a, b = E.sel(slice(None), 0), E.sel(slice(None), 1)
        comps = [
            a.sel(1) * b.sel(2) - a.sel(2) * b.sel(1),
            a.sel(2) * b.sel(0) - a.sel(0) * b.sel(2),
            a.sel(0) * b.sel(1) - a.sel(1) * b.sel(0),
        ]
        return J.stack(comps, axis=-1)
    comps = []
    for a in range(N):
        e = np.zeros(E.shape[:-1])
        e[..., a] = 1.0
        M = J.stack([E.sel(slice(None), i) for i in range(n)] + [J.const(e, E.n)], axis=-1)
        comps.append(J.det(M))
    return J.stack(comps, axis=-1)


def _normalize(w: J.Jet) -> J.Jet:
    norm2 = J.jeinsum("a,a->", w, w)
    return w * J.power(norm2, -0.5).expand(-1)


def _project_out(w, E, g_inv, frame):
    # remove tangential part, then components along already-built normals
    c = J.jeinsum("ai,a->i", E, w)
    w = w - J.jeinsum("ai,i->a", E, J.jeinsum("ij,j->i", g_inv, c))
    for nu in frame:
        w = w - nu * J.jeinsum("a,a->", nu, w).expand(-1)
    return w


def _greedy_basis(E_val, g_inv_val, k):
    """Per-point choice of ambient basis vectors with the largest normal parts."""
    N = E_val.shape[-2]
    P = np.eye(N) - np.einsum("...ai,...ij,...bj->...ab", E_val, g_inv_val, E_val)
    chosen = []
    for _ in range(k):
        norms = np.linalg.norm(P, axis=-2)
        for idx in chosen:
            np.put_along_axis(norms, idx[..., None], -1.0, axis=-1)
        best = np.argmax(norms, axis=-1)
        chosen.append(best)
        col = np.take_along_axis(P, best[..., None, None], axis=-1)[..., 0]
        col = col / np.linalg.norm(col, axis=-1, keepdims=True)
        P = P - np.einsum("...a,...b->...ab", col, col)
    return chosen


def normal_frame(y: J.Jet, k: int, hint=None, rotation=None) -> J.Jet:
    """Orthonormal normal frame as a jet with value shape ``(..., N, k)``.

    Codimension one uses the (generalized) cross product in coordinate order.
    Higher codimension orthonormalizes ``hint`` vectors if given (a list of k
    ambient vectors, each a list of component jets), otherwise ambient basis
    vectors picked per point.  ``rotation`` (k x k, constant) is applied last.
    """
    E = tangents(y)
    if k == 1:
        frame = _normalize(_generalized_cross(E)).expand(-1)
    else:
        g_inv = J.inv(J.jeinsum("ai,aj->ij", E, E))
        if hint is not None:
            vecs = [J.stack([c if isinstance(c, J.Jet) else J.const(np.broadcast_to(c, E.shape[:-2]), E.n) for c in v], axis=-1) for v in hint]
        else:
            chosen = _greedy_basis(E.val, g_inv.val, k)
            vecs = []
            for idx in chosen:
                e = np.zeros(E.shape[:-1])
                np.put_along_axis(e, idx[..., None], 1.0, axis=-1)
                vecs.append(J.const(e, E.n))
        built = []
        for v in vecs:
            w = _project_out(v, E, g_inv, built)
            if np.any(J.jeinsum("a,a->", w.truncate(0), w.truncate(0)).val < 1e-20):
                raise RankDeficient("normal_frame: normal hint degenerates")
            built.append(_normalize(w))
        frame = J.stack(built, axis=-1)
    if rotation is not None:
        frame = J.jeinsum("am,mn->an", frame, np.asarray(rotation, dtype=float))
    return frame


def second_form(y: J.Jet, nu: J.Jet) -> J.Jet:
    """``H[m, i, j] = d_i d_j y . nu_m``; jet order is ``min(y.order - 2, nu.order)``."""
    D2 = tangents(y).grad()
    return J.jeinsum("aij,am->mij", D2, nu)


def normal_connection(nu: J.Jet) -> J.Jet:
    """``A[nu, mu, i] = d_i nu_mu . nu_nu``."""
    return J.jeinsum("ami,an->nmi", nu.grad(), nu)


def christoffel(g_inv, dg):
    """Christoffel symbols ``G[i, j, k] = 1/2 g^il (d_j g_kl + d_k g_jl - d_l g_jk)``.

    ``dg[a, b, c] = d_c g_ab``.  Both arguments may be jets or plain arrays.
    """
    S = J.jtrans("klj->ljk", dg) + J.jtrans("jlk->ljk", dg) - J.jtrans("jkl->ljk", dg)
    return 0.5 * J.jeinsum("il,ljk->ijk", g_inv, S)


def riemann(Gamma, dGamma, g):
    """Fully covariant curvature ``R[l, i, j, k]``; ``dGamma[p, i, k, j] = d_j Gamma^p_ik``."""
    T = (
        J.jtrans("pikj->pijk", dGamma)
        - dGamma
        + J.jeinsum("pjq,qik->pijk", Gamma, Gamma)
        - J.jeinsum("pkq,qij->pijk", Gamma, Gamma)
    )
    return J.jeinsum("lp,pijk->lijk", g, T)


def gauss_curvature(R, g):
    R = J.values(R)
    g = J.values(g)
    return R[..., 0, 1, 0, 1] / np.linalg.det(g)


def shape_eigenvalues(g, H):
    """Eigenvalues (descending) of ``g^-1 H`` via Cholesky reduction of ``H w = lambda g w``."""
    g = np.asarray(g, dtype=float)
    H = np.asarray(H, dtype=float)
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("shape_eigenvalues: metric not positive definite") from exc
    Li = np.linalg.inv(L)
    M = Li @ H @ np.swapaxes(Li, -1, -2)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    ev = np.linalg.eigvalsh(M)
    if not np.all(np.isfinite(ev)):
        raise ComplexEigenvalues("shape_eigenvalues: non-finite principal curvatures")
    return ev[..., ::-1]


def mean_and_principal(g, H):
    """Mean curvature per normal and, for a single normal, principal curvatures ``k1 >= k2``.

    ``H`` has shape ``(..., k, n, n)``.
    """
    g = J.values(g)
    H = J.values(H)
    g_inv = np.linalg.inv(g)
    mean = np.einsum("...ij,...mij->...m", g_inv, H)
    principal = shape_eigenvalues(g, H[..., 0, :, :]) if H.shape[-3] == 1 else None
    return mean, principal


@dataclass
class GeometryState:
    """Pointwise geometry of an embedding at a batch of sample points."""

    points: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    dg: np.ndarray
    Gamma: np.ndarray
    dGamma: np.ndarray
    normal_frame: np.ndarray
    H: np.ndarray
    dH: np.ndarray
    A: np.ndarray
    dA: np.ndarray
    Riemann: np.ndarray
    mean: np.ndarray
    kappa: Optional[np.ndarray] = None
    principal: Optional[np.ndarray] = None
    jets: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.g.shape[-1]

    @property
    def k(self):
        return self.H.shape[-3]

    @property
    def shape_operator(self):
        """Mixed second fundamental form ``H'[m, i, j] = g^ik H_m kj``."""
        return np.einsum("...ik,...mkj->...mij", self.g_inv, self.H)


def geometry_from_jet(y: J.Jet, points=None, hint=None, rotation=None) -> GeometryState:
    """All geometric fields from an order-3 jet of the embedding (value shape ``(..., N)``)."""
    n = y.n
    N = y.shape[-1]
    k = N - n
    g = first_form(y)
    g_inv = J.inv(g)
    dg = g.grad()
    Gamma = christoffel(g_inv, dg)
    dGamma = Gamma.grad()
    nu = normal_frame(y, k, hint=hint, rotation=rotation)
    H = second_form(y, nu)
    A = normal_connection(nu)
    R = riemann(Gamma.truncate(0), dGamma.val, g.val)
    mean, principal = mean_and_principal(g.val, H.val)
    kappa = gauss_curvature(R, g) if n == 2 else None
    return GeometryState(
        points=points,
        g=g.val,
        g_inv=g_inv.val,
        dg=dg.val,
        Gamma=Gamma.val,
        dGamma=dGamma.val,
        normal_frame=nu.val,
        H=H.val,
        dH=H.grad().val,
        A=A.val,
        dA=A.grad().val,
        Riemann=J.values(R),
        mean=mean,
        kappa=kappa,
        principal=principal,
        jets={"g": g, "g_inv": g_inv, "Gamma": Gamma, "nu": nu, "H": H, "A": A, "y": y},
    )


def _hint_for(chart, x, order):
    if chart.normal_hint is None:
        return None
    xs = J.variables(x, order)
    return chart.normal_hint(xs, chart.params)


def compute_geometry(chart: Chart, x, jets="analytic", h=None, rotation=None) -> GeometryState:
    """Geometry of ``chart`` at points ``x`` (shape ``(..., n)``).

    ``jets='fd'`` replaces the analytic jets by central differences with step
    ``h`` (default 1e-4 times the smallest axis range).
    """
    x = np.asarray(x, dtype=float)
    if jets == "analytic":
        y = eval_jet(chart, x)
    elif jets == "fd":
        if h is None:
            h = 1e-4 * min(hi - lo for lo, hi in chart.ranges)
        y = finite_difference_jet(chart, x, h)
    else:
        raise ValueError(f"unknown jet mode '{jets}'")
    return geometry_from_jet(y, points=x, hint=_hint_for(chart, x, 2), rotation=rotation)


# ---------------------------------------------------------------------------
# covariant derivatives and identities


def covariant_derivative_mixed(T, dT, Gamma):
    """``nabla_i T^k_j`` for a (1,1)-tensor; returns array ``[..., i, k, j]``.

    ``dT[k, j, i] = d_i T^k_j``.
    """
    return (
        np.einsum("...kji->...ikj", dT)
        + np.einsum("...kil,...lj->...ikj", Gamma, T)
        - np.einsum("...lij,...kl->...ikj", Gamma, T)
    )


def metric_compatibility(state: GeometryState):
    """``d_k g_ij - Gamma^l_ik g_lj - Gamma^l_jk g_il`` (should vanish)."""
    return (
        state.dg
        - np.einsum("...lik,...lj->...ijk", state.Gamma, state.g)
        - np.einsum("...ljk,...il->...ijk", state.Gamma, state.g)
    )


def gauss_residual(state: GeometryState):
    """``R_abcd - sum_m (H_ac H_bd - H_ad H_bc)``."""
    H = state.H
    hh = np.einsum("...mac,...mbd->...abcd", H, H) - np.einsum("...mad,...mbc->...abcd", H, H)
    return state.Riemann - hh


def codazzi_residual(state: GeometryState):
    """``nabla_i H^k_j - nabla_j H^k_i`` per normal (normal-connection terms omitted).

    For codimension one this is the full Codazzi equation; see
    :func:`geofluid.multid.codazzi_nd_residual` for the general case.
    """
    Hp = state.jets["H"]
    Hmixed = J.jeinsum("ik,mkj->mij", state.jets["g_inv"].truncate(1), Hp)
    dHm = Hmixed.grad().val  # [m, k, j, i]
    out = []
    for m in range(state.k):
        nab = covariant_derivative_mixed(Hmixed.val[..., m, :, :], dHm[..., m, :, :, :], state.Gamma)
        out.append(nab - np.einsum("...ikj->...jki", nab))
    return np.stack(out, axis=-4)


def gauss_codazzi_residual(state: GeometryState, tol=None) -> ResidualReport:
    rep = ResidualReport()
    rep.add("gauss", sup(gauss_residual(state)), tol)
    rep.add("codazzi", sup(codazzi_residual(state)), tol)
    return rep


# ---------------------------------------------------------------------------
# grid divergences (second-order finite differences)


def covariant_div_T(T, Gamma, grid: Grid):
    """``nabla_k T^k_j`` for a mixed tensor field ``T[..., k, j]`` sampled on ``grid``."""
    n = grid.ndim
    div = sum(grid.diff(T[..., k, :], k) for k in range(n))
    div = div + np.einsum("...kkl,...lj->...j", Gamma, T)
    div = div - np.einsum("...ljk,...kl->...j", Gamma, T)
    return div


def covariant_div_v(W, Gamma, grid: Grid, sqrt_det_g=None, form="expanded"):
    """``nabla_k W^k`` for a vector field ``W[..., k]`` (e.g. ``rho v^k``).

    ``form='expanded'`` uses ``d_k W^k + Gamma^k_kl W^l``; ``'conservative'``
    differences ``sqrt(det g) W^k`` and needs ``sqrt_det_g``.  The two are
    identical in the continuum.
    """
    n = grid.ndim
    if form == "expanded":
        return sum(grid.diff(W[..., k], k) for k in range(n)) + np.einsum("...kkl,...l->...", Gamma, W)
    if form == "conservative":
        return sum(grid.diff(sqrt_det_g * W[..., k], k) for k in range(n)) / sqrt_det_g
    raise ValueError(f"unknown divergence form '{form}'")


def divergence_mixed_exact(T: J.Jet, Gamma):
    """``nabla_k T^k_j`` from an order >= 1 jet of a mixed tensor (exact derivatives)."""
    dT = T.grad().val  # [k, j, i]
    Tv = T.val
    return (
        np.einsum("...kjk->...j", dT)
        + np.einsum("...kkl,...lj->...j", Gamma, Tv)
        - np.einsum("...ljk,...kl->...j", Gamma, Tv)
    )


def grid_geometry(chart: Chart, grid: Grid, jets="analytic", h=None) -> GeometryState:
    """Geometry on all grid nodes; arrays keep the grid shape as leading axes."""
    return compute_geometry(chart, grid.points(), jets=jets, h=h)


# ---------------------------------------------------------------------------
# nested finite differences


def _central(fn, x, h):
    """Stack of central differences of ``fn`` along each coordinate (last axis)."""
    n = x.shape[-1]
    out = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        out.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(out, axis=-1)


def nested_fd_fields(values, x, h):
    """Metric, Christoffel symbols, curvature and second fundamental form of a hypersurface by nested differences.

    Every derivative of a derived field is a central difference of that field
    (not of the embedding), so the Gauss and Codazzi identities hold only up
    to O(h^2).  ``values`` maps ``(..., n)`` points to ``(..., n + 1)``.
    """
    x = np.asarray(x, dtype=float)

    def E(z):
        return _central(values, z, h)  # [a, i]

    def metric(z):
        e = E(z)
        return np.einsum("...ai,...aj->...ij", e, e)

    def normal(z):
        e = E(z)
        u, _, _ = np.linalg.svd(e)
        nu = u[..., :, -1]
        sign = np.sign(np.linalg.det(np.concatenate([e, nu[..., None]], axis=-1)))
        return nu * sign[..., None]

    def second(z):
        D2 = _central(E, z, h)  # [a, i, j]
        return np.einsum("...aij,...a->...ij", 0.5 * (D2 + np.swapaxes(D2, -1, -2)), normal(z))

    def gamma(z):
        return christoffel(np.linalg.inv(metric(z)), _central(metric, z, h))

    g = metric(x)
    Gam = gamma(x)
    dGam = _central(gamma, x, h)
    H = second(x)
    dH = _central(second, x, h)  # [j, k, i] = d_i H_jk
    return g, Gam, riemann(Gam, dGam, g), H, dH


def nested_fd_residual(chart: Chart, x, h, tol=None) -> ResidualReport:
    """Gauss and Codazzi residuals of a hypersurface chart through :func:`nested_fd_fields`."""
    if chart.codim != 1:
        raise ValueError("nested finite differences are implemented for hypersurfaces")
    g, Gam, R, H, dH = nested_fd_fields(chart.values, x, h)
    gauss = R - (np.einsum("...ac,...bd->...abcd", H, H) - np.einsum("...ad,...bc->...abcd", H, H))
    curl = np.einsum("...jki->...ijk", dH) - np.einsum("...ikj->...ijk", dH)
    cod = curl - np.einsum("...lik,...jl->...ijk", Gam, H) + np.einsum("...ljk,...il->...ijk", Gam, H)
    rep = ResidualReport()
    rep.add("gauss", sup(gauss), tol)
    rep.add("codazzi", sup(cod), tol)
    return rep
