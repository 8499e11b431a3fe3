"""Steady compressible Euler flows built from a surface's second fundamental form.

Pipeline: shape operator ``H' = g^-1 H`` -> stress ``P' = adj(H')`` ->
pressure ``p = k2`` -> ``f = P - p g`` (rank one) -> velocity ``v_i = sqrt(f_ii / rho)``
-> density along characteristics of the continuity equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import jets as J
from .chart import Chart, Grid, eval_jet
from .errors import CaseExcluded, MixedSigns, NegativeF, NonPositiveSeed, PathExitsPositivityRegion
from .geometry import (
    GeometryState,
    compute_geometry,
    covariant_div_T,
    covariant_div_v,
    divergence_mixed_exact,
    geometry_from_jet,
    _hint_for,
)
from .report import ResidualReport, sup

F_TOL = 1e-10


def adjugate2(X):
    """Adjugate of 2x2 matrices (plain arrays or jets)."""
    if isinstance(X, J.Jet):
        a, b, c, d = X.sel(0, 0), X.sel(0, 1), X.sel(1, 0), X.sel(1, 1)
        return J.stack([J.stack([d, -b]), J.stack([-c, a])], axis=-2)
    X = np.asarray(X)
    out = np.empty_like(X)
    out[..., 0, 0] = X[..., 1, 1]
    out[..., 0, 1] = -X[..., 0, 1]
    out[..., 1, 0] = -X[..., 1, 0]
    out[..., 1, 1] = X[..., 0, 0]
    return out


@dataclass
class StressState:
    P_mixed: np.ndarray  # P^i_j
    P_lower: np.ndarray
    P_upper: np.ndarray
    f: Optional[np.ndarray] = None  # f_ij = P_ij - p g_ij
    flipped: bool = False


def stress_from_shape(g, H) -> StressState:
    """``P' = adj(g^-1 H)``: equals ``(H')^-1 det H'`` where invertible, continuous across ``det H' = 0``."""
    g = np.asarray(g, dtype=float)
    g_inv = np.linalg.inv(g)
    Hp = g_inv @ np.asarray(H, dtype=float)
    Pm = adjugate2(Hp)
    return StressState(P_mixed=Pm, P_lower=g @ Pm, P_upper=Pm @ g_inv)


def verify_gauss_via_stress(P: StressState, g, kappa):
    """Pointwise ``|det P^ij - kappa det g^-1|``."""
    return np.abs(np.linalg.det(P.P_upper) - np.asarray(kappa) / np.linalg.det(g))


CASE_UMBILIC = "umbilic"
CASE_K1_ZERO = "k1_zero_gt_k2"
CASE_K1_NONZERO = "k1_nonzero_gt_k2"
CASE_OTHER = "k2_nonneg"


def pressure_select(k1, k2, orientation=1, root="k2", tol=1e-10):
    """Pressure root of ``p^2 - m p + kappa = 0`` and the case label per point.

    ``orientation=-1`` works with ``-H``: ``(k1, k2) -> (-k2, -k1)``.
    ``root='k1'`` is admissible only where it does not force ``rho |v|^2 < 0``.
    Returns ``(p, labels)``; labels is an array of strings.
    """
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    if orientation < 0:
        k1, k2 = -k2, -k1
    scale = 1.0 + np.maximum(np.abs(k1), np.abs(k2))
    umb = np.abs(k1 - k2) <= tol * scale
    labels = np.full(k1.shape, CASE_OTHER, dtype=object)
    neg = k2 < -tol * scale
    labels[neg & (np.abs(k1) <= tol * scale)] = CASE_K1_ZERO
    labels[neg & (np.abs(k1) > tol * scale)] = CASE_K1_NONZERO
    labels[umb] = CASE_UMBILIC
    if root == "k2":
        return k2.copy(), labels
    if root == "k1":
        bad = (~umb) & (np.abs(k1) > tol * scale)
        if np.any(bad):
            raise CaseExcluded("pressure_select: p = k1 forces rho |v|^2 = k2 - k1 < 0")
        return k1.copy(), labels
    raise ValueError(f"unknown root '{root}'")


def residual_tensor(g, P: StressState, p):
    """``f_ij = P_ij - p g_ij``."""
    return P.P_lower - np.asarray(p)[..., None, None] * np.asarray(g)


def sign_normalize(H, f, g=None, orientation=1, tol=F_TOL):
    """Make the diagonal of ``f`` nonnegative, switching to ``-H`` when needed.

    Returns ``(H, f, flipped)``.  With ``g`` given, ``f`` is rebuilt from the
    flipped form through the same construction; otherwise it is negated.
    """
    H = np.asarray(H, dtype=float)
    f = np.asarray(f, dtype=float)
    scale = 1.0 + np.max(np.abs(f))
    if np.any(f[..., 0, 0] * f[..., 1, 1] < -tol * scale**2):
        raise MixedSigns("sign_normalize: f11 and f22 have opposite signs (rank-one structure violated)")
    neg = (f[..., 0, 0] + f[..., 1, 1]) < -tol * scale
    if not np.any(neg):
        return H, f, False
    if g is None:
        return -H, -f, True
    Hn = -H
    P = stress_from_shape(g, Hn)
    from .geometry import shape_eigenvalues

    ev = shape_eigenvalues(g, Hn)
    fn = residual_tensor(g, P, ev[..., 1])
    return Hn, fn, True


def velocity_signs(f, tol=F_TOL):
    """Signs ``s`` with ``s_i s_j sqrt(f_ii f_jj) = f_ij`` (first nonzero component positive)."""
    f = np.asarray(f, dtype=float)
    s = np.ones(f.shape[:-1])
    s[..., 1] = np.where(f[..., 0, 1] < -tol * (1.0 + np.abs(f).max(axis=(-1, -2))), -1.0, 1.0)
    return s


def velocity_from_f(f, rho, tol=F_TOL):
    """Lower velocity components with ``rho v_i v_j = f_ij``.

    ``v_1 >= 0`` and ``sign(v_2) = sign(f_12)``.
    """
    f = np.asarray(f, dtype=float)
    rho = np.asarray(rho, dtype=float)
    diag = np.stack([f[..., 0, 0], f[..., 1, 1]], axis=-1)
    if np.any(diag < -tol * (1.0 + np.abs(f).max())):
        raise NegativeF("velocity_from_f: negative diagonal entry of f")
    diag = np.where(diag <= tol * (1.0 + np.abs(f).max()), 0.0, diag)
    return velocity_signs(f, tol) * np.sqrt(diag / rho[..., None])


@dataclass
class FluidState:
    rho: np.ndarray
    v_lower: np.ndarray
    v_upper: np.ndarray
    p: np.ndarray
    speed_sq: np.ndarray
    f: np.ndarray
    case_label: Optional[np.ndarray] = None

    @property
    def stress_mixed(self):
        """``P^k_j = rho v^k v_j + p delta^k_j``."""
        n = self.v_lower.shape[-1]
        return self.rho[..., None, None] * np.einsum("...k,...j->...kj", self.v_upper, self.v_lower) + self.p[..., None, None] * np.eye(n)


def assemble_fluid(g, f, p, rho, labels=None) -> FluidState:
    g = np.asarray(g)
    v = velocity_from_f(f, rho)
    vu = np.einsum("...ij,...j->...i", np.linalg.inv(g), v)
    return FluidState(
        rho=np.asarray(rho, dtype=float),
        v_lower=v,
        v_upper=vu,
        p=np.asarray(p, dtype=float),
        speed_sq=np.einsum("...i,...i->...", v, vu),
        f=np.asarray(f),
        case_label=labels,
    )


# ---------------------------------------------------------------------------
# jets of the construction (exact derivatives)


def construction_jets(state: GeometryState, orientation=1):
    """Jets (order 1) of ``P'``, ``p`` and ``f`` built from the state's jets."""
    g = state.jets["g"].truncate(1)
    g_inv = state.jets["g_inv"].truncate(1)
    H = state.jets["H"].take(0, -3)
    if orientation < 0:
        H = -H
    Hp = J.jeinsum("ik,kj->ij", g_inv, H)
    Pm = adjugate2(Hp)
    m = Hp.sel(0, 0) + Hp.sel(1, 1)
    kap = J.det(Hp)
    disc = m * m - 4.0 * kap
    root = _masked_sqrt(disc, 1e-14 * (1.0 + float(np.max(m.val**2))))
    p = 0.5 * (m - root)
    f = J.jeinsum("ik,kj->ij", g, Pm - J.jeinsum(",ij->ij", p, np.eye(2)))
    return {"P_mixed": Pm, "p": p, "f": f, "g": g}


def _masked_sqrt(x: J.Jet, tol):
    """sqrt with value and derivatives forced to zero where ``x <= tol``."""
    ok = x.val > tol
    safe = J.Jet([np.where(ok, x.val, 1.0)] + [np.where(ok[(...,) + (None,) * i], c, 0.0) for i, c in enumerate(x.c[1:], start=1)], x.n)
    r = J.sqrt(safe)
    return J.Jet([np.where(ok[(...,) + (None,) * i], c, 0.0) for i, c in enumerate(r.c)], r.n)


def characteristic_field(chart: Chart, orientation=1, system="literal", tol=F_TOL) -> Callable:
    """Speed field ``a`` and ``sum_i d_i a_i`` at arbitrary points.

    ``system='literal'`` uses ``a_i = s_i sqrt(det g f_ii)`` with the lower
    components of ``f``.  ``'covariant'`` transports along ``rho v^k`` with
    ``a^k = s_k sqrt(det g) sqrt(f^kk)``; the two agree when ``g`` is diagonal
    with constant ``g_22`` (or ``g_11`` on flows along ``x_1``).
    Density follows ``d log(rho)/dt = -2 div a``.
    """
    if system not in ("literal", "covariant"):
        raise ValueError(f"unknown characteristic system '{system}'")

    def field_fn(x):
        x = np.asarray(x, dtype=float)
        y = eval_jet(chart, x, check=False, strict_domain=False)
        st = geometry_from_jet(y, points=x, hint=_hint_for(chart, x, 2))
        cj = construction_jets(st, orientation)
        f, g = cj["f"], cj["g"]
        detg = J.det(g)
        comps = []
        if system == "literal":
            s = velocity_signs(f.val, tol)
            for i in range(2):
                comps.append(s[..., i] * _masked_sqrt(detg * f.sel(i, i), tol))
        else:
            gi = st.jets["g_inv"].truncate(1)
            fu = J.jeinsum("ik,kj->ij", J.jeinsum("ik,kl->il", gi, f), gi)
            s = velocity_signs(fu.val, tol)
            root = J.sqrt(detg)
            for i in range(2):
                comps.append(s[..., i] * root * _masked_sqrt(fu.sel(i, i), tol))
        a = J.stack(comps, axis=-1)
        da = a.grad().val
        return a.val, da[..., 0, 0] + da[..., 1, 1]

    return field_fn


# ---------------------------------------------------------------------------
# characteristics


@dataclass
class CharacteristicPath:
    seed: np.ndarray
    rho0: float
    times: np.ndarray
    nodes: np.ndarray
    rho_along: np.ndarray
    speed: np.ndarray
    div: np.ndarray
    status: str = "completed"

    @property
    def log_rho(self):
        return np.log(self.rho_along)


def _wrap(z, ranges, periods):
    z = z.copy()
    for i, (per, (lo, _)) in enumerate(zip(periods, ranges)):
        if per is not None:
            z[..., i] = lo + np.mod(z[..., i] - lo, per)
    return z


def _inside(z, ranges, periods, tol=1e-12):
    ok = np.ones(z.shape[:-1], dtype=bool)
    for i, (per, (lo, hi)) in enumerate(zip(periods, ranges)):
        if per is None:
            ok &= (z[..., i] >= lo - tol) & (z[..., i] <= hi + tol)
    return ok


def integrate_characteristics(field_fn, seeds, rho0, t_max, dt, ranges, periods, both_directions=True, speed_tol=1e-9):
    """RK4 integration of ``dz/dt = a(z)``, ``d log rho/dt = -2 div a(z)`` for all seeds at once.

    Paths stop when they leave a non-periodic range ('left_domain') or stall
    ('exits_positivity').  Returns a list of :class:`CharacteristicPath`.
    """
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    rho0 = np.broadcast_to(np.asarray(rho0, dtype=float), seeds.shape[:1]).copy()
    if np.any(rho0 <= 0):
        raise NonPositiveSeed("solve_density: seed density must be positive")
    n = seeds.shape[1]
    per_arr = np.array([np.inf if per is None else (0.52 if both_directions else 1.02) * per for per in periods])

    def rhs(state):
        a, div = field_fn(state[:, :n])
        return np.concatenate([a, -2.0 * div[:, None]], axis=1), a, div

    runs = []
    for direction in ((1.0, -1.0) if both_directions else (1.0,)):
        h = direction * dt
        state = np.concatenate([seeds, np.log(rho0)[:, None]], axis=1)
        active = np.ones(len(seeds), dtype=bool)
        travel = np.zeros((len(seeds), n))
        status = np.array(["completed"] * len(seeds), dtype=object)
        k0, a0, d0 = rhs(state)
        hist = [(0.0, state.copy(), a0, d0, active.copy())]
        stalled = np.linalg.norm(a0, axis=1) <= speed_tol
        status[stalled] = "exits_positivity"
        active &= ~stalled
        t = 0.0
        steps = int(np.ceil(t_max / dt))
        for _ in range(steps):
            if not active.any():
                break
            idx = np.flatnonzero(active)
            s = state[idx]
            f1 = rhs(s)[0]
            f2 = rhs(_wrap_state(s + 0.5 * h * f1, n, ranges, periods))[0]
            f3 = rhs(_wrap_state(s + 0.5 * h * f2, n, ranges, periods))[0]
            f4 = rhs(_wrap_state(s + h * f3, n, ranges, periods))[0]
            new = s + h / 6.0 * (f1 + 2 * f2 + 2 * f3 + f4)
            travel[idx] += new[:, :n] - s[:, :n]
            new[:, :n] = _wrap(new[:, :n], ranges, periods)
            inside = _inside(new[:, :n], ranges, periods)
            t += h
            state[idx] = new
            left = idx[~inside]
            status[left] = "left_domain"
            active[left] = False
            # a full turn (split over both directions) revisits every node of the orbit
            wound = idx[inside & np.any(np.abs(travel[idx]) >= per_arr, axis=1)]
            active[wound] = False
            a_new = np.zeros((len(seeds), n))
            d_new = np.zeros(len(seeds))
            # the first node past the boundary is kept so interpolation covers the edge
            _, a_k, d_k = rhs(state[idx])
            a_new[idx] = a_k
            d_new[idx] = d_k
            keep = idx[inside]
            stall = keep[np.linalg.norm(a_k[inside], axis=1) <= speed_tol]
            status[stall] = "exits_positivity"
            rec = np.zeros(len(seeds), dtype=bool)
            rec[idx] = np.isfinite(a_k).all(axis=1) & np.isfinite(d_k)
            hist.append((t, state.copy(), a_new, d_new, rec))
            active[stall] = False
        runs.append((direction, hist, status))
    paths = []
    for p in range(len(seeds)):
        times, nodes, lr, sp, dv = [], [], [], [], []
        statuses = []
        for direction, hist, status in runs:
            seq = [(t, st[p], a[p], d[p]) for (t, st, a, d, rec) in hist if rec[p]]
            if direction < 0:
                seq = seq[::-1][:-1]  # drop the duplicated seed node
            for t, st, a, d in seq:
                times.append(t)
                nodes.append(st[:n])
                lr.append(st[n])
                sp.append(a)
                dv.append(d)
            statuses.append(status[p])
        order = np.argsort(times, kind="stable")
        st_final = "exits_positivity" if "exits_positivity" in statuses else ("left_domain" if "left_domain" in statuses else "completed")
        paths.append(
            CharacteristicPath(
                seed=seeds[p],
                rho0=float(rho0[p]),
                times=np.asarray(times)[order],
                nodes=np.asarray(nodes)[order],
                rho_along=np.exp(np.asarray(lr)[order]),
                speed=np.asarray(sp)[order],
                div=np.asarray(dv)[order],
                status=st_final,
            )
        )
    return paths


def _wrap_state(s, n, ranges, periods):
    s = s.copy()
    s[:, :n] = _wrap(s[:, :n], ranges, periods)
    return s


def solve_density(field_fn, seeds, ranges, periods, t_max=5.0, dt=0.01, rho0=1.0, both_directions=True, strict=False):
    """Density along characteristics from positive seed values.

    With ``strict=True`` a stalled path raises :class:`PathExitsPositivityRegion`;
    otherwise it is truncated and reported through its ``status``.
    """
    paths = integrate_characteristics(field_fn, seeds, rho0, t_max, dt, ranges, periods, both_directions)
    if strict:
        bad = [i for i, p in enumerate(paths) if p.status == "exits_positivity"]
        if bad:
            raise PathExitsPositivityRegion(f"solve_density: {len(bad)} path(s) reach f_ii <= tol (first: seed {paths[bad[0]].seed.tolist()})")
    return paths


def default_seeds(field_fn, grid: Grid, tol=1e-9):
    """One seed per grid line on the boundary where the flow enters the domain."""
    pts = grid.points()
    a, _ = field_fn(pts.reshape(-1, grid.ndim))
    a = a.reshape(pts.shape)
    seeds = []
    for ax in range(grid.ndim):
        if grid.periodic[ax]:
            continue
        lo = np.take(pts, 0, axis=ax).reshape(-1, grid.ndim)
        hi = np.take(pts, -1, axis=ax).reshape(-1, grid.ndim)
        alo = np.take(a, 0, axis=ax).reshape(-1, grid.ndim)[:, ax]
        ahi = np.take(a, -1, axis=ax).reshape(-1, grid.ndim)[:, ax]
        seeds.extend(lo[alo > tol])
        seeds.extend(hi[ahi < -tol])
    if not seeds:
        mean_speed = np.abs(a).reshape(-1, grid.ndim).mean(axis=0)
        ax = int(np.argmax(mean_speed))
        seeds.extend(np.take(pts, 0, axis=ax).reshape(-1, grid.ndim))
    seeds = np.unique(np.round(np.asarray(seeds), 14), axis=0)
    return seeds


def resample_to_grid(paths: Sequence[CharacteristicPath], points, ranges, periods, method="quadratic", n_paths=None, max_dist=None):
    """Resample path densities onto scattered points.

    Each of the nearest paths contributes its log-density at the point of
    the path closest to the query (paths are cubic Hermite curves in time
    between nodes).  ``method='quadratic'`` fits a local quadratic in the
    displacement to those points by least squares; ``'idw'`` averages with
    inverse-distance weights over ``n_paths`` (default 4) paths.  A query that
    lies on a path takes that path's value.  Points farther than
    ``max_dist`` from every path get NaN.
    """
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, pts.shape[-1])
    nd = flat.shape[1]
    n_terms = 1 + nd + nd * (nd + 1) // 2
    if n_paths is None:
        n_paths = 2 * n_terms if method == "quadratic" else 4
    nodes = np.concatenate([p.nodes for p in paths])
    times = np.concatenate([p.times for p in paths])
    logr = np.concatenate([np.log(p.rho_along) for p in paths])
    speed = np.concatenate([p.speed for p in paths])
    div = np.concatenate([p.div for p in paths])
    owner = np.concatenate([np.full(len(p.nodes), k) for k, p in enumerate(paths)])
    local = np.concatenate([np.arange(len(p.nodes)) for p in paths])
    length = np.concatenate([np.full(len(p.nodes), len(p.nodes)) for p in paths])

    box, shift = _box(ranges, periods)
    tree = cKDTree(_to_box(nodes, shift, box), boxsize=box)
    kq = min(len(nodes), 8 * n_paths)
    _, idx = tree.query(_to_box(flat, shift, box), k=kq)
    idx = idx.reshape(len(flat), kq)
    own = owner[idx]
    dup = np.tril(own[:, :, None] == own[:, None, :], -1).any(axis=2)
    first = ~dup
    rank = np.cumsum(first, axis=1)
    take = first & (rank <= n_paths)
    qi, col = np.nonzero(take)
    slot = rank[qi, col] - 1
    g = idx[qi, col]
    x = flat[qi]

    best_d = np.full(len(g), np.inf)
    best_v = np.full(len(g), np.nan)
    best_u = np.zeros((len(g), nd))
    for off in (-1, 0):
        a = g + off
        ok = (local[g] + off >= 0) & (local[g] + off + 1 < length[g])
        a = np.where(ok, a, g)
        b = np.where(ok, a + 1, g)
        v, d, u = _segment_closest(x, a, b, nodes, times, speed, logr, div, periods)
        d = np.where(ok, d, np.inf)
        better = d < best_d
        best_d = np.where(better, d, best_d)
        best_v = np.where(better, v, best_v)
        best_u = np.where(better[:, None], u, best_u)
    single = ~np.isfinite(best_d)
    if single.any():
        best_u[single] = _min_image(nodes[g[single]] - x[single], periods)
        best_d[single] = np.linalg.norm(best_u[single], axis=-1)
        best_v[single] = logr[g[single]]

    Q = len(flat)
    dmin = np.full(Q, np.inf)
    np.minimum.at(dmin, qi, best_d)
    hit = best_d <= 1e-12
    nhit = np.zeros(Q)
    np.add.at(nhit, qi, hit.astype(float))
    hitsum = np.zeros(Q)
    np.add.at(hitsum, qi, np.where(hit, best_v, 0.0))
    if method == "quadratic":
        out = _local_quadratic(qi, slot, best_u, best_v, Q, n_paths, n_terms)
    elif method == "idw":
        w = 1.0 / np.maximum(best_d, 1e-150) ** 2
        num = np.zeros(Q)
        den = np.zeros(Q)
        np.add.at(num, qi, w * best_v)
        np.add.at(den, qi, w)
        out = num / den
    else:
        raise ValueError(f"unknown resampling method '{method}'")
    out = np.where(nhit > 0, hitsum / np.maximum(nhit, 1), out)
    out = np.exp(out)
    if max_dist is not None:
        out[dmin > max_dist] = np.nan
    return out.reshape(pts.shape[:-1])


def _local_quadratic(qi, slot, u, v, Q, K, n_terms):
    """Value at the origin of a least-squares quadratic through samples ``(u, v)`` per query."""
    nd = u.shape[1]
    U = np.zeros((Q, K, nd))
    V = np.zeros((Q, K))
    W = np.zeros((Q, K))
    U[qi, slot] = u
    V[qi, slot] = v
    W[qi, slot] = 1.0
    scale = np.max(np.linalg.norm(U, axis=-1), axis=1)
    U = U / np.where(scale > 0, scale, 1.0)[:, None, None]
    cols = [np.ones((Q, K))] + [U[..., i] for i in range(nd)]
    cols += [U[..., i] * U[..., j] for i in range(nd) for j in range(i, nd)]
    M = np.stack(cols, axis=-1) * W[..., None]
    coef = np.einsum("qtk,qk->qt", np.linalg.pinv(M, rcond=1e-8), V * W)
    vmax = np.where(W > 0, V, -np.inf).max(axis=1)
    vmin = np.where(W > 0, V, np.inf).min(axis=1)
    margin = 0.25 * (vmax - vmin)
    out = np.clip(coef[:, 0], vmin - margin, vmax + margin)
    few = W.sum(axis=1) < n_terms
    if few.any():  # plain average where too few paths are nearby
        out[few] = (V[few] * W[few]).sum(axis=1) / np.maximum(W[few].sum(axis=1), 1)
    return out


def _box(ranges, periods):
    box, shift = [], []
    for per, (lo, hi) in zip(periods, ranges):
        if per is not None:
            shift.append(lo)
            box.append(per)
        else:
            # non-periodic axes sit in the middle of a box far larger than any distance
            width = 1e6 * (hi - lo + 1.0)
            shift.append(lo - 0.5 * width)
            box.append(width)
    return np.asarray(box), np.asarray(shift)


def _to_box(x, shift, box):
    return np.mod(x - shift, box) % box


def _min_image(d, periods):
    d = d.copy()
    for i, per in enumerate(periods):
        if per is not None:
            d[..., i] = d[..., i] - per * np.round(d[..., i] / per)
    return d


def _hermite(s):
    return (2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s, -2 * s**3 + 3 * s**2, s**3 - s**2)


def _dhermite(s):
    return (6 * s**2 - 6 * s, 3 * s**2 - 4 * s + 1, -6 * s**2 + 6 * s, 3 * s**2 - 2 * s)


def _segment_closest(x, a, b, nodes, times, speed, logr, div, periods, newton=4):
    """Closest point to ``x`` on the Hermite segments ``a -> b``: (log rho there, distance, displacement)."""
    z0 = nodes[a]
    dt = (times[b] - times[a])[:, None]
    z1 = z0 + _min_image(nodes[b] - z0, periods)
    m0, m1 = speed[a] * dt, speed[b] * dt
    rel = z0 + _min_image(x - z0, periods)
    seg = z1 - z0
    L2 = np.einsum("qi,qi->q", seg, seg)
    s = np.clip(np.einsum("qi,qi->q", rel - z0, seg) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)

    def curve(s, basis):
        h = basis(s[:, None])
        return h[0] * z0 + h[1] * m0 + h[2] * z1 + h[3] * m1

    for _ in range(newton):
        z = curve(s, _hermite)
        dz = curve(s, _dhermite)
        den = np.einsum("qi,qi->q", dz, dz)
        step = np.einsum("qi,qi->q", rel - z, dz) / np.where(den > 0, den, 1.0)
        s = np.clip(s + np.where(den > 0, step, 0.0), 0.0, 1.0)
    u = curve(s, _hermite) - rel
    d = np.linalg.norm(u, axis=-1)
    dtf = dt[:, 0]
    h = _hermite(s)
    v = h[0] * logr[a] + h[1] * (-2.0 * div[a] * dtf) + h[2] * logr[b] + h[3] * (-2.0 * div[b] * dtf)
    return v, d, u


# ---------------------------------------------------------------------------
# end-to-end construction


@dataclass
class FluidSolution:
    grid: Grid
    geometry: GeometryState
    stress: StressState
    fluid: FluidState
    case_label: np.ndarray
    paths: list
    rho_grid: np.ndarray
    defined: np.ndarray
    orientation: int = 1
    jets: dict = field(default_factory=dict, repr=False)


def construct_fluid(chart: Chart, grid: Grid, seeds=None, rho0=1.0, t_max=5.0, dt=0.01, orientation=1, system="literal", resample="quadratic", strict=False) -> FluidSolution:
    """Fluid variables on ``grid`` for an embedded surface.

    Density is integrated along characteristics from ``seeds`` (default: flow
    entry boundary) and resampled onto the grid for residual checks.  Static
    regions (``f = 0``) take the constant density ``rho0``.
    """
    st = compute_geometry(chart, grid.points())
    H = st.H[..., 0, :, :]
    if orientation < 0:
        H = -H
    P = stress_from_shape(st.g, H)
    k1k2 = st.principal if orientation > 0 else -st.principal[..., ::-1]
    p, labels = pressure_select(k1k2[..., 0], k1k2[..., 1])
    f = residual_tensor(st.g, P, p)
    H, f, flipped = sign_normalize(H, f, st.g)
    P.f = f
    P.flipped = flipped
    scale = 1.0 + np.abs(f).max()
    moving = (f[..., 0, 0] + f[..., 1, 1]) > F_TOL * scale
    field_fn = characteristic_field(chart, orientation, system)
    periods = tuple(per if grid.periodic[i] else None for i, per in enumerate(chart.periods))
    paths = []
    rho_grid = np.broadcast_to(rho0(grid.points()) if callable(rho0) else float(rho0), grid.shape).astype(float)
    if np.any(~(rho_grid > 0)):
        raise NonPositiveSeed("construct_fluid: density must be positive")
    defined = np.ones(grid.shape, dtype=bool)
    if moving.any():
        if seeds is None:
            seeds = default_seeds(field_fn, grid)
        r0 = rho0(np.asarray(seeds)) if callable(rho0) else rho0
        paths = solve_density(field_fn, seeds, grid.ranges, periods, t_max=t_max, dt=dt, rho0=r0, strict=strict)
        hmax = max(grid.spacing())
        rho_m = resample_to_grid(paths, grid.points(), grid.ranges, periods, method=resample, max_dist=2 * hmax)
        rho_grid = np.where(moving, rho_m, rho_grid)
        defined = np.isfinite(rho_grid)
    rho_safe = np.where(defined, rho_grid, 1.0)
    fl = assemble_fluid(st.g, f, p, rho_safe, labels)
    fl.rho = np.where(defined, rho_grid, np.nan)
    return FluidSolution(grid, st, P, fl, labels, paths, rho_grid, defined, orientation, jets=construction_jets(st, orientation))


def euler_residual(sol: FluidSolution, form="expanded") -> ResidualReport:
    """Sup-norms of the continuity and momentum residuals over defined nodes.

    ``momentum_exact`` uses jets of the assembled stress (exact derivatives);
    ``momentum_fd`` and ``continuity`` use second-order differences on the grid.
    """
    st, fl, grid = sol.geometry, sol.fluid, sol.grid
    mask = sol.defined
    interior = _interior_mask(grid, mask)
    rep = ResidualReport(grid={"counts": list(grid.counts), "ranges": [list(r) for r in grid.ranges], "periodic": list(grid.periodic)})
    rho = np.where(mask, fl.rho, 1.0)
    W = rho[..., None] * fl.v_upper
    cont = covariant_div_v(W, st.Gamma, grid, sqrt_det_g=np.sqrt(np.linalg.det(st.g)), form=form)
    rep.add("continuity", sup(cont[interior]))
    T = rho[..., None, None] * np.einsum("...k,...j->...kj", fl.v_upper, fl.v_lower) + fl.p[..., None, None] * np.eye(2)
    rep.add("momentum_fd", sup(covariant_div_T(T, st.Gamma, grid)[interior]))
    cj = sol.jets
    rep.add("assembly", sup((T - cj["P_mixed"].val)[mask]))
    rep.add("momentum_exact", sup(divergence_mixed_exact(cj["P_mixed"], st.Gamma)[mask]))
    return rep


def _interior_mask(grid, mask):
    """Nodes whose finite-difference stencil only touches defined nodes."""
    ok = mask.copy()
    for ax in range(grid.ndim):
        if grid.periodic[ax]:
            ok &= np.roll(mask, 1, axis=ax) & np.roll(mask, -1, axis=ax)
        else:
            sh = np.zeros_like(mask)
            fwd = np.roll(mask, -1, axis=ax)
            bwd = np.roll(mask, 1, axis=ax)
            ok &= fwd | _edge(mask, ax, -1)
            ok &= bwd | _edge(mask, ax, 0)
    return ok


def _edge(mask, ax, which):
    e = np.zeros_like(mask)
    idx = [slice(None)] * mask.ndim
    idx[ax] = which
    e[tuple(idx)] = True
    return e
