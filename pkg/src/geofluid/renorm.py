"""Renormalized Gauss-Codazzi fields along a sequence of short embeddings of the flat torus.

For each embedding ``u_q`` with C^2 size ``eta_q`` the rescaled fields
``h = H / eta``, ``gamma = kappa / eta^2``, ``Gamma / eta`` and ``Q / eta`` are
paired with a fixed dictionary of bump functions in the stretched variable
``z = eta_q x``.  Decay of the ``Gamma``, ``Q`` and ``gamma`` pairings is the
numerical signature of a pressureless limit fluid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import jets as J
from .chart import Chart, Grid
from .errors import MixedDiagonalSigns, QuadratureUnderResolved, RankNotOne, ScheduleViolation, BadParams
from .fluid2d import FluidState
from .geometry import christoffel, first_form, geometry_from_jet, normal_frame
from .report import ResidualReport, sup

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# surfaces


@dataclass(frozen=True)
class CorrugatedTorus:
    """``u(x) = y_torus(2 pi x) / (2 pi) + sum_q b_q nu_0(x) sin(2 pi lam_q <x, xi_q>)``.

    ``terms`` holds ``(slope_amplitude, frequency, direction)``; the
    displacement amplitude is ``b_q = a_q / (2 pi lam_q)`` so that ``a_q``
    bounds the added slope.  ``nu_0`` is the unit normal of the base torus.
    """

    a: float = 0.2
    c: float = 0.4
    terms: tuple = ()

    def jet(self, x, order=3):
        x = np.asarray(x, dtype=float)
        t1, t2 = J.variables(x, order)
        th1, th2 = TWO_PI * t1, TWO_PI * t2
        c1, s1, c2, s2 = J.cos(th1), J.sin(th1), J.cos(th2), J.sin(th2)
        r = self.c + self.a * c2
        comps = [r * c1 / TWO_PI, r * s1 / TWO_PI, self.a * s2 / TWO_PI]
        if self.terms:
            nu = [c2 * c1, c2 * s1, s2]
            for amp, lam, xi in self.terms:
                phase = TWO_PI * lam * (xi[0] * t1 + xi[1] * t2)
                w = J.sin(phase) * (amp / (TWO_PI * lam))
                comps = [comps[m] + w * nu[m] for m in range(3)]
        return J.stack(comps, axis=-1)

    @property
    def max_frequency(self):
        return max((lam for amp, lam, _ in self.terms if amp != 0), default=1.0)

    def chart(self) -> Chart:
        surf = self

        def func(xs, params):
            if isinstance(xs[0], J.Jet):
                y = surf.jet(np.stack([v.val for v in xs], axis=-1), xs[0].order)
                return [y.sel(m) for m in range(3)]
            y = surf.jet(np.stack(np.broadcast_arrays(*xs), axis=-1), 0).val
            return [y[..., m] for m in range(3)]

        return Chart(
            "corrugated_torus", 2, 3, func, ((0.0, 1.0), (0.0, 1.0)), (1.0, 1.0),
            {"a": self.a, "c": self.c, "terms": list(self.terms)},
        )


@dataclass
class SampledSurface:
    """A 1-periodic surface known on a uniform grid, interpolated by its Fourier series."""

    coeffs: np.ndarray  # (3, N1, N2) complex FFT coefficients / (N1 N2)
    freqs: tuple

    @classmethod
    def from_grid(cls, Y):
        """``Y`` has shape ``(N1, N2, 3)`` sampled at ``x = (i / N1, j / N2)``; the torus map may include a linear part."""
        Y = np.asarray(Y, dtype=float)
        n1, n2, _ = Y.shape
        C = np.fft.fft2(np.moveaxis(Y, -1, 0), axes=(1, 2)) / (n1 * n2)
        f1 = np.fft.fftfreq(n1, 1.0 / n1)
        f2 = np.fft.fftfreq(n2, 1.0 / n2)
        # the Nyquist mode of an even grid is split symmetrically
        return cls(C, (f1, f2))

    @property
    def max_frequency(self):
        return float(max(np.abs(self.freqs[0]).max(), np.abs(self.freqs[1]).max()))

    def jet(self, x, order=3):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        pts = x.reshape(-1, 2)
        f1, f2 = self.freqs
        k1 = TWO_PI * 1j * f1
        k2 = TWO_PI * 1j * f2
        e1 = np.exp(np.outer(pts[:, 0], k1))  # (M, N1)
        e2 = np.exp(np.outer(pts[:, 1], k2))
        C = self.coeffs

        def deriv(a1, a2):
            w1 = e1 * k1**a1
            w2 = e2 * k2**a2
            return np.einsum("ma,cab,mb->mc", w1, C, w2).real

        coeffs = []
        for m in range(order + 1):
            arr = np.zeros((len(pts), 3) + (2,) * m)
            for idx in np.ndindex(*(2,) * m):
                a1 = sum(1 for i in idx if i == 0)
                arr[(slice(None), slice(None)) + idx] = deriv(a1, m - a1)
            coeffs.append(arr.reshape(shape + (3,) + (2,) * m))
        return J.Jet(coeffs, 2)


def load_surface_csv(path) -> SampledSurface:
    """Read ``x1,x2,y1,y2,y3`` rows sampled on a uniform 1-periodic grid."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"x1", "x2", "y1", "y2", "y3"} - set(reader.fieldnames or ())
        if missing:
            raise BadParams(f"{path}: missing columns {sorted(missing)}")
        rows = [[float(r[k]) for k in ("x1", "x2", "y1", "y2", "y3")] for r in reader]
    data = np.asarray(rows)
    x1 = np.unique(np.round(data[:, 0], 12))
    x2 = np.unique(np.round(data[:, 1], 12))
    n1, n2 = len(x1), len(x2)
    if n1 * n2 != len(data):
        raise BadParams(f"{path}: samples do not form a tensor grid")
    order = np.lexsort((data[:, 1], data[:, 0]))
    Y = data[order, 2:].reshape(n1, n2, 3)
    return SampledSurface.from_grid(Y)


# ---------------------------------------------------------------------------
# sequences


def fibonacci_lattice(min_points):
    """Rank-1 lattice whose coordinate projections are uniform grids of ``F_m`` points."""
    a, b = 1, 1
    while b < min_points:
        a, b = b, a + b
    k = np.arange(b)
    return np.stack([k / b, np.mod(k * a, b) / b], axis=-1)


def _chunks(x, size):
    for i in range(0, len(x), size):
        yield x[i : i + size]


def measure_surface(surface, points, target=None, chunk=1 << 15):
    """``(delta, eta)``: sup of ``|du . du - g|`` and of ``|u|, |du|, |d^2 u|``.

    ``target(x)`` returns the metric being approximated (identity by default).
    """
    delta = 0.0
    eta = 0.0
    for xs in _chunks(points, chunk):
        y = surface.jet(xs, order=2)
        g = first_form(y.truncate(1)).val
        gt = np.eye(2) if target is None else target(xs)
        delta = max(delta, float(np.max(np.abs(g - gt))))
        eta = max(eta, float(np.max(np.abs(y.c[0]))), float(np.max(np.abs(y.c[1]))), float(np.max(np.abs(y.c[2]))))
    return delta, eta


@dataclass
class RenormSequence:
    surfaces: list
    delta: np.ndarray
    eta: np.ndarray
    sample_points: int
    schedule: dict = field(default_factory=dict)
    mu_cap: Optional[np.ndarray] = None

    @property
    def Q(self):
        return len(self.surfaces) - 1

    def monotonicity(self, slack=0.05):
        """``(eta nondecreasing, delta nonincreasing)`` within relative ``slack``."""
        eta_ok = bool(np.all(self.eta[1:] >= (1 - slack) * self.eta[:-1]))
        delta_ok = bool(np.all(self.delta[1:] <= (1 + slack) * self.delta[:-1]))
        return eta_ok, delta_ok


def check_schedule(amplitudes, frequencies):
    a = np.asarray(amplitudes, dtype=float)
    lam = np.asarray(frequencies, dtype=float)
    if a.shape != lam.shape:
        raise ScheduleViolation("amplitude and frequency schedules differ in length")
    if np.any(lam <= 0) or np.any(lam != np.round(lam)):
        raise ScheduleViolation("frequencies must be positive integers (1-periodicity)")
    if np.any(a < 0) or np.any(a > 1):
        raise ScheduleViolation("slope amplitudes must lie in [0, 1]")
    if np.all(a == 0):
        return
    growth = a * lam
    if np.any(np.diff(growth) <= 0):
        raise ScheduleViolation("a_q * lambda_q must increase (C^2 size has to grow)")


def synthetic_sequence(Q=8, amplitudes=None, frequencies=None, a=0.2, c=0.4, sample_points=None) -> RenormSequence:
    """Corrugation family ``u_0, ..., u_Q`` over the base torus with radii ``0 < a < c < 1/2``.

    Defaults: ``a_q = 2^-q`` and ``lambda_q = 4^q`` for ``q = 1..Q``, with
    directions alternating between ``e1`` and ``e2``.
    """
    if not 0 < a < c < 0.5:
        raise BadParams("base torus needs 0 < a < c < 1/2")
    amps = [2.0**-q for q in range(1, Q + 1)] if amplitudes is None else list(amplitudes)
    lams = [4**q for q in range(1, Q + 1)] if frequencies is None else list(frequencies)
    if len(amps) != Q or len(lams) != Q:
        raise ScheduleViolation(f"schedules must have Q = {Q} entries")
    check_schedule(amps, lams)
    terms = []
    surfaces = [CorrugatedTorus(a, c, ())]
    for q in range(1, Q + 1):
        xi = (1.0, 0.0) if q % 2 else (0.0, 1.0)
        terms.append((float(amps[q - 1]), float(lams[q - 1]), xi))
        surfaces.append(CorrugatedTorus(a, c, tuple(terms)))
    if sample_points is None:
        sample_points = int(max(4096, 2 * max(lams, default=1)))
    # the most refined member stands in for the limit metric
    target = _metric_of(surfaces[-1])
    seq = sequence_from_surfaces(surfaces, sample_points, target)
    seq.schedule = {"a": a, "c": c, "amplitudes": amps, "frequencies": lams, "directions": "alternating e1, e2"}
    return seq


def _metric_of(surface):
    def target(x):
        return first_form(surface.jet(x, order=1)).val

    return target


def sequence_from_surfaces(surfaces: Sequence, sample_points=4096, target=None) -> RenormSequence:
    pts = fibonacci_lattice(sample_points)
    d, e = zip(*(measure_surface(s, pts, target) for s in surfaces))
    return RenormSequence(list(surfaces), np.asarray(d), np.asarray(e), len(pts))


def load_sequence_csv(paths, target=None) -> RenormSequence:
    """Sequence from per-``q`` CSV files.

    ``target`` is the metric for the ``delta`` proxy; by default the metric of the last file.
    """
    surfaces = [load_surface_csv(p) for p in paths]
    if target is None:
        target = _metric_of(surfaces[-1])
    n = max(int(s.coeffs.shape[1]) * int(s.coeffs.shape[2]) for s in surfaces)
    return sequence_from_surfaces(surfaces, max(4096, n), target)


# ---------------------------------------------------------------------------
# per-q state


@dataclass
class RenormState:
    points: np.ndarray
    eta: float
    g: np.ndarray
    h: np.ndarray
    gamma: np.ndarray
    gamma_i: np.ndarray
    Gamma_over_eta: np.ndarray
    Q_over_eta: np.ndarray
    report: ResidualReport


def codazzi_source(Gamma, h):
    """``Q_ijk = Gamma^l_ik h_jl - Gamma^l_jk h_il``."""
    return np.einsum("...lik,...jl->...ijk", Gamma, h) - np.einsum("...ljk,...il->...ijk", Gamma, h)


def renorm_state(surface, eta, x) -> RenormState:
    """Rescaled fields at points ``x`` and the renormalized identities.

    ``gauss``: ``det h - det g gamma`` with ``gamma`` from the curvature tensor.
    ``codazzi_z``: ``(d_i h_jk - d_j h_ik) / eta - Q_ijk / eta``, i.e. the identity in
    the stretched variable ``z = eta x``.
    """
    x = np.asarray(x, dtype=float)
    st = geometry_from_jet(surface.jet(x, 3), points=x)
    h = st.H[..., 0, :, :] / eta
    gamma = st.kappa / eta**2
    Q = codazzi_source(st.Gamma, h)
    dh = st.dH[..., 0, :, :, :] / eta  # [j, k, i] = d_i h_jk
    curl = np.einsum("...jki->...ijk", dh) - np.einsum("...ikj->...ijk", dh)
    rep = ResidualReport()
    rep.add("gauss", sup(np.linalg.det(h) - np.linalg.det(st.g) * gamma))
    rep.add("codazzi_z", sup((curl - Q) / eta))
    rep.add("codazzi_rel", sup(curl - Q) / max(sup(curl), sup(Q), 1e-300))
    rep.add("h_sup", sup(h))
    rep.add("Q_bound_constant", sup(Q) / max(sup(h), 1e-300))
    return RenormState(
        points=x,
        eta=float(eta),
        g=st.g,
        h=h,
        gamma=gamma,
        gamma_i=st.principal / eta,
        Gamma_over_eta=st.Gamma / eta,
        Q_over_eta=Q / eta,
        report=rep,
    )


def light_fields(surface, x, eta):
    """Fields needed for pairings from second-order jets; ``gamma`` via ``det H / det g``."""
    y = surface.jet(x, order=2)
    g = first_form(y)  # order 1
    gi = np.linalg.inv(g.val)
    Gamma = christoffel(gi, g.grad().val)
    nu = normal_frame(y.truncate(1), 1)
    H = np.einsum("...aij,...am->...mij", y.c[2], nu.val)[..., 0, :, :]
    h = H / eta
    return {
        "h": h,
        "gamma": np.linalg.det(H) / np.linalg.det(g.val) / eta**2,
        "Gamma_over_eta": Gamma / eta,
        "Q_over_eta": codazzi_source(Gamma, h) / eta,
    }


# ---------------------------------------------------------------------------
# test functions and pairings


def _bump1d(t):
    out = np.zeros_like(t)
    m = np.abs(t) < 1
    out[m] = np.exp(-1.0 / (1.0 - t[m] ** 2))
    return out


_BUMP_INTEGRAL = 0.443993816168079  # int_{-1}^{1} exp(-1/(1-t^2)) dt


@dataclass(frozen=True)
class Bump:
    center: tuple
    radius: float

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        t1 = (z[..., 0] - self.center[0]) / self.radius
        t2 = (z[..., 1] - self.center[1]) / self.radius
        return _bump1d(t1) * _bump1d(t2) / (_BUMP_INTEGRAL * self.radius) ** 2

    @property
    def support(self):
        r = self.radius
        return ((self.center[0] - r, self.center[0] + r), (self.center[1] - r, self.center[1] + r))

    def describe(self):
        return {"center": list(self.center), "radius": self.radius, "integral": 1.0}


def phi_dictionary(cell, scales=(1 / 16, 1 / 8, 1 / 4)):
    """Unit-mass tensor-product bumps: each scale (a fraction of ``cell``) at 4 positions in ``[0, cell]^2``."""
    out = []
    for f in scales:
        r = f * cell
        for cx, cy in ((0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)):
            out.append(Bump((cx * cell, cy * cell), r))
    return out


@dataclass
class WeakStarEstimate:
    field: str
    test_functions: list
    pairings: np.ndarray  # [q, phi, component...]
    magnitudes: np.ndarray  # [q, phi]
    extrapolated_limit: np.ndarray
    trend_slope: np.ndarray
    quadrature: list

    def to_dict(self):
        return {
            "field": self.field,
            "magnitudes": self.magnitudes,
            "trend_slope": self.trend_slope,
            "extrapolated_limit": self.extrapolated_limit,
            "quadrature": self.quadrature,
        }


PAIRED_FIELDS = ("h", "gamma", "Gamma_over_eta", "Q_over_eta")


def quadrature_nodes(eta, max_frequency, box_width, nodes=None, min_nodes=512, cells_per_wave=8, max_nodes=4096):
    """Nodes per axis so that the fastest oscillation in ``z`` spans ``cells_per_wave`` cells."""
    wavelength = eta / max_frequency
    need = int(np.ceil(cells_per_wave * box_width / wavelength))
    if nodes is None:
        nodes = max(min_nodes, need)
        if nodes > max_nodes:
            raise QuadratureUnderResolved(f"quadrature needs {nodes} nodes per axis (cap {max_nodes})")
    cells = wavelength / (box_width / nodes)
    if cells < 4:
        raise QuadratureUnderResolved(f"oscillation wavelength spans {cells:.2f} < 4 quadrature cells")
    return nodes


def pair_fields(surface, eta, phis, nodes=None, fields=PAIRED_FIELDS, chunk=1 << 15, max_nodes=4096):
    """Midpoint-rule pairings ``int F(z / eta) Phi(z) dz`` over the bounding box of the supports."""
    lo = np.min([[b.support[0][0], b.support[1][0]] for b in phis], axis=0)
    hi = np.max([[b.support[0][1], b.support[1][1]] for b in phis], axis=0)
    width = float(np.max(hi - lo))
    N = quadrature_nodes(eta, surface.max_frequency, width, nodes, max_nodes=max_nodes)
    dz = width / N
    ax = lo[0] + (np.arange(N) + 0.5) * dz
    ay = lo[1] + (np.arange(N) + 0.5) * dz
    Z = np.stack(np.meshgrid(ax, ay, indexing="ij"), axis=-1).reshape(-1, 2)
    sums = None
    for zs in _chunks(Z, chunk):
        W = np.stack([b(zs) for b in phis], axis=-1) * dz * dz  # (M, P)
        keep = np.any(W != 0, axis=1)
        if not keep.any():
            continue
        zs, W = zs[keep], W[keep]
        F = light_fields(surface, zs / eta, eta)
        part = {k: np.einsum("mp,m...->p...", W, F[k]) for k in fields}
        sums = part if sums is None else {k: sums[k] + part[k] for k in fields}
    return sums, {"nodes_per_axis": N, "box": [lo.tolist(), hi.tolist()], "spacing": dz}


def weak_star_pairings(seq: RenormSequence, phis=None, eta=None, nodes=None, fields=PAIRED_FIELDS, max_nodes=4096):
    """Pairings of the rescaled fields with each ``Phi`` for every ``q``.

    ``eta`` overrides the measured sizes (e.g. frozen at ``eta_0`` as a
    negative control).  Returns ``{field: WeakStarEstimate}``.
    """
    etas = seq.eta if eta is None else np.broadcast_to(np.asarray(eta, dtype=float), seq.eta.shape)
    if phis is None:
        phis = phi_dictionary(float(seq.eta[0]))
    per_q = []
    quad = []
    for surf, e in zip(seq.surfaces, etas):
        sums, info = pair_fields(surf, float(e), phis, nodes=nodes, fields=fields, max_nodes=max_nodes)
        per_q.append(sums)
        quad.append(info)
    out = {}
    qs = np.arange(len(per_q))
    for k in fields:
        vals = np.stack([s[k] for s in per_q])  # [q, phi, ...]
        mags = np.sqrt(np.sum(vals.reshape(vals.shape[0], vals.shape[1], -1) ** 2, axis=-1))
        slope = np.array([_log_slope(qs, mags[:, p]) for p in range(mags.shape[1])])
        out[k] = WeakStarEstimate(k, [b.describe() for b in phis], vals, mags, vals[-1], slope, quad)
    return out


def _log_slope(q, m):
    m = np.asarray(m, dtype=float)
    if np.all(m <= 0):
        return 0.0
    y = np.log(np.maximum(m, 1e-300))
    return float(np.polyfit(q, y, 1)[0])


CLAIM_FIELDS = {"Gamma_over_eta": "Gamma_bar", "Q_over_eta": "F", "gamma": "gamma_bar"}


def verify_vanishing_claims(estimates: dict, ratio=0.25, flat_tol=1e-9):
    """Per-field verdicts for the vanishing of ``Gamma_bar``, ``F`` and ``gamma_bar``.

    PASS when, for every test function, the final magnitude is at most
    ``ratio`` times the initial one and the log-magnitude trend is negative.
    Pairings that do not change with ``q`` give NOT-APPLICABLE.
    """
    verdicts = {}
    details = {}
    for fname, label in CLAIM_FIELDS.items():
        est = estimates[fname]
        m = est.magnitudes
        first, last = m[0], m[-1]
        variation = np.max(np.abs(m - m[0]), axis=0) / np.maximum(np.abs(m[0]), 1e-300)
        if np.all(variation <= flat_tol):
            verdicts[label] = "NOT-APPLICABLE"
        else:
            decayed = last <= ratio * first
            falling = est.trend_slope < 0
            ok = decayed & falling
            verdicts[label] = "PASS" if bool(np.all(ok)) else "FAIL"
        details[label] = {
            "field": fname,
            "final_over_initial": (last / np.maximum(first, 1e-300)),
            "trend_slope": est.trend_slope,
        }
    return {"verdicts": verdicts, "details": details, "ratio": ratio}


# ---------------------------------------------------------------------------
# limit fluid


@dataclass
class LimitFluid:
    fluid: FluidState
    branch: str  # 'pressureless' | 'negative'
    report: ResidualReport
    solvable: bool = True


def limit_branch(hbar, tol=1e-10):
    """``(p, F)`` with ``F = (hbar_22 - p, -hbar_12, hbar_11 - p)`` packed as ``rho v (x) v``."""
    hb = np.asarray(hbar, dtype=float)
    scale = 1.0 + np.abs(hb).max()
    det = hb[..., 0, 0] * hb[..., 1, 1] - hb[..., 0, 1] * hb[..., 1, 0]
    if np.any(np.abs(det) > tol * scale**2):
        raise RankNotOne(f"limit_fluid_assembly: det hbar = {float(np.max(np.abs(det))):.3e} != 0")
    if np.any(np.abs(hb[..., 0, 1] - hb[..., 1, 0]) > tol * scale):
        raise RankNotOne("limit_fluid_assembly: hbar is not symmetric")
    d1, d2 = hb[..., 0, 0], hb[..., 1, 1]
    pos = (d1 >= -tol * scale) & (d2 >= -tol * scale)
    neg = (d1 <= tol * scale) & (d2 <= tol * scale)
    if not np.all(pos | neg):
        raise MixedDiagonalSigns("limit_fluid_assembly: diagonal entries of hbar have opposite signs")
    use_pos = bool(np.all(pos))
    if not use_pos and not np.all(neg):
        raise MixedDiagonalSigns("limit_fluid_assembly: branch changes across the domain")
    p = np.zeros(d1.shape) if use_pos else d1 + d2
    F = np.empty(hb.shape)
    F[..., 0, 0] = d2 - p
    F[..., 1, 1] = d1 - p
    F[..., 0, 1] = F[..., 1, 0] = -hb[..., 0, 1]
    return p, F, ("pressureless" if use_pos else "negative")


def limit_fluid_assembly(hbar, rho=1.0, grid: Optional[Grid] = None, tol=1e-10) -> LimitFluid:
    """Fluid variables of the limit system from a rank-one ``hbar``.

    ``rho v1^2 + p = hbar_22``, ``rho v1 v2 = -hbar_12``, ``rho v2^2 + p = hbar_11``
    with ``p = 0`` for a nonnegative diagonal and ``p = hbar_11 + hbar_22`` for a
    nonpositive one.  ``hbar`` is pointwise (any batch shape); a nonconstant
    field without ``grid`` is flagged as not solvable for ``rho``.
    """
    hb = np.asarray(hbar, dtype=float)
    p, F, branch = limit_branch(hb, tol)
    rho_arr = np.broadcast_to(np.asarray(rho, dtype=float), p.shape).copy()
    scale = 1.0 + np.abs(F).max()
    # factor through the larger diagonal entry; v1 >= 0 fixes the overall sign
    f11, f22, f12 = np.maximum(F[..., 0, 0], 0.0), np.maximum(F[..., 1, 1], 0.0), F[..., 0, 1]
    first = f11 >= f22
    big = np.sqrt(np.where(first, f11, f22) / rho_arr)
    safe = np.where(big > 0, big, 1.0)
    other = np.where(big > 0, f12 / (rho_arr * safe), 0.0)
    sgn = np.where(f12 < 0, -1.0, 1.0)
    v = np.stack([np.where(first, big, sgn * other), np.where(first, other, sgn * big)], axis=-1)
    fl = FluidState(rho=rho_arr, v_lower=v, v_upper=v, p=p, speed_sq=np.sum(v * v, axis=-1), f=F)
    rep = ResidualReport()
    rvv = rho_arr[..., None, None] * np.einsum("...i,...j->...ij", v, v)
    rep.add("factorization", sup(rvv - F))
    rep.add("gauss_limit", sup(rho_arr * p * fl.speed_sq + p**2))
    const = bool(np.all(np.abs(hb - hb.reshape(-1, 2, 2)[0]) <= tol * scale)) if hb.ndim > 2 else True
    if grid is not None and hb.shape[:-2] == tuple(grid.shape):
        T = rvv + p[..., None, None] * np.eye(2)
        mom = np.stack(
            [grid.diff(T[..., 0, 0], 0) + grid.diff(T[..., 0, 1], 1), grid.diff(T[..., 1, 0], 0) + grid.diff(T[..., 1, 1], 1)],
            axis=-1,
        )
        rep.add("momentum", sup(mom))
    elif const:
        rep.add("momentum", 0.0)
    return LimitFluid(fl, branch, rep, solvable=const or grid is not None)


def swap_branch(hbar):
    """``(hbar_11, hbar_22) -> (-hbar_22, -hbar_11)`` keeping ``hbar_12``."""
    hb = np.array(hbar, dtype=float)
    d1 = hb[..., 0, 0].copy()
    hb[..., 0, 0] = -hb[..., 1, 1]
    hb[..., 1, 1] = -d1
    return hb
