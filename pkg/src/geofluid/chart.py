"""Parametrized embeddings, their derivative jets and sampling grids."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np

from . import jets as J
from .errors import BadParams, DomainError, RankDeficient, StencilOutOfDomain, UnknownChart

RANK_RTOL = 1e-10
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Chart:
    """An embedding ``y: R^n -> R^(n+k)``.

    ``func(xs, params)`` receives a list of n coordinates (jets or plain arrays)
    and returns the list of n+k ambient components.  It must only use the
    elementwise functions from :mod:`geofluid.jets`, so the same expression
    yields analytic jets or bare values.

    ``normal_hint``, when given, has the same calling convention and returns k
    ambient vectors (each a list of components) that span the normal space
    after projection; it fixes a smooth normal frame for codimension > 1.
    """

    name: str
    dim_domain: int
    dim_ambient: int
    func: Callable
    ranges: tuple
    periods: tuple
    params: dict = field(default_factory=dict)
    normal_hint: Optional[Callable] = None

    @property
    def codim(self):
        return self.dim_ambient - self.dim_domain

    def values(self, x):
        x = np.asarray(x, dtype=float)
        comps = self.func([x[..., i] for i in range(self.dim_domain)], self.params)
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), x.shape[:-1]) for c in comps], axis=-1)

    def grid(self, counts, ranges=None):
        if np.isscalar(counts):
            counts = (int(counts),) * self.dim_domain
        return Grid(
            counts=tuple(int(c) for c in counts),
            ranges=tuple(tuple(map(float, r)) for r in (ranges or self.ranges)),
            periodic=tuple(p is not None for p in self.periods),
        )


@dataclass(frozen=True)
class Grid:
    """Tensor-product sample grid.  Periodic axes drop the duplicated endpoint."""

    counts: tuple
    ranges: tuple
    periodic: tuple

    def __post_init__(self):
        if len(self.counts) != len(self.ranges) or len(self.counts) != len(self.periodic):
            raise BadParams("grid counts, ranges and periodic flags must have equal length")
        for c, (lo, hi) in zip(self.counts, self.ranges):
            if c < 2:
                raise BadParams("grid needs at least 2 samples per axis")
            if not hi > lo:
                raise BadParams(f"empty grid range ({lo}, {hi})")

    @property
    def ndim(self):
        return len(self.counts)

    @property
    def shape(self):
        return self.counts

    def axes(self):
        out = []
        for c, (lo, hi), per in zip(self.counts, self.ranges, self.periodic):
            if per:
                out.append(lo + (hi - lo) * np.arange(c) / c)
            else:
                out.append(np.linspace(lo, hi, c))
        return out

    def spacing(self):
        return tuple(
            (hi - lo) / (c if per else c - 1)
            for c, (lo, hi), per in zip(self.counts, self.ranges, self.periodic)
        )

    def points(self):
        """Node coordinates with shape ``counts + (ndim,)`` (``ij`` indexing)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def diff(self, f, axis):
        """Second-order derivative of a sampled field along ``axis``.

        Central differences with wraparound on periodic axes, one-sided
        second-order stencils at the edges of non-periodic axes.
        """
        f = np.asarray(f, dtype=float)
        h = self.spacing()[axis]
        if self.periodic[axis]:
            return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2 * h)
        return np.gradient(f, h, axis=axis, edge_order=2)

    def refine(self, factor=2):
        return Grid(tuple(c * factor for c in self.counts), self.ranges, self.periodic)


# ---------------------------------------------------------------------------
# jet evaluation


def _check_domain(chart, x, pad=0.0):
    tol = 1e-12
    for i, (per, (lo, hi)) in enumerate(zip(chart.periods, chart.ranges)):
        if per is not None:
            continue
        xi = x[..., i]
        if np.any(xi - pad < lo - tol) or np.any(xi + pad > hi + tol):
            return i
    return None


def check_rank(dy):
    """Immersion check on tangent vectors ``dy`` of shape ``(..., N, n)``."""
    s = np.linalg.svd(dy, compute_uv=False)
    bad = s[..., -1] <= RANK_RTOL * s[..., 0]
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        raise RankDeficient(f"eval_jet: tangent map loses rank at sample {tuple(idx)}")


def eval_jet(chart: Chart, x, order=3, check=True, strict_domain=True) -> J.Jet:
    """Analytic jet of the embedding at points ``x`` (shape ``(..., n)``).

    The result has value shape ``x.shape[:-1] + (N,)``.  ``check`` tests the
    rank of the tangent map; ``strict_domain=False`` allows evaluation just
    outside the chart ranges (the formulas extend smoothly).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != chart.dim_domain:
        raise DomainError(f"expected points with {chart.dim_domain} coordinates")
    ax = _check_domain(chart, x) if strict_domain else None
    if ax is not None:
        raise DomainError(f"eval_jet: coordinate x{ax + 1} outside chart range {chart.ranges[ax]}")
    xs = J.variables(x, order)
    comps = chart.func(xs, chart.params)
    y = J.stack([c if isinstance(c, J.Jet) else J.const(np.broadcast_to(c, x.shape[:-1]), chart.dim_domain) for c in comps], axis=-1)
    if check:
        check_rank(y.c[1])
    return y


_STENCILS = {
    0: ([0], [1.0]),
    1: ([-1, 1], [-0.5, 0.5]),
    2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
    3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
}


def finite_difference_jet(values: Callable, x, h, n=None, domain: Optional[Chart] = None) -> J.Jet:
    """Second-order central-difference jet of a values-only embedding.

    ``values`` maps points of shape ``(..., n)`` to ``(..., N)``.  Mixed
    derivatives use tensor products of the one-dimensional stencils, so every
    entry is O(h^2) accurate.  When ``domain`` is given, stencils must stay in
    its range on non-periodic axes.
    """
    if h <= 0:
        raise BadParams("finite-difference step must be positive")
    if isinstance(values, Chart):
        domain = values
        values = values.values
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] if n is None else n
    if domain is not None:
        ax = _check_domain(domain, x, pad=2 * h)
        if ax is not None:
            raise StencilOutOfDomain(f"finite_difference_jet: stencil leaves range on axis {ax + 1}")
    cache = {}

    def at(offset):
        if offset not in cache:
            cache[offset] = values(x + h * np.asarray(offset, dtype=float))
        return cache[offset]

    y0 = at((0,) * n)
    coeffs = [y0]
    for m in range(1, 4):
        arr = np.zeros(y0.shape + (n,) * m)
        for idx in product(range(n), repeat=m):
            if list(idx) != sorted(idx):
                continue
            mult = [idx.count(i) for i in range(n)]
            acc = 0.0
            for combo in product(*(zip(*_STENCILS[k]) for k in mult)):
                off = tuple(o for o, _ in combo)
                w = np.prod([wt for _, wt in combo])
                acc = acc + w * at(off)
            acc = acc / h**m
            for perm in set(_perms(idx)):
                arr[(Ellipsis,) + perm] = acc
        coeffs.append(arr)
    return J.Jet(coeffs, n)


def _perms(idx):
    from itertools import permutations

    return permutations(idx)


# ---------------------------------------------------------------------------
# built-in charts


def _plane(xs, p):
    n, k = p["n"], p["k"]
    zero = 0.0 * xs[0]
    return list(xs) + [zero] * k


def _cylinder(xs, p):
    a = p["a"]
    return [a * J.cos(xs[0]), a * J.sin(xs[0]), xs[1]]


def _sphere(xs, p):
    r = p["r"]
    c2 = J.cos(xs[1])
    return [r * c2 * J.cos(xs[0]), r * c2 * J.sin(xs[0]), r * J.sin(xs[1])]


def _torus(xs, p):
    a, c = p["a"], p["c"]
    rad = c + a * J.cos(xs[1])
    return [rad * J.cos(xs[0]), rad * J.sin(xs[0]), a * J.sin(xs[1])]


def _graph_height(xs, p, mu):
    n = len(xs)
    amp = p["amplitude"]
    phase = 0.0 * xs[0] + 0.3 * mu
    for i, xi in enumerate(xs):
        phase = phase + 0.7 * (i + 1 + mu) * xi
    mixed = xs[0] - (mu + 1) * xs[n - 1] if n > 1 else 2.0 * xs[0]
    return amp * J.sin(phase) + 0.5 * amp * J.cos(mixed)


def _graph(xs, p):
    return list(xs) + [_graph_height(xs, p, mu) for mu in range(p["k"])]


def _clifford(xs, p):
    r1, r2 = p["r1"], p["r2"]
    return [r1 * J.cos(xs[0]), r1 * J.sin(xs[0]), r2 * J.cos(xs[1]), r2 * J.sin(xs[1])]


def _clifford_hint(xs, p):
    t1, t2 = p["twist"]
    th = t1 * xs[0] + t2 * xs[1]
    ct, st = J.cos(th), J.sin(th)
    c1, s1, c2, s2 = J.cos(xs[0]), J.sin(xs[0]), J.cos(xs[1]), J.sin(xs[1])
    n1 = [c1, s1, 0.0 * c1, 0.0 * c1]
    n2 = [0.0 * c2, 0.0 * c2, c2, s2]
    e1 = [ct * a + st * b for a, b in zip(n1, n2)]
    e2 = [-st * a + ct * b for a, b in zip(n1, n2)]
    return [e1, e2]


def _round_sphere_nd(xs, p):
    r = p["r"]
    comps = [J.cos(xs[0]), J.sin(xs[0])]
    for xi in xs[1:]:
        c = J.cos(xi)
        comps = [c * u for u in comps] + [J.sin(xi)]
    return [r * u for u in comps]


def _need(params, key, default=None):
    if key in params:
        return params[key]
    if default is None:
        raise BadParams(f"missing chart parameter '{key}'")
    return default


def builtin_chart(name: str, params: Optional[dict] = None) -> Chart:
    """Construct one of the built-in analytic charts.

    Names: ``plane``, ``cylinder``, ``sphere``, ``geometric_torus``, ``graph``,
    ``clifford_torus``, ``round_sphere_nd``.
    """
    p = dict(params or {})
    pi = np.pi
    if name == "plane":
        n, k = int(p.get("n", 2)), int(p.get("k", 1))
        if n < 1 or k < 1:
            raise BadParams("plane needs n >= 1 and k >= 1")
        L = float(p.get("length", 1.0))
        per = p.get("periodic", False)
        return Chart(name, n, n + k, _plane, ((0.0, L),) * n, ((L if per else None),) * n, {"n": n, "k": k, "length": L, "periodic": bool(per)})
    if name == "cylinder":
        a = float(_need(p, "a", 1.0))
        if a <= 0:
            raise BadParams("cylinder radius must be positive")
        return Chart(name, 2, 3, _cylinder, ((-pi, pi), (-1.0, 1.0)), (2 * pi, None), {"a": a})
    if name == "sphere":
        r = float(_need(p, "r", 1.0))
        if r <= 0:
            raise BadParams("sphere radius must be positive")
        return Chart(name, 2, 3, _sphere, ((-pi, pi), (-1.2, 1.2)), (2 * pi, None), {"r": r})
    if name == "geometric_torus":
        a, c = float(_need(p, "a", 1.0)), float(_need(p, "c", 2.0))
        if not c > a > 0:
            raise BadParams("geometric torus requires c > a > 0")
        return Chart(name, 2, 3, _torus, ((-pi, pi), (-pi, pi)), (2 * pi, 2 * pi), {"a": a, "c": c})
    if name == "graph":
        n, k = int(p.get("n", 2)), int(p.get("k", 1))
        amp = float(p.get("amplitude", 0.3))
        if n < 1 or k < 1:
            raise BadParams("graph needs n >= 1 and k >= 1")
        return Chart(name, n, n + k, _graph, ((-1.0, 1.0),) * n, (None,) * n, {"n": n, "k": k, "amplitude": amp})
    if name == "clifford_torus":
        r1 = float(p.get("r1", 1 / np.sqrt(2)))
        r2 = float(p.get("r2", 1 / np.sqrt(2)))
        twist = tuple(int(t) for t in p.get("twist", (1, -2)))
        if r1 <= 0 or r2 <= 0 or len(twist) != 2:
            raise BadParams("clifford_torus needs positive radii and a twist pair")
        return Chart(name, 2, 4, _clifford, ((-pi, pi), (-pi, pi)), (2 * pi, 2 * pi), {"r1": r1, "r2": r2, "twist": twist}, normal_hint=_clifford_hint)
    if name == "round_sphere_nd":
        n = int(p.get("n", 3))
        r = float(p.get("r", 1.0))
        if n < 1 or r <= 0:
            raise BadParams("round_sphere_nd needs n >= 1 and r > 0")
        ranges = ((-pi, pi),) + ((-1.2, 1.2),) * (n - 1)
        periods = (2 * pi,) + (None,) * (n - 1)
        return Chart(name, n, n + 1, _round_sphere_nd, ranges, periods, {"n": n, "r": r})
    raise UnknownChart(f"unknown chart '{name}'")


BUILTIN_NAMES = ("plane", "cylinder", "sphere", "geometric_torus", "graph", "clifford_torus", "round_sphere_nd")


def sample_points(chart: Chart, counts) -> np.ndarray:
    """Flattened grid nodes, shape ``(P, n)``."""
    g = chart.grid(counts)
    return g.points().reshape(-1, chart.dim_domain)
