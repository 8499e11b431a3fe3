"""Truncated Taylor arithmetic (order <= 3) over n independent variables.

A :class:`Jet` stores the value of a tensor-valued function together with its
partial derivatives up to a fixed order.  Coefficient ``c[m]`` has shape
``S + (n,) * m`` where ``S`` is the value shape (batch axes followed by tensor
axes).  Derivative axes are always trailing and fully symmetric.

Contractions are written with :func:`jeinsum`, which applies the Leibniz rule
to any bilinear einsum.  Derivative index letters ``XYZ`` are reserved.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

_DLET = "XYZ"
MAX_ORDER = 3


class Jet:
    __slots__ = ("c", "n")
    __array_priority__ = 1000
    __array_ufunc__ = None

    def __init__(self, coeffs, n):
        self.c = [np.asarray(a, dtype=float) for a in coeffs]
        self.n = int(n)
        if len(self.c) - 1 > MAX_ORDER:
            raise ValueError("jet order above 3 is not supported")

    @property
    def order(self):
        return len(self.c) - 1

    @property
    def val(self):
        return self.c[0]

    @property
    def shape(self):
        return self.c[0].shape

    @property
    def ndim(self):
        return self.c[0].ndim

    def truncate(self, order):
        return Jet(self.c[: order + 1], self.n)

    def __repr__(self):
        return f"Jet(shape={self.shape}, n={self.n}, order={self.order})"

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            m = min(self.order, other.order)
            return Jet([a + b for a, b in zip(self.c[: m + 1], other.c[: m + 1])], self.n)
        other = np.asarray(other, dtype=float)
        out = [self.c[0] + other]
        for m, a in enumerate(self.c[1:], start=1):
            out.append(np.broadcast_to(a, out[0].shape + (self.n,) * m))
        return Jet(out, self.n)

    __radd__ = __add__

    def __neg__(self):
        return Jet([-a for a in self.c], self.n)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        return jeinsum(",->", self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if p == 2:
            return self * self
        return power(self, p)

    # tensor-axis manipulation -------------------------------------------
    def sel(self, *idx):
        """Index the trailing value axes (derivative axes are untouched)."""
        return Jet([a[(Ellipsis,) + idx + (slice(None),) * m] for m, a in enumerate(self.c)], self.n)

    def take(self, i, axis):
        """Select index ``i`` along value axis ``axis`` (negative, counted from the end of the value shape)."""
        if axis >= 0:
            raise ValueError("axis must be negative")
        return Jet([np.take(a, i, axis=axis - m) for m, a in enumerate(self.c)], self.n)

    def expand(self, axis):
        """Insert a length-1 value axis; ``axis`` counts from the end of the value shape."""
        if axis >= 0:
            raise ValueError("axis must be negative")
        return Jet([np.expand_dims(a, axis - m) for m, a in enumerate(self.c)], self.n)

    def grad(self):
        """Jet of the gradient: value shape gains a trailing derivative axis."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        return Jet(self.c[1:], self.n)


def const(value, n):
    """Constant jet (order 3, vanishing derivatives)."""
    v = np.asarray(value, dtype=float)
    return Jet([v] + [np.zeros(v.shape + (n,) * m) for m in range(1, MAX_ORDER + 1)], n)


def variables(x, order=MAX_ORDER):
    """Independent-variable jets for points ``x`` of shape ``(..., n)``.

    Returns a list of n jets, each with value shape ``x.shape[:-1]``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    batch = x.shape[:-1]
    out = []
    for i in range(n):
        c = [x[..., i]]
        if order >= 1:
            e = np.zeros(batch + (n,))
            e[..., i] = 1.0
            c.append(e)
        for m in range(2, order + 1):
            c.append(np.zeros(batch + (n,) * m))
        out.append(Jet(c, n))
    return out


def _as_jet(a, n):
    if isinstance(a, Jet):
        return a
    return Jet([np.asarray(a, dtype=float)], n)


def _n_of(*args):
    for a in args:
        if isinstance(a, Jet):
            return a.n
    return None


def jeinsum(spec, a, b):
    """Leibniz-rule einsum of two operands over their value axes.

    ``spec`` uses lowercase letters for tensor axes only; batch axes are
    handled by an implicit leading ellipsis.  Either operand may be a plain
    array, which is treated as a constant.
    """
    lhs, out = spec.split("->")
    sa, sb = lhs.split(",")
    n = _n_of(a, b)
    if n is None:
        return np.einsum(f"...{sa},...{sb}->...{out}", a, b)
    ja_const = not isinstance(a, Jet)
    jb_const = not isinstance(b, Jet)
    a = _as_jet(a, n)
    b = _as_jet(b, n)
    if ja_const:
        order = b.order
    elif jb_const:
        order = a.order
    else:
        order = min(a.order, b.order)
    coeffs = []
    for m in range(order + 1):
        D = _DLET[:m]
        total = None
        for r in range(m + 1):
            for S in combinations(range(m), r):
                if ja_const and r > 0:
                    continue
                if jb_const and r < m:
                    continue
                la = "".join(D[i] for i in S)
                lb = "".join(D[i] for i in range(m) if i not in S)
                term = np.einsum(f"...{sa}{la},...{sb}{lb}->...{out}{D}", a.c[r], b.c[m - r])
                total = term if total is None else total + term
        coeffs.append(total)
    return Jet(coeffs, n)


def jtrans(spec, a):
    """Permute or reduce value axes, e.g. ``jtrans('ij->ji', J)`` or ``'ii->'``."""
    src, dst = spec.split("->")
    if not isinstance(a, Jet):
        return np.einsum(f"...{src}->...{dst}", a)
    return Jet(
        [np.einsum(f"...{src}{_DLET[:m]}->...{dst}{_DLET[:m]}", c) for m, c in enumerate(a.c)],
        a.n,
    )


def stack(jets, axis=-1):
    """Stack jets along a new value axis (``axis`` counted from the end, negative)."""
    n = _n_of(*jets)
    jets = [_as_jet(j, n) if isinstance(j, Jet) else const(j, n) for j in jets]
    order = min(j.order for j in jets)
    shape = np.broadcast_shapes(*(j.shape for j in jets))
    coeffs = []
    for m in range(order + 1):
        parts = [np.broadcast_to(j.c[m], shape + (n,) * m) for j in jets]
        coeffs.append(np.stack(parts, axis=axis - m))
    return Jet(coeffs, n)


# elementwise functions ------------------------------------------------------

def _compose(f, d):
    """Chain rule for elementwise phi(f) given phi derivatives ``d = [phi, phi', ...]``."""
    c = f.c
    out = [d[0]]
    if f.order >= 1:
        out.append(d[1][..., None] * c[1])
    if f.order >= 2:
        out.append(
            d[2][..., None, None] * np.einsum("...X,...Y->...XY", c[1], c[1])
            + d[1][..., None, None] * c[2]
        )
    if f.order >= 3:
        t2 = (
            np.einsum("...XY,...Z->...XYZ", c[2], c[1])
            + np.einsum("...XZ,...Y->...XYZ", c[2], c[1])
            + np.einsum("...YZ,...X->...XYZ", c[2], c[1])
        )
        out.append(
            d[3][..., None, None, None] * np.einsum("...X,...Y,...Z->...XYZ", c[1], c[1], c[1])
            + d[2][..., None, None, None] * t2
            + d[1][..., None, None, None] * c[3]
        )
    return Jet(out, f.n)


def sin(f):
    if not isinstance(f, Jet):
        return np.sin(f)
    s, co = np.sin(f.val), np.cos(f.val)
    return _compose(f, [s, co, -s, -co])


def cos(f):
    if not isinstance(f, Jet):
        return np.cos(f)
    s, co = np.sin(f.val), np.cos(f.val)
    return _compose(f, [co, -s, -co, s])


def exp(f):
    if not isinstance(f, Jet):
        return np.exp(f)
    e = np.exp(f.val)
    return _compose(f, [e, e, e, e])


def log(f):
    if not isinstance(f, Jet):
        return np.log(f)
    x = f.val
    return _compose(f, [np.log(x), 1 / x, -1 / x**2, 2 / x**3])


def power(f, p):
    if not isinstance(f, Jet):
        return np.power(f, p)
    x = f.val
    return _compose(
        f,
        [x**p, p * x ** (p - 1), p * (p - 1) * x ** (p - 2), p * (p - 1) * (p - 2) * x ** (p - 3)],
    )


def sqrt(f):
    return power(f, 0.5)


def reciprocal(f):
    if not isinstance(f, Jet):
        return 1.0 / np.asarray(f)
    x = f.val
    return _compose(f, [1 / x, -1 / x**2, 2 / x**3, -6 / x**4])


# small dense linear algebra on jets --------------------------------------------

def inv(a):
    """Inverse of a jet of square matrices (last two value axes)."""
    if not isinstance(a, Jet):
        return np.linalg.inv(a)
    n = a.n
    y0 = np.linalg.inv(a.c[0])
    ys = [y0]
    for m in range(1, a.order + 1):
        D = _DLET[:m]
        total = None
        for r in range(1, m + 1):
            for S in combinations(range(m), r):
                la = "".join(D[i] for i in S)
                lb = "".join(D[i] for i in range(m) if i not in S)
                term = np.einsum(f"...ij{la},...jk{lb}->...ik{D}", a.c[r], ys[m - r])
                total = term if total is None else total + term
        ys.append(-np.einsum(f"...ij,...jk{D}->...ik{D}", y0, total))
    return Jet(ys, n)


def det(a):
    """Determinant of a jet of square matrices by cofactor expansion (small sizes)."""
    if not isinstance(a, Jet):
        return np.linalg.det(a)
    k = a.shape[-1]
    if k == 1:
        return a.sel(0, 0)
    if k == 2:
        return a.sel(0, 0) * a.sel(1, 1) - a.sel(0, 1) * a.sel(1, 0)
    total = None
    for j in range(k):
        rows = list(range(1, k))
        cols = [c for c in range(k) if c != j]
        minor = Jet([c[(Ellipsis,) + np.ix_(rows, cols) + (slice(None),) * m] for m, c in enumerate(a.c)], a.n)
        term = a.sel(0, j) * det(minor)
        if j % 2:
            term = -term
        total = term if total is None else total + term
    return total


def values(x):
    """Plain value of a jet or array."""
    return x.val if isinstance(x, Jet) else np.asarray(x)
