import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from geofluid import jets as J

X, Y = sp.symbols("x y")


_CACHE = {}


def sympy_jet(expr, point):
    """All partial derivatives up to order 3 of a scalar sympy expression, as arrays."""
    key = sp.srepr(expr)
    if key not in _CACHE:
        v = [X, Y]
        fns = []
        for m in range(4):
            idxs = list(np.ndindex(*(2,) * m))
            fns.append((idxs, [sp.lambdify((X, Y), sp.diff(expr, *[v[i] for i in idx]) if m else expr, "math") for idx in idxs]))
        _CACHE[key] = fns
    out = []
    for m, (idxs, fs) in enumerate(_CACHE[key]):
        arr = np.zeros((2,) * m)
        for idx, f in zip(idxs, fs):
            arr[idx] = f(*point)
        out.append(arr)
    return out


def assert_jet_close(jet, ref, tol=1e-10):
    for m, (a, b) in enumerate(zip(jet.c, ref)):
        np.testing.assert_allclose(a, b, atol=tol * (1 + np.abs(b).max()), err_msg=f"order {m}")


POINT = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))


@given(POINT)
def test_elementary_compositions_match_sympy(pt):
    x, y = J.variables(np.array(pt), 3)
    jet = J.sin(x * y) * J.exp(0.3 * x) + J.cos(y) / (2.0 + x * x)
    expr = sp.sin(X * Y) * sp.exp(sp.Rational(3, 10) * X) + sp.cos(Y) / (2 + X**2)
    assert_jet_close(jet, sympy_jet(expr, pt))


@given(POINT, st.sampled_from([-2.5, -1.0, -0.5, 0.5, 1.5, 3.0]))
def test_power_and_log(pt, p):
    x, y = J.variables(np.array(pt), 3)
    base = 2.0 + J.sin(x) * J.cos(y)
    assert_jet_close(J.power(base, p), sympy_jet((2 + sp.sin(X) * sp.cos(Y)) ** sp.Float(p), pt), 1e-9)
    assert_jet_close(J.log(base), sympy_jet(sp.log(2 + sp.sin(X) * sp.cos(Y)), pt), 1e-9)


@given(POINT)
def test_matrix_inverse_and_determinant(pt):
    x, y = J.variables(np.array(pt), 3)
    M = J.stack([J.stack([2.0 + J.sin(x), x * y]), J.stack([J.cos(y), 3.0 + y * y])], axis=-2)
    Mi = J.inv(M)
    eye = J.jeinsum("ij,jk->ik", M, Mi)
    assert np.allclose(eye.val, np.eye(2))
    for m in range(1, 4):
        assert np.abs(eye.c[m]).max() < 1e-12
    d = (2 + sp.sin(X)) * (3 + Y**2) - X * Y * sp.cos(Y)
    assert_jet_close(J.det(M), sympy_jet(d, pt))


def test_derivative_arrays_are_symmetric(rng):
    x, y = J.variables(rng.uniform(-1, 1, (5, 2)), 3)
    f = J.exp(x * J.sin(y)) * y
    assert np.allclose(f.c[2], np.swapaxes(f.c[2], -1, -2))
    for perm in [(0, 2, 1), (1, 0, 2), (2, 1, 0)]:
        assert np.allclose(f.c[3], np.transpose(f.c[3], (0,) + tuple(p + 1 for p in perm)))


def test_take_selects_value_axis():
    x, y = J.variables(np.zeros((4, 2)), 2)
    T = J.stack([J.stack([x, y]), J.stack([y * 2.0, x * 3.0])], axis=-2)  # (4, 2, 2)
    row = T.take(1, -2)  # (2y, 3x)
    assert np.allclose(row.c[1][:, 0], [0.0, 2.0]) and np.allclose(row.c[1][:, 1], [3.0, 0.0])
    col = T.take(0, -1)  # (x, 2y)
    assert np.allclose(col.c[1][:, 1], [0.0, 2.0])
    with pytest.raises(ValueError):
        T.take(0, 1)


def test_order_limits():
    with pytest.raises(ValueError):
        J.Jet([np.zeros(1)] * 5, 1)
    x = J.variables(np.zeros(1), 0)[0]
    with pytest.raises(ValueError):
        x.grad()
