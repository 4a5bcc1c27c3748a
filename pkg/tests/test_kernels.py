"""Both kernel backends against brute-force loops, and against each other."""

import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import needs_cython
from mspf import kernels
from mspf.grid import Grid


def brute_select(weights, positions):
    cum = np.cumsum(weights)
    last = next(i for i, c in enumerate(cum) if c >= cum[-1])
    out = []
    for p in positions:
        i = 0
        while i < last and not cum[i] > p:
            i += 1
        out.append(i)
    return np.array(out)


def weights_cases():
    rng = np.random.default_rng(0)
    yield np.ones(7)
    yield np.array([0.0, 0.0, 1.0, 0.0])
    yield np.array([1.0, 0.0, 0.0])
    yield np.array([0.0, 0.0, 0.0, 2.0])
    yield rng.random(50) ** 4
    yield rng.standard_cauchy(200) ** 2


@pytest.mark.parametrize("w", list(weights_cases()))
@pytest.mark.parametrize("m", [1, 3, 64])
def test_systematic_matches_brute_force(backend, w, m):
    for u0 in (0.0, 0.3, np.nextafter(1.0, 0.0)):
        pos = (np.arange(m) + u0) / m * np.cumsum(w)[-1]
        got = backend.systematic_select(np.ascontiguousarray(w), m, u0)
        np.testing.assert_array_equal(got, brute_select(w, pos))
        assert np.all(np.diff(got) >= 0)
        assert np.all(w[got] > 0)


@pytest.mark.parametrize("w", list(weights_cases()))
def test_multinomial_matches_brute_force(backend, w):
    u = np.random.default_rng(1).random(40)
    got = backend.multinomial_select(np.ascontiguousarray(w), u)
    np.testing.assert_array_equal(got, brute_select(w, u * np.cumsum(w)[-1]))
    assert np.all(w[got] > 0)


def test_shift_gather(backend):
    rng = np.random.default_rng(2)
    hist = rng.random((4, 6))
    parent = rng.integers(0, 6, 6).astype(np.intp)
    front = rng.random(6)
    out = np.empty_like(hist)
    backend.shift_gather(hist, parent, front, out)
    np.testing.assert_array_equal(out[0], front)
    for a in range(1, 4):
        for j in range(6):
            assert out[a, j] == hist[a - 1, parent[j]]


def test_shift_gather_depth_one(backend):
    hist = np.zeros((1, 3))
    out = np.empty_like(hist)
    backend.shift_gather(hist, np.array([2, 1, 0], dtype=np.intp), np.array([1.0, 2.0, 3.0]), out)
    np.testing.assert_array_equal(out, [[1.0, 2.0, 3.0]])


def brute_ecdf_distance(xs, truth, points, dx):
    total = 0.0
    for i, p in enumerate(points):
        frac = sum(1 for x in xs if x <= p) / len(xs)
        total += (truth[i] - frac) ** 2
    return total * dx


def test_ecdf_distance(backend):
    g = Grid(-2.0, 81, 0.05)
    rng = np.random.default_rng(3)
    truth = np.linspace(0, 1, 81) ** 2
    for xs in (rng.normal(size=17), np.array([-5.0, 5.0]), np.array([g.points[10]] * 3),
               np.concatenate([rng.normal(size=5), [g.points[0], g.points[-1]]])):
        xs = np.sort(xs)
        got = backend.ecdf_sq_distance(xs, truth, g.points, g.dx)
        assert got == pytest.approx(brute_ecdf_distance(xs, truth, g.points, g.dx), rel=1e-13, abs=1e-16)


def test_ecdf_distance_rows(backend):
    g = Grid(-2.0, 41, 0.1)
    rng = np.random.default_rng(4)
    truth = np.sort(rng.random((5, 41)), axis=1)
    rows = np.sort(rng.normal(size=(3, 9)), axis=1)
    times = np.array([4, -1, 0], dtype=np.intp)
    got = backend.ecdf_sq_distance_rows(rows, truth, times, g.points, g.dx)
    assert got[1] == 0.0
    for r in (0, 2):
        assert got[r] == pytest.approx(brute_ecdf_distance(rows[r], truth[times[r]], g.points, g.dx), rel=1e-13)


@needs_cython
def test_backends_select_identically():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(1, 300))
        w = rng.random(n) ** rng.uniform(0.5, 8)
        m = int(rng.integers(1, 300))
        u0 = rng.random()
        np.testing.assert_array_equal(kernels.python.systematic_select(w, m, u0),
                                      kernels.cython.systematic_select(w, m, u0))
        u = rng.random(m)
        np.testing.assert_array_equal(kernels.python.multinomial_select(w, u),
                                      kernels.cython.multinomial_select(w, u))


@needs_cython
def test_backends_score_alike():
    g = Grid(-8.0, 6400, 16 / 6400)
    rng = np.random.default_rng(6)
    truth = np.sort(rng.random(6400))
    xs = np.sort(rng.standard_cauchy(1000))
    a = kernels.python.ecdf_sq_distance(xs, truth, g.points, g.dx)
    b = kernels.cython.ecdf_sq_distance(xs, truth, g.points, g.dx)
    assert a == pytest.approx(b, rel=1e-12)


def test_get_backend_names():
    assert kernels.get_backend("python") is kernels.python
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
    if kernels.cython is None:
        with pytest.raises(ImportError):
            kernels.get_backend("cython")
    else:
        assert kernels.get_backend("cython") is kernels.cython
        assert kernels.get_backend("auto") is kernels.cython


def test_env_var_forces_fallback():
    code = "from mspf import kernels; print(kernels.default.name)"
    env = dict(os.environ, MSPF_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
