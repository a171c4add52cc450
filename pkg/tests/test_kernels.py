"""The compiled kernels and their pure-Python twin must agree bit for bit."""
import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from sclab import backend
from sclab.geometry.bvh import MeshBVH
from sclab.geometry.kdtree import KDTree
from sclab.geometry.primitives import icosphere, l_shape

needs_compiled = pytest.mark.skipif("compiled" not in backend.available(), reason="extension not built")


def test_python_backend_always_available():
    assert "python" in backend.available()
    assert backend.get("python").__name__ == "sclab._kernels_py"
    with pytest.raises(ValueError):
        backend.get("fortran")


def test_env_var_forces_fallback():
    code = "from sclab import backend; print(backend.NAME)"
    env = dict(os.environ, SCLAB_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
@pytest.mark.parametrize("leaf", [1, 4, 16])
def test_kd_build_parity(leaf):
    rng = np.random.default_rng(leaf)
    pts = rng.normal(size=(700, 3))
    pts[::7] = pts[0]  # duplicates exercise the stable ordering
    a = backend.get("compiled").kd_build(pts, leaf)
    b = backend.get("python").kd_build(pts, leaf)
    for x, y in zip(a, b):
        assert np.array_equal(np.asarray(x), np.asarray(y))


@needs_compiled
def test_kd_query_parity():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(400, 3))
    q = rng.normal(size=(150, 3))
    tc = KDTree(pts, backend_name="compiled")
    tp = KDTree(pts, backend_name="python")
    for name in ("compiled", "python"):
        i, d = tc.query(q, backend_name=name)
        j, e = tp.query(q, backend_name=name)
        assert np.array_equal(i, j) and np.array_equal(d, e)
    i, d = tc.query_knn(q, 6, backend_name="compiled")
    j, e = tc.query_knn(q, 6, backend_name="python")
    assert np.array_equal(i, j) and np.array_equal(d, e)


@needs_compiled
@pytest.mark.parametrize("mesh", [icosphere(2), l_shape(0.5, 0.4)], ids=["sphere", "lshape"])
def test_bvh_parity(mesh):
    bvh = MeshBVH(mesh)
    rng = np.random.default_rng(3)
    o = rng.uniform(-1.5, 1.5, (300, 3))
    d = rng.normal(size=(300, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    for x, y in zip(bvh.raycast(o, d, backend_name="compiled"), bvh.raycast(o, d, backend_name="python")):
        assert np.array_equal(x, y)
    for x, y in zip(bvh.parity(o, d, backend_name="compiled"), bvh.parity(o, d, backend_name="python")):
        assert np.array_equal(x, y)
    for x, y in zip(bvh.closest(o, backend_name="compiled"), bvh.closest(o, backend_name="python")):
        assert np.array_equal(x, y)
    assert np.array_equal(bvh.inside(o, backend_name="compiled"), bvh.inside(o, backend_name="python"))


def test_fallback_module_imports_without_extension():
    mod = importlib.import_module("sclab._kernels_py")
    assert callable(mod.kd_nearest) and callable(mod.bvh_closest) and callable(mod.kd_build)
