import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ngvi import _kernels_py, kernels

compiled = kernels.backends().get("cython")
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


def _inputs(seed, n, m, d, scale):
    rng = np.random.default_rng(seed)
    x = scale * rng.standard_normal((n, d))
    z = rng.standard_normal((m, d))
    return rng, x, z


@needs_compiled
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 30), m=st.integers(1, 40), d=st.integers(1, 6),
       scale=st.sampled_from([0.1, 1.0, 30.0]))
def test_logistic_backends_agree(seed, n, m, d, scale):
    rng, x, z = _inputs(seed, n, m, d, scale)
    y = (rng.uniform(size=m) < 0.5).astype(float)
    np.testing.assert_allclose(compiled.logistic_loglik(x, z, y), _kernels_py.logistic_loglik(x, z, y), rtol=1e-10, atol=1e-9)
    g1, h1 = compiled.logistic_grad_hess_sum(x, z, y)
    g2, h2 = _kernels_py.logistic_grad_hess_sum(x, z, y)
    np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-9)
    np.testing.assert_allclose(h1, h2, rtol=1e-10, atol=1e-9)


@needs_compiled
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 30), m=st.integers(1, 40), d=st.integers(1, 6),
       dof=st.floats(0.5, 30.0), scale2=st.floats(0.1, 10.0))
def test_student_backends_agree(seed, n, m, d, dof, scale2):
    rng, x, z = _inputs(seed, n, m, d, 1.0)
    y = 2.0 * rng.standard_normal(m)
    np.testing.assert_allclose(compiled.student_loglik(x, z, y, dof, scale2), _kernels_py.student_loglik(x, z, y, dof, scale2),
                               rtol=1e-10, atol=1e-9)
    g1, h1 = compiled.student_grad_hess_sum(x, z, y, dof, scale2)
    g2, h2 = _kernels_py.student_grad_hess_sum(x, z, y, dof, scale2)
    np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-9)
    np.testing.assert_allclose(h1, h2, rtol=1e-10, atol=1e-9)


def test_hessian_is_symmetric_for_both_backends():
    _, x, z = _inputs(0, 7, 11, 4, 1.0)
    y = np.linspace(-1, 1, 11)
    for mod in kernels.backends().values():
        _, h = mod.student_grad_hess_sum(x, z, y, 3.0, 1.0)
        np.testing.assert_allclose(h, h.T, rtol=1e-14, atol=1e-12)


def test_logistic_large_arguments_are_stable():
    x = np.array([[1000.0], [-1000.0]])
    z = np.array([[1.0]])
    y = np.array([1.0])
    for mod in kernels.backends().values():
        ll = mod.logistic_loglik(x, z, y)
        np.testing.assert_allclose(ll, [0.0, -1000.0])
        g, h = mod.logistic_grad_hess_sum(x, z, y)
        assert np.all(np.isfinite(g)) and np.all(np.isfinite(h))


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")
    assert (kernels.BACKEND == "cython") == (compiled is not None)


def test_pure_python_env_switch():
    env = dict(os.environ, NGVI_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import ngvi.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
