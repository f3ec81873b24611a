"""Backend selection for the likelihood kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``NGVI_PURE_PYTHON=1`` is set, the NumPy versions
are used.  ``BACKEND`` names the active one.

Only the gradient/Hessian reductions are taken from the extension.  The
log-likelihoods stay on NumPy under both backends: their cost is one
matrix product plus elementwise ``exp``/``log1p``, where NumPy's
vectorised transcendental functions beat a scalar loop
(``benchmarks/bench_kernels.py`` times both).
"""

import os

from . import _kernels_py


def _load_compiled():
    if os.environ.get("NGVI_PURE_PYTHON", "") == "1":
        return None
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"
_active = _compiled if _compiled is not None else _kernels_py

logistic_loglik = _kernels_py.logistic_loglik
logistic_grad_hess_sum = _active.logistic_grad_hess_sum
student_loglik = _kernels_py.student_loglik
student_grad_hess_sum = _active.student_grad_hess_sum


def backends():
    """Mapping of available backend names to kernel modules."""
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
