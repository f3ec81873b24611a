"""NumPy reference implementation of the likelihood kernels.

Each ``*_grad_hess_sum`` returns the gradient and Hessian of the
log-likelihood summed over the rows of ``x`` (prior terms excluded):
exactly the two reductions the Bonnet-Price estimator needs.
"""

import numpy as np


def _softplus(a):
    return np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logistic_loglik(x, z, y):
    a = x @ z.T
    return a @ y - _softplus(a).sum(axis=1)


def logistic_grad_hess_sum(x, z, y):
    s = _sigmoid(x @ z.T)
    grad = (y * s.shape[0] - s.sum(axis=0)) @ z
    w = (s * (1.0 - s)).sum(axis=0)
    hess = -(z.T * w) @ z
    return grad, hess


def student_loglik(x, z, y, dof, scale2):
    r = y - x @ z.T
    return -0.5 * (dof + 1.0) * np.log1p(r * r / (dof * scale2)).sum(axis=1)


def student_grad_hess_sum(x, z, y, dof, scale2):
    r = y - x @ z.T
    c = dof * scale2
    denom = c + r * r
    coef = ((dof + 1.0) * r / denom).sum(axis=0)
    w = ((dof + 1.0) * (c - r * r) / (denom * denom)).sum(axis=0)
    return coef @ z, -(z.T * w) @ z
