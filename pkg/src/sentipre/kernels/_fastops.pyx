# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot elementwise loops (GELU, AdamW update).

Fused single-pass loops over flat buffers; avoids the numpy temporaries
the fallback backend allocates. float32 and float64 variants dispatched
on dtype.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, tanh, pow

cnp.import_array()

cdef double GELU_C = 0.7978845608028654
cdef double GELU_A = 0.044715

ctypedef fused real:
    float
    double


def gelu_forward(x):
    out = np.empty_like(x)
    if x.dtype == np.float32:
        _gelu_fwd[float](x.ravel(), out.ravel())
    else:
        _gelu_fwd[double](x.ravel(), out.ravel())
    return out


def gelu_backward(g, x):
    out = np.empty_like(x)
    g = np.array(np.broadcast_to(g, np.shape(x)), dtype=x.dtype)  # broadcast views are read-only
    if x.dtype == np.float32:
        _gelu_bwd[float](g.ravel(), x.ravel(), out.ravel())
    else:
        _gelu_bwd[double](g.ravel(), x.ravel(), out.ravel())
    return out


def adamw_update(param, grad, m, v,
                 long step, double lr, double beta1, double beta2, double eps,
                 double weight_decay):
    grad = np.ascontiguousarray(grad, dtype=param.dtype)
    if param.dtype == np.float32:
        _adamw[float](param.ravel(), grad.ravel(), m.ravel(), v.ravel(),
                      step, lr, beta1, beta2, eps, weight_decay)
    else:
        _adamw[double](param.ravel(), grad.ravel(), m.ravel(), v.ravel(),
                       step, lr, beta1, beta2, eps, weight_decay)


cdef void _gelu_fwd(real[::1] x, real[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double u, xi
    for i in range(n):
        xi = x[i]
        u = GELU_C * (xi + GELU_A * xi * xi * xi)
        out[i] = <real>(0.5 * xi * (1.0 + tanh(u)))


cdef void _gelu_bwd(real[::1] g, real[::1] x, real[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double u, t, du, xi
    for i in range(n):
        xi = x[i]
        u = GELU_C * (xi + GELU_A * xi * xi * xi)
        t = tanh(u)
        du = GELU_C * (1.0 + 3.0 * GELU_A * xi * xi)
        out[i] = <real>(g[i] * (0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du))


cdef void _adamw(real[::1] param, real[::1] grad, real[::1] m, real[::1] v,
                 long step, double lr, double beta1, double beta2, double eps,
                 double weight_decay):
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double bc1 = 1.0 - pow(beta1, step)
    cdef double bc2 = 1.0 - pow(beta2, step)
    cdef double gi, mi, vi
    for i in range(n):
        gi = grad[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
        m[i] = <real>mi
        v[i] = <real>vi
        param[i] = <real>(param[i] - lr * ((mi / bc1) / (sqrt(vi / bc2) + eps)
                                           + weight_decay * param[i]))
