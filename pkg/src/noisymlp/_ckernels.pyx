# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused elementwise kernels for the hot training loop.

The arithmetic here must stay in lockstep with ``noisymlp._kernels_py``,
which is both the import-time fallback and the reference implementation
for the backend parity tests.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh

cnp.import_array()

RELU = 0
SIGMOID = 1
TANH = 2
LINEAR = 3


cdef inline double _sigmoid(double x) noexcept nogil:
    # Branch keeps exp() off the overflowing side for very negative inputs.
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef void _act_forward(int kind, const double* a, double* h, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double x
    if kind == 0:
        for i in range(n):
            x = a[i]
            h[i] = x if x > 0.0 else 0.0
    elif kind == 1:
        for i in range(n):
            h[i] = _sigmoid(a[i])
    elif kind == 2:
        for i in range(n):
            h[i] = tanh(a[i])
    else:
        for i in range(n):
            h[i] = a[i]


cdef void _act_backward(int kind, const double* a, const double* h,
                        const double* g, double* out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    if kind == 0:
        for i in range(n):
            out[i] = g[i] if a[i] > 0.0 else 0.0
    elif kind == 1:
        for i in range(n):
            out[i] = g[i] * h[i] * (1.0 - h[i])
    elif kind == 2:
        for i in range(n):
            out[i] = g[i] * (1.0 - h[i] * h[i])
    else:
        for i in range(n):
            out[i] = g[i]


cdef _as_c_double(arr):
    a = np.asarray(arr, dtype=np.float64)
    if not a.flags.c_contiguous:
        a = np.ascontiguousarray(a)
    return a


def act_forward(int kind, alpha):
    """Apply the activation with the given kind code elementwise."""
    if kind < 0 or kind > 3:
        raise ValueError(f"unknown activation code {kind}")
    a = _as_c_double(alpha)
    out = np.empty_like(a)
    cdef double[::1] av = a.reshape(-1)
    cdef double[::1] ov = out.reshape(-1)
    cdef Py_ssize_t n = av.shape[0]
    if n > 0:
        _act_forward(kind, &av[0], &ov[0], n)
    return out


def act_backward(int kind, alpha, activ, grad):
    """Chain an upstream gradient through the activation: grad * phi'(alpha).

    ``activ`` is phi(alpha) from the forward pass; the sigmoid and tanh
    derivatives are computed from it instead of re-evaluating exp.
    """
    if kind < 0 or kind > 3:
        raise ValueError(f"unknown activation code {kind}")
    a = _as_c_double(alpha)
    h = _as_c_double(activ)
    g = _as_c_double(grad)
    if a.shape != h.shape or a.shape != g.shape:
        raise ValueError("alpha, activation and gradient shapes differ")
    out = np.empty_like(a)
    cdef double[::1] av = a.reshape(-1)
    cdef double[::1] hv = h.reshape(-1)
    cdef double[::1] gv = g.reshape(-1)
    cdef double[::1] ov = out.reshape(-1)
    cdef Py_ssize_t n = av.shape[0]
    if n > 0:
        _act_backward(kind, &av[0], &hv[0], &gv[0], &ov[0], n)
    return out


def zero_masked(values, mask):
    """Return a copy of ``values`` with masked positions forced to 0.0."""
    x = _as_c_double(values)
    m = np.asarray(mask)
    if m.dtype == np.bool_:
        m = m.view(np.uint8)
    m = np.ascontiguousarray(m, dtype=np.uint8)
    if m.shape != x.shape:
        raise ValueError("mask shape does not match values")
    out = np.empty_like(x)
    cdef double[::1] xv = x.reshape(-1)
    cdef unsigned char[::1] mv = m.reshape(-1)
    cdef double[::1] ov = out.reshape(-1)
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = 0.0 if mv[i] else xv[i]
    return out


def adadelta_update(param, grad, acc_grad_sq, acc_update_sq, double rho, double eps):
    """One fused in-place accumulator-and-parameter update.

    Update order per element: decay the squared-gradient accumulator,
    form the step from the previous squared-update accumulator, decay
    that accumulator with the new step, then apply the step.
    """
    g = np.ascontiguousarray(grad, dtype=np.float64)
    for arr, name in ((param, "param"), (acc_grad_sq, "acc_grad_sq"),
                      (acc_update_sq, "acc_update_sq")):
        if arr.dtype != np.float64 or not arr.flags.c_contiguous:
            raise ValueError(f"{name} must be a C-contiguous float64 array")
    if g.shape != param.shape or acc_grad_sq.shape != param.shape \
            or acc_update_sq.shape != param.shape:
        raise ValueError("parameter, gradient and accumulator shapes differ")
    cdef double[::1] pv = param.reshape(-1)
    cdef double[::1] gv = g.reshape(-1)
    cdef double[::1] agv = acc_grad_sq.reshape(-1)
    cdef double[::1] auv = acc_update_sq.reshape(-1)
    cdef Py_ssize_t i, n = pv.shape[0]
    cdef double gi, a, d
    with nogil:
        for i in range(n):
            gi = gv[i]
            a = rho * agv[i] + (1.0 - rho) * gi * gi
            d = -sqrt(auv[i] + eps) / sqrt(a + eps) * gi
            agv[i] = a
            auv[i] = rho * auv[i] + (1.0 - rho) * d * d
            pv[i] += d
