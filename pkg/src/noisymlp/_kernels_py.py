"""Pure numpy kernels, the fallback backend and parity reference.

Expression grouping deliberately mirrors the compiled loops in
``_ckernels.pyx`` so that both backends round identically wherever the
underlying libm calls agree.
"""
import numpy as np

RELU = 0
SIGMOID = 1
TANH = 2
LINEAR = 3


def act_forward(kind, alpha):
    """Apply the activation with the given kind code elementwise."""
    a = np.asarray(alpha, dtype=np.float64)
    if kind == RELU:
        return np.where(a > 0.0, a, 0.0)
    if kind == SIGMOID:
        out = np.empty_like(a)
        pos = a >= 0.0
        out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
        e = np.exp(a[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    if kind == TANH:
        return np.tanh(a)
    if kind == LINEAR:
        return a.copy()
    raise ValueError(f"unknown activation code {kind}")


def act_backward(kind, alpha, activ, grad):
    """Chain an upstream gradient through the activation: grad * phi'(alpha)."""
    a = np.asarray(alpha, dtype=np.float64)
    h = np.asarray(activ, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    if a.shape != h.shape or a.shape != g.shape:
        raise ValueError("alpha, activation and gradient shapes differ")
    if kind == RELU:
        return np.where(a > 0.0, g, 0.0)
    if kind == SIGMOID:
        return g * h * (1.0 - h)
    if kind == TANH:
        return g * (1.0 - h * h)
    if kind == LINEAR:
        return g.copy()
    raise ValueError(f"unknown activation code {kind}")


def zero_masked(values, mask):
    """Return a copy of ``values`` with masked positions forced to 0.0."""
    x = np.asarray(values, dtype=np.float64)
    m = np.asarray(mask)
    if m.shape != x.shape:
        raise ValueError("mask shape does not match values")
    return np.where(m, 0.0, x)


def adadelta_update(param, grad, acc_grad_sq, acc_update_sq, rho, eps):
    """One fused in-place accumulator-and-parameter update."""
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != param.shape or acc_grad_sq.shape != param.shape \
            or acc_update_sq.shape != param.shape:
        raise ValueError("parameter, gradient and accumulator shapes differ")
    new_acc_g = rho * acc_grad_sq + (1.0 - rho) * g * g
    delta = -np.sqrt(acc_update_sq + eps) / np.sqrt(new_acc_g + eps) * g
    acc_grad_sq[...] = new_acc_g
    acc_update_sq[...] = rho * acc_update_sq + (1.0 - rho) * delta * delta
    param += delta
