"""Pure-numpy kernel implementations (fallback backend)."""

import numpy as np

_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu_forward(x: np.ndarray) -> np.ndarray:
    """GELU, tanh approximation."""
    u = _GELU_C * (x + _GELU_A * x * x * x)
    return (0.5 * x * (1.0 + np.tanh(u))).astype(x.dtype)


def gelu_backward(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    u = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)).astype(x.dtype)


def adamw_update(param, grad, m, v, step, lr, beta1, beta2, eps, weight_decay):
    """Decoupled-weight-decay Adam update, in place on param/m/v."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    mhat = m / bc1
    vhat = v / bc2
    param -= lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * param)
