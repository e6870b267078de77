"""Pure-numpy implementations of the hot training kernels.

Same call signatures as the compiled module dcm._kernels; one of the two is
selected at import time by dcm._backend. All arrays are float64, C-order.
"""

import numpy as np

BACKEND_NAME = "python"

LOG_CLAMP = 1e-12

ACT_RELU = 0
ACT_TANH = 1


def affine_forward(x, w, b):
    """x @ w.T + b for x (n,d), w (m,d), b (m,)."""
    return x @ w.T + b


def act_forward(z, act):
    if act == ACT_RELU:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def act_backward(dz, a, act):
    """Gradient through the activation given its output a."""
    if act == ACT_RELU:
        return dz * (a > 0.0)
    return dz * (1.0 - a * a)


def affine_backward(dz, x, w):
    """Gradients of an affine layer: returns (dw, db, dx)."""
    dw = dz.T @ x
    db = dz.sum(axis=0)
    dx = dz @ w
    return dw, db, dx


def softmax(z):
    """Row-wise stable softmax of a 2-D logit array."""
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(z, targets):
    """Mean cross-entropy of softmax(z) against per-row target distributions.

    Returns (loss, dlogits) with dlogits = (softmax - target) / n, so that
    accumulated layer gradients are batch means.
    """
    n = z.shape[0]
    s = softmax(z)
    p = np.maximum(s, LOG_CLAMP)
    loss = float(-(targets * np.log(p)).sum() / n)
    dlogits = (s - targets) / n
    return loss, dlogits
