"""Kernel backend parity and selection."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

import dcm._kernels_py as pyk
from dcm._backend import kernel_backend, kernels

try:
    ck = importlib.import_module("dcm._kernels")
    HAS_COMPILED = True
except ImportError:
    ck = None
    HAS_COMPILED = False

needs_compiled = pytest.mark.skipif(not HAS_COMPILED, reason="compiled backend not built")

RNG = np.random.default_rng(7)
X = RNG.standard_normal((17, 5))
W = RNG.standard_normal((9, 5))
B = RNG.standard_normal(9)
UP = RNG.standard_normal((17, 9))
LOGITS = RNG.standard_normal((17, 4))
TARGETS = np.zeros((17, 4))
TARGETS[np.arange(17), RNG.integers(0, 4, 17)] = 1.0


def test_python_backend_name():
    assert pyk.BACKEND_NAME == "python"


def test_affine_forward_matches_numpy():
    np.testing.assert_allclose(pyk.affine_forward(X, W, B), X @ W.T + B, rtol=0, atol=1e-15)


def test_act_forward_relu_tanh():
    a = pyk.act_forward(X, pyk.ACT_RELU)
    np.testing.assert_array_equal(a, np.maximum(X, 0.0))
    t = pyk.act_forward(X, pyk.ACT_TANH)
    np.testing.assert_allclose(t, np.tanh(X), rtol=0, atol=1e-15)


def test_act_backward_masks():
    out = pyk.act_forward(X, pyk.ACT_RELU)
    g = pyk.act_backward(np.ones_like(X), out, pyk.ACT_RELU)
    np.testing.assert_array_equal(g, (out > 0).astype(float))
    tout = pyk.act_forward(X, pyk.ACT_TANH)
    gt = pyk.act_backward(np.ones_like(X), tout, pyk.ACT_TANH)
    np.testing.assert_allclose(gt, 1.0 - tout**2, rtol=0, atol=1e-15)


def test_softmax_rows_normalized():
    s = pyk.softmax(LOGITS)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
    assert (s > 0).all()


def test_softmax_xent_loss_and_grad():
    loss, dlogits = pyk.softmax_xent(LOGITS, TARGETS)
    s = pyk.softmax(LOGITS)
    expected = -np.mean(np.log(np.maximum((s * TARGETS).sum(axis=1), 1e-12)))
    assert loss == pytest.approx(expected, abs=1e-12)
    np.testing.assert_allclose(dlogits, (s - TARGETS) / 17, atol=1e-15)


@needs_compiled
def test_compiled_backend_name():
    assert ck.BACKEND_NAME == "compiled"


@needs_compiled
@pytest.mark.parametrize(
    "call",
    [
        lambda k: k.affine_forward(X, W, B),
        lambda k: k.act_forward(X, 0),
        lambda k: k.act_forward(X, 1),
        lambda k: k.softmax(LOGITS),
    ],
)
def test_parity_single_output(call):
    np.testing.assert_allclose(call(ck), call(pyk), rtol=0, atol=1e-14)


@needs_compiled
def test_parity_softmax_xent():
    loss_c, grad_c = ck.softmax_xent(LOGITS, TARGETS)
    loss_p, grad_p = pyk.softmax_xent(LOGITS, TARGETS)
    assert loss_c == pytest.approx(loss_p, abs=1e-14)
    np.testing.assert_allclose(grad_c, grad_p, atol=1e-14)


@needs_compiled
def test_parity_affine_backward():
    for c, p in zip(ck.affine_backward(UP, X, W), pyk.affine_backward(UP, X, W)):
        np.testing.assert_allclose(c, p, atol=1e-13)


@needs_compiled
def test_parity_act_backward():
    out = pyk.act_forward(X, pyk.ACT_RELU)
    up = np.ascontiguousarray(UP[:, :5])
    np.testing.assert_allclose(
        ck.act_backward(up, out, 0), pyk.act_backward(up, out, 0), atol=1e-15
    )


def test_active_backend_is_known():
    assert kernel_backend() in ("python", "compiled")
    assert kernels.BACKEND_NAME == kernel_backend()


def test_env_override_selects_python():
    code = "from dcm._backend import kernel_backend; print(kernel_backend())"
    env = dict(os.environ, DCM_KERNEL_BACKEND="python")
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True
    )
    assert out.stdout.strip() == "python"


def test_env_override_bad_value_fails():
    code = "import dcm._backend"
    env = dict(os.environ, DCM_KERNEL_BACKEND="fortran")
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
    assert out.returncode != 0
