"""Dense kernels with hand-written backward passes, plus Adam.

All kernels act on the last axis of float64 arrays, so the same code serves a
single matrix ``(rows, cols)`` and batched stacks ``(..., rows, cols)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LN_EPS = 1e-5


class NumericError(FloatingPointError):
    """A kernel produced a non-finite value."""


def check_finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")
    return x


# --------------------------------------------------------------------------
# softmax
# --------------------------------------------------------------------------


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    z = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_rows_backward(out: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Jacobian-vector product of :func:`softmax_rows` given its output."""
    inner = np.sum(grad_out * out, axis=-1, keepdims=True)
    return out * (grad_out - inner)


# --------------------------------------------------------------------------
# layer norm
# --------------------------------------------------------------------------


@dataclass
class LayerNormCache:
    xhat: np.ndarray
    inv_std: np.ndarray
    gain: np.ndarray


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = LN_EPS):
    """Per-row standardisation (population variance) followed by an affine map.

    Returns ``(y, cache)``.
    """
    mu = np.mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std
    return xhat * gain + bias, LayerNormCache(xhat, inv_std, gain)


def layer_norm_backward(grad_out: np.ndarray, cache: LayerNormCache):
    """Returns ``(dx, dgain, dbias)``; parameter grads are summed over leading axes."""
    n = grad_out.shape[-1]
    lead = tuple(range(grad_out.ndim - 1))
    dgain = np.sum(grad_out * cache.xhat, axis=lead)
    dbias = np.sum(grad_out, axis=lead)
    dxhat = grad_out * cache.gain
    dx = (cache.inv_std / n) * (
        n * dxhat
        - np.sum(dxhat, axis=-1, keepdims=True)
        - cache.xhat * np.sum(dxhat * cache.xhat, axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


# --------------------------------------------------------------------------
# dense / activations
# --------------------------------------------------------------------------


def dense(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return x @ weight + bias


def dense_backward(grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray):
    """Returns ``(dx, dweight, dbias)`` for ``y = x @ weight + bias``."""
    x2 = x.reshape(-1, x.shape[-1])
    g2 = grad_out.reshape(-1, grad_out.shape[-1])
    return grad_out @ weight.T, x2.T @ g2, g2.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad_out * (x > 0.0)


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability ``rate``, survivors scaled."""
    if rate <= 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


# --------------------------------------------------------------------------
# loss
# --------------------------------------------------------------------------


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray, sample_weights: np.ndarray | None = None):
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``.

    With ``sample_weights`` the mean is weight-averaged.  Returns
    ``(loss, dlogits)``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n, n_classes = logits.shape
    if n == 0:
        return 0.0, np.zeros_like(logits)
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise ValueError("label index out of range")
    logp = log_softmax(logits)
    nll = -logp[np.arange(n), labels]
    if sample_weights is None:
        w = np.full(n, 1.0 / n)
    else:
        sw = np.asarray(sample_weights, dtype=float)
        w = sw / sw.sum()
    loss = float(np.sum(w * nll))
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad * w[:, None]


# --------------------------------------------------------------------------
# parameters and Adam
# --------------------------------------------------------------------------


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decoupled: bool = True
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Param], state: AdamState) -> None:
    """One bias-corrected Adam update in place, then zero the gradients.

    Decoupled decay: ``value -= lr * (m_hat / (sqrt(v_hat) + eps)) + lr * wd * value``.
    Coupled (``decoupled=False``): ``wd * value`` is added to the gradient instead.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = p.grad
        if state.weight_decay and not state.decoupled:
            g = g + state.weight_decay * p.value
        if name not in state.m:
            state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        step = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay and state.decoupled:
            step = step + state.lr * state.weight_decay * p.value
        p.value -= step
        p.zero_grad()
