"""Small dense numeric kernel: parameters, initializers, activations, loss, Adam.

Everything is float64 numpy. Backward passes elsewhere in the package are
written by hand and verified with :func:`finite_difference_check`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NumericError(RuntimeError):
    """A loss or parameter became non-finite."""


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(default=None)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def xavier_init(rows: int, cols: int, seed) -> np.ndarray:
    """Glorot uniform on ``[-sqrt(6 / (rows + cols)), +sqrt(6 / (rows + cols))]``."""
    if rows < 1 or cols < 1:
        raise ValueError(f"xavier_init needs positive dimensions, got ({rows}, {cols})")
    bound = np.sqrt(6.0 / (rows + cols))
    return _rng(seed).uniform(-bound, bound, size=(rows, cols))


def softmax_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    z = m - m.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(m: np.ndarray) -> np.ndarray:
    z = m - m.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def leaky_relu(x, slope: float = 0.2):
    return np.where(x >= 0, x, slope * x)


def leaky_relu_grad(x, slope: float = 0.2):
    return np.where(x >= 0, 1.0, slope)


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def cross_entropy(logits: np.ndarray, labels: np.ndarray, mask: np.ndarray):
    """Mean negative log-likelihood over masked rows.

    Returns ``(loss, dlogits)``; rows outside the mask get zero gradient.
    """
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("cross_entropy needs a non-empty mask")
    rows = np.flatnonzero(mask)
    logp = log_softmax_rows(logits[rows])
    picked = logp[np.arange(count), labels[rows]]
    loss = -picked.sum() / count
    grad = np.zeros_like(logits)
    g = np.exp(logp)
    g[np.arange(count), labels[rows]] -= 1.0
    grad[rows] = g / count
    return float(loss), grad


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state: AdamState, lr: float, weight_decay: float = 0.0) -> None:
    """One bias-corrected Adam update, in place.

    ``weight_decay`` adds ``weight_decay * value`` to the gradient first
    (L2 penalty, not decoupled).
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p in params:
        g = p.grad if weight_decay == 0.0 else p.grad + weight_decay * p.value
        m = state.m.setdefault(p.name, np.zeros_like(p.value))
        v = state.v.setdefault(p.name, np.zeros_like(p.value))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps 0/0 out."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradient_errors(loss_fn, params, probes: int = 50, eps: float = 1e-5, seed=0) -> dict:
    """Per-parameter max relative error of stored grads vs central differences.

    ``loss_fn()`` must evaluate the loss at the current parameter values and
    leave ``grad`` untouched; ``params[k].grad`` must already hold the
    analytic gradient. ``probes`` coordinates are drawn per parameter
    (all of them when the parameter is smaller).
    """
    rng = _rng(seed)
    out = {}
    for p in params:
        flat = p.value.reshape(-1)
        size = flat.size
        idx = np.arange(size) if size <= probes else rng.choice(size, probes, replace=False)
        worst = 0.0
        for k in idx:
            orig = flat[k]
            flat[k] = orig + eps
            up = loss_fn()
            flat[k] = orig - eps
            down = loss_fn()
            flat[k] = orig
            numeric = (up - down) / (2 * eps)
            worst = max(worst, relative_error(p.grad.reshape(-1)[k], numeric))
        out[p.name] = worst
    return out


def finite_difference_check(loss_fn, params, probes: int = 50, eps: float = 1e-5, seed=0) -> float:
    """Max relative error over all probed coordinates of all ``params``."""
    errs = gradient_errors(loss_fn, params, probes=probes, eps=eps, seed=seed)
    return max(errs.values()) if errs else 0.0
