"""Minimal differentiable-computation core for the fixed model graph.

Dense arrays (numpy) are the tensor type.  Each layer keeps its parameters in
``params`` and accumulates gradients into ``grads``; ``backward`` consumes the
cache of exactly one prior ``forward``.  Training may run at float32; gradient
checking requires float64.
"""

from __future__ import annotations

import json
import struct
from typing import Callable

import numpy as np

MAGIC = "SLUICEFLOW1"


def glorot_init(shape, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
    """Glorot (Xavier) uniform initialization on +-sqrt(6/(fan_in+fan_out)).

    For conv kernels of shape (width, c_in, c_out), fans are width*c_in and
    width*c_out; for matrices, the two axes.
    """
    if len(shape) == 2:
        fan_in, fan_out = shape
    elif len(shape) == 3:
        fan_in = shape[0] * shape[1]
        fan_out = shape[0] * shape[2]
    else:
        raise ValueError(f"cannot derive fans from shape {shape}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Base for layers with named parameters and one-shot backward caches."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grads(self):
        for name, p in self.params.items():
            self.grads[name] = np.zeros_like(p)

    def _accumulate(self, name: str, grad: np.ndarray):
        if name not in self.grads:
            self.grads[name] = np.zeros_like(self.params[name])
        self.grads[name] += grad


class Affine(Layer):
    """y = x W + b for x of shape (n, d_in)."""

    def __init__(self, W: np.ndarray, b: np.ndarray):
        super().__init__()
        if W.shape[1] != b.shape[0]:
            raise ValueError(f"bias shape {b.shape} does not match W {W.shape}")
        self.params = {"W": W, "b": b}
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.params["W"].shape[0]:
            raise ValueError(
                f"input dim {x.shape[-1]} != W rows {self.params['W'].shape[0]}"
            )
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, self._x = self._x, None
        self._accumulate("W", x.T @ grad_out)
        self._accumulate("b", grad_out.sum(axis=0))
        return grad_out @ self.params["W"].T


class Conv1D(Layer):
    """Valid cross-correlation along the length axis.

    Input (n, L, c_in), kernels (width, c_in, c_out), output
    (n, L - width + 1, c_out).
    """

    def __init__(self, kernels: np.ndarray, bias: np.ndarray):
        super().__init__()
        self.params = {"K": kernels, "b": bias}
        self._x = None

    @property
    def width(self) -> int:
        return self.params["K"].shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        width = self.width
        if x.shape[1] < width:
            raise ValueError(f"length {x.shape[1]} < kernel width {width}")
        self._x = x
        out_len = x.shape[1] - width + 1
        K = self.params["K"]
        y = np.zeros((x.shape[0], out_len, K.shape[2]), dtype=x.dtype)
        for j in range(width):
            y += x[:, j : j + out_len, :] @ K[j]
        return y + self.params["b"]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, self._x = self._x, None
        width = self.width
        out_len = grad_out.shape[1]
        K = self.params["K"]
        grad_K = np.zeros_like(K)
        grad_x = np.zeros_like(x)
        for j in range(width):
            x_slice = x[:, j : j + out_len, :]
            grad_K[j] = np.einsum("nlc,nlf->cf", x_slice, grad_out)
            grad_x[:, j : j + out_len, :] += grad_out @ K[j].T
        self._accumulate("K", grad_K)
        self._accumulate("b", grad_out.sum(axis=(0, 1)))
        return grad_x


class MaxPoolOverLength(Layer):
    """Per-channel maximum over the length axis: (n, L, c) -> (n, c).

    Ties route the gradient to the first argmax position.
    """

    def __init__(self):
        super().__init__()
        self._argmax = None
        self._shape = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._argmax = x.argmax(axis=1)  # first maximum per (n, c)
        self._shape = x.shape
        return np.take_along_axis(x, self._argmax[:, None, :], axis=1)[:, 0, :]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        grad_x = np.zeros(self._shape, dtype=grad_out.dtype)
        np.put_along_axis(grad_x, self._argmax[:, None, :], grad_out[:, None, :], axis=1)
        self._argmax = self._shape = None
        return grad_x


class CharEmbedding(Layer):
    """Shared per-position embedding of one-hot rows: (n, L, A) @ (A, e).

    All-zero (padding) rows map to zero vectors.
    """

    def __init__(self, E: np.ndarray):
        super().__init__()
        self.params = {"E": E}
        self._onehot = None

    def forward(self, onehot: np.ndarray) -> np.ndarray:
        self._onehot = onehot
        return onehot @ self.params["E"]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        onehot, self._onehot = self._onehot, None
        self._accumulate("E", np.einsum("nla,nle->ae", onehot, grad_out))
        return grad_out @ self.params["E"].T


class ReLU(Layer):
    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        mask, self._mask = self._mask, None
        return np.where(mask, grad_out, 0.0)


def softmax_xent(
    logits: np.ndarray,
    labels: np.ndarray,
    sample_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Weighted-mean cross-entropy with log-sum-exp stabilization.

    Returns (loss, probs, grad_logits).  ``sample_weights`` default to 1; the
    loss is sum(w_i * xent_i) / n, and grad_logits is its exact gradient.
    Rows with weight 0 contribute nothing (used for unlabeled samples).
    """
    n = logits.shape[0]
    if sample_weights is None:
        sample_weights = np.ones(n, dtype=logits.dtype)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
    picked = log_probs[np.arange(n), labels]
    loss = float(-(sample_weights * picked).sum() / n)
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad *= sample_weights[:, None] / n
    return loss, probs, grad


class AdamState:
    """Adam with bias correction over a named parameter set."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGDState:
    """Plain SGD fallback with the same interface as AdamState."""

    def __init__(self, lr=1e-2):
        self.lr = lr
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        for name, p in params.items():
            p -= self.lr * grads[name]


def grad_check(
    loss_fn: Callable[[], float],
    grad_fn: Callable[[], dict[str, np.ndarray]],
    params: dict[str, np.ndarray],
    h: float = 1e-5,
    max_coords_per_tensor: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic gradients and central differences.

    ``loss_fn`` re-evaluates the loss from the current parameter values;
    ``grad_fn`` returns analytic gradients at the current values.  Checks up to
    ``max_coords_per_tensor`` random coordinates per tensor.  Parameters must
    be float64.
    """
    rng = rng or np.random.default_rng(0)
    analytic = grad_fn()
    worst = 0.0
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ValueError(f"grad_check requires float64, {name} is {p.dtype}")
        flat = p.reshape(-1)
        n_coords = min(max_coords_per_tensor, flat.size)
        coords = rng.choice(flat.size, size=n_coords, replace=False)
        a_flat = analytic[name].reshape(-1)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = loss_fn()
            flat[c] = orig - h
            down = loss_fn()
            flat[c] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"non-finite loss while checking {name}")
            numeric = (up - down) / (2 * h)
            denom = max(1e-8, abs(a_flat[c]) + abs(numeric))
            worst = max(worst, abs(a_flat[c] - numeric) / denom)
    return worst


def save_params(path, params: dict[str, np.ndarray], header: dict) -> None:
    """Write parameters as MAGIC + JSON header + little-endian float32 blobs."""
    manifest = [
        {"name": name, "shape": list(p.shape)} for name, p in params.items()
    ]
    head = dict(header)
    head["manifest"] = manifest
    head_bytes = json.dumps(head, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC.encode("ascii"))
        fh.write(struct.pack("<I", len(head_bytes)))
        fh.write(head_bytes)
        for name, p in params.items():
            fh.write(p.astype("<f4").tobytes())


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a parameter file written by save_params; returns (params, header)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC)).decode("ascii", errors="replace")
        if magic != MAGIC:
            raise ValueError(f"not a {MAGIC} parameter file: magic {magic!r}")
        (head_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(head_len).decode("utf-8"))
        params = {}
        for entry in header["manifest"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 4), dtype="<f4")
            params[entry["name"]] = data.reshape(shape).astype(np.float64)
    return params, header
