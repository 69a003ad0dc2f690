"""Small dense-network substrate: forward/backward passes, optimizers,
finite-difference gradient checking and a plain-text parameter format.

Everything is float64 numpy. Weights are stored as ``(fan_in, fan_out)`` so a
layer computes ``act(x @ W + b)`` on row batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, TrainingError

ACTIVATIONS = ("identity", "tanh", "relu", "softplus")


def _activate(kind: str, a: np.ndarray) -> np.ndarray:
    if kind == "identity":
        return a
    if kind == "tanh":
        return np.tanh(a)
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "softplus":
        return np.logaddexp(0.0, a)
    raise ContractError(f"unknown activation {kind!r}")


def _activation_grad(kind: str, a: np.ndarray, h: np.ndarray) -> np.ndarray:
    # a is the pre-activation, h = act(a)
    if kind == "identity":
        return np.ones_like(a)
    if kind == "tanh":
        return 1.0 - h * h
    if kind == "relu":
        return (a > 0.0).astype(a.dtype)
    if kind == "softplus":
        return 0.5 * (1.0 + np.tanh(0.5 * a))  # logistic sigmoid, overflow-safe
    raise ContractError(f"unknown activation {kind!r}")


@dataclass
class DenseNetwork:
    """Fully connected feed-forward network.

    ``weights[i]`` has shape ``(sizes[i], sizes[i+1])`` and ``activations[i]``
    is applied after layer ``i``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ContractError("weights, biases and activations must have equal length")
        if not self.weights:
            raise ContractError("network needs at least one layer")
        for i, (W, b, act) in enumerate(zip(self.weights, self.biases, self.activations)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ContractError(f"layer {i}: bias shape {b.shape} does not match weight {W.shape}")
            if i > 0 and W.shape[0] != self.weights[i - 1].shape[1]:
                raise ContractError(
                    f"layer {i}: input size {W.shape[0]} != previous output {self.weights[i - 1].shape[1]}"
                )
            if act not in ACTIVATIONS:
                raise ContractError(f"layer {i}: unknown activation {act!r}")

    @classmethod
    def create(cls, sizes, rng, hidden="tanh", output="identity") -> "DenseNetwork":
        """Glorot-uniform initialised network with the given layer sizes."""
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ContractError(f"layer sizes must be >= 2 positive integers, got {sizes}")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        acts = [hidden] * (len(sizes) - 2) + [output]
        return cls(weights, biases, acts)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def n_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in the canonical order ``[W0, b0, W1, b1, ...]``."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ContractError(f"expected batch of width {self.n_in}, got shape {x.shape}")
        return x

    def forward(self, x) -> np.ndarray:
        h = self._check_input(x)
        for W, b, act in zip(self.weights, self.biases, self.activations):
            h = _activate(act, h @ W + b)
        return h

    def forward_cache(self, x):
        """Forward pass that also returns the per-layer values backward needs."""
        h = self._check_input(x)
        cache = [h]
        for W, b, act in zip(self.weights, self.biases, self.activations):
            a = h @ W + b
            h = _activate(act, a)
            cache.append((a, h))
        return h, cache

    def backward(self, x, upstream, cache=None):
        """Backpropagate ``upstream = dLoss/dOutput``.

        Returns ``(grads, dx)`` where ``grads`` follows :meth:`parameters`
        ordering and ``dx`` is the gradient with respect to the input batch.
        """
        if cache is None:
            _, cache = self.forward_cache(x)
        out = cache[-1][1]
        g = np.asarray(upstream, dtype=np.float64)
        if g.ndim == 1 and out.shape[0] == 1:
            g = g[None, :]
        if g.shape != out.shape:
            raise ContractError(f"upstream gradient shape {g.shape} != output shape {out.shape}")
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))  # type: ignore[list-item]
        for i in range(len(self.weights) - 1, -1, -1):
            a, h = cache[i + 1]
            h_prev = cache[0] if i == 0 else cache[i][1]
            delta = g * _activation_grad(self.activations[i], a, h)
            grads[2 * i] = h_prev.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            g = delta @ self.weights[i].T
        return grads, g


def forward(net: DenseNetwork, batch) -> np.ndarray:
    return net.forward(batch)


def backward(net: DenseNetwork, batch, upstream) -> list[np.ndarray]:
    return net.backward(batch, upstream)[0]


@dataclass
class OptimizerState:
    """Plain gradient descent (``kind="sgd"``) or Adam (``kind="adam"``)."""

    lr: float = 1e-3
    kind: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ContractError("learning rate must be positive")
        if self.kind not in ("sgd", "adam"):
            raise ContractError(f"unknown optimizer kind {self.kind!r}")


def step(params, grads, opt: OptimizerState):
    """Apply one in-place update to ``params`` (a network or a list of arrays).

    Returns ``(params, opt)`` for convenience.
    """
    arrays = params.parameters() if hasattr(params, "parameters") else list(params)
    if len(arrays) != len(grads):
        raise ContractError(f"{len(grads)} gradients for {len(arrays)} parameters")
    for i, (p, g) in enumerate(zip(arrays, grads)):
        if p.shape != np.shape(g):
            raise ContractError(f"gradient {i} has shape {np.shape(g)}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in layer {i // 2}", layer=i // 2)

    opt.t += 1
    if opt.kind == "sgd":
        for p, g in zip(arrays, grads):
            p -= opt.lr * g
        return params, opt

    if not opt.m:
        opt.m = [np.zeros_like(p) for p in arrays]
        opt.v = [np.zeros_like(p) for p in arrays]
    b1, b2 = opt.beta1, opt.beta2
    corr1 = 1.0 - b1**opt.t
    corr2 = 1.0 - b2**opt.t
    for p, g, m, v in zip(arrays, grads, opt.m, opt.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= opt.lr * (m / corr1) / (np.sqrt(v / corr2) + opt.eps)
    return params, opt


def grad_check(model, loss_and_grads, batch, step_size=1e-5, floor=1e-5) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    ``loss_and_grads(model, batch)`` must return ``(loss, grads)`` with grads
    aligned to ``model.parameters()``. The relative error of each entry is
    ``|a - f| / max(|a|, |f|, floor)``; ``floor`` keeps entries whose true
    gradient is ~0 from reporting pure rounding noise.
    """
    _, analytic = loss_and_grads(model, batch)
    worst = 0.0
    for p, g in zip(model.parameters(), analytic):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step_size
            lp = loss_and_grads(model, batch)[0]
            flat[j] = orig - step_size
            lm = loss_and_grads(model, batch)[0]
            flat[j] = orig
            numeric = (lp - lm) / (2.0 * step_size)
            denom = max(abs(gflat[j]), abs(numeric), floor)
            worst = max(worst, abs(gflat[j] - numeric) / denom)
    return worst


def save_network(net: DenseNetwork, path) -> None:
    Path(path).write_text(format_network(net))


def format_network(net: DenseNetwork) -> str:
    lines = ["layers: " + " ".join(str(s) for s in net.sizes)]
    lines.append("activations: " + " ".join(net.activations))
    for p in net.parameters():
        lines.append(" ".join(repr(float(v)) for v in p.reshape(-1)))
    return "\n".join(lines) + "\n"


def parse_network(lines) -> DenseNetwork:
    """Inverse of :func:`format_network`; ``lines`` is an iterable of strings."""
    it = iter(lines)
    header = next(it).strip()
    if not header.startswith("layers:"):
        raise ContractError(f"expected 'layers:' header, got {header!r}")
    sizes = [int(s) for s in header.split(":", 1)[1].split()]
    act_line = next(it).strip()
    if not act_line.startswith("activations:"):
        raise ContractError(f"expected 'activations:' line, got {act_line!r}")
    acts = act_line.split(":", 1)[1].split()
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = np.array([float(v) for v in next(it).split()], dtype=np.float64)
        b = np.array([float(v) for v in next(it).split()], dtype=np.float64)
        if W.size != fan_in * fan_out or b.size != fan_out:
            raise ContractError("tensor length does not match layer sizes")
        weights.append(W.reshape(fan_in, fan_out))
        biases.append(b)
    return DenseNetwork(weights, biases, acts)


def load_network(path) -> DenseNetwork:
    return parse_network(Path(path).read_text().splitlines())
