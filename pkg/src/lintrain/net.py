"""Feedforward softplus networks with 1/sqrt(width) post-activation scaling.

Layer l computes x^(l) = softplus_alpha(W^(l) x^(l-1) + b^(l)) / sqrt(m_l) for
l = 1..H and the output is f = W^(H+1) x^(H) + b^(H+1).  Inputs are stored as
columns: a batch has shape (m_x, n).
"""

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from lintrain._rng import rng_for


def softplus(x, alpha=10.0):
    """ln(1 + exp(alpha x)) / alpha, evaluated without overflow."""
    x = np.asarray(x, dtype=float)
    if np.isinf(alpha):
        return np.maximum(x, 0.0)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-alpha * np.abs(x))) / alpha


def softplus_grad(x, alpha=10.0):
    x = np.asarray(x, dtype=float)
    if np.isinf(alpha):
        return (x > 0).astype(float)
    return expit(alpha * x)


@dataclass(frozen=True)
class Params:
    """Weights W^(l) (m_l x m_{l-1}) and biases b^(l) (m_l,) for l = 1..H+1."""

    weights: tuple
    biases: tuple
    alpha: float = 10.0

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or len(self.weights) < 2:
            raise ValueError("need matching weights/biases for at least two layers")
        prev = self.weights[0].shape[1]
        for W, b in zip(self.weights, self.biases):
            if W.ndim != 2 or W.shape[1] != prev or b.shape != (W.shape[0],):
                raise ValueError("layer shapes do not chain")
            prev = W.shape[0]

    @property
    def widths(self):
        return (self.weights[0].shape[1],) + tuple(W.shape[0] for W in self.weights)

    @property
    def H(self):
        return len(self.weights) - 1

    @property
    def size(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    @property
    def output_layer(self):
        """Augmented output matrix [W^(H+1), b^(H+1)] of shape (m_y, m_H + 1)."""
        return np.hstack([self.weights[-1], self.biases[-1][:, None]])

    def with_output_layer(self, Wbar):
        Wbar = np.asarray(Wbar, dtype=float)
        if Wbar.shape != self.output_layer.shape:
            raise ValueError(f"expected shape {self.output_layer.shape}, got {Wbar.shape}")
        weights = self.weights[:-1] + (Wbar[:, :-1].copy(),)
        biases = self.biases[:-1] + (Wbar[:, -1].copy(),)
        return Params(weights, biases, self.alpha)

    def flatten(self):
        """theta = (vec(Wbar^(1)), ..., vec(Wbar^(H+1))), column-major vec."""
        return np.concatenate([
            np.hstack([W, b[:, None]]).ravel(order="F")
            for W, b in zip(self.weights, self.biases)
        ])

    @classmethod
    def unflatten(cls, theta, widths, alpha=10.0):
        theta = np.asarray(theta, dtype=float)
        weights, biases = [], []
        for (lo, hi), (m_in, m_out) in zip(layer_slices(widths), zip(widths[:-1], widths[1:])):
            Wbar = theta[lo:hi].reshape((m_out, m_in + 1), order="F")
            weights.append(Wbar[:, :-1].copy())
            biases.append(Wbar[:, -1].copy())
        if sum(hi - lo for lo, hi in layer_slices(widths)) != theta.size:
            raise ValueError("theta length does not match widths")
        return cls(tuple(weights), tuple(biases), alpha)

    def to_bytes(self):
        widths = self.widths
        out = [struct.pack(f"<{len(widths) + 1}I", self.H, *widths)]
        for W, b in zip(self.weights, self.biases):
            out.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
            out.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, blob, alpha=10.0):
        (H,) = struct.unpack_from("<I", blob, 0)
        widths = struct.unpack_from(f"<{H + 2}I", blob, 4)
        offset = 4 * (H + 3)
        weights, biases = [], []
        for m_in, m_out in zip(widths[:-1], widths[1:]):
            W = np.frombuffer(blob, dtype="<f8", count=m_in * m_out, offset=offset)
            offset += 8 * m_in * m_out
            b = np.frombuffer(blob, dtype="<f8", count=m_out, offset=offset)
            offset += 8 * m_out
            weights.append(W.reshape(m_out, m_in).astype(float))
            biases.append(b.astype(float))
        if offset != len(blob):
            raise ValueError(f"blob has {len(blob) - offset} trailing bytes")
        return cls(tuple(weights), tuple(biases), alpha)


def layer_slices(widths):
    """(start, stop) of each vec(Wbar^(l)) block inside theta."""
    slices, start = [], 0
    for m_in, m_out in zip(widths[:-1], widths[1:]):
        stop = start + m_out * (m_in + 1)
        slices.append((start, stop))
        start = stop
    return slices


def init_params(spec, seed):
    """Entrywise W ~ N(0, c_w), b ~ N(0, c_b), reproducible from ``seed``."""
    rng = rng_for(seed, "init")
    sw, sb = math.sqrt(spec.c_w), math.sqrt(spec.c_b)
    weights, biases = [], []
    for m_in, m_out in zip(spec.widths[:-1], spec.widths[1:]):
        weights.append(sw * rng.standard_normal((m_out, m_in)))
        biases.append(sb * rng.standard_normal(m_out))
    return Params(tuple(weights), tuple(biases), spec.alpha)


@dataclass(frozen=True)
class ForwardTrace:
    xs: tuple    # x^(0) .. x^(H)
    pre: tuple   # pre-activations of layers 1..H
    f: np.ndarray

    @property
    def z(self):
        """Augmented last-hidden feature [x^(H); 1]."""
        last = self.xs[-1]
        ones = np.ones((1,) + last.shape[1:])
        return np.concatenate([last, ones], axis=0)


def forward(params, x):
    """Run the network on one input (m_x,) or a batch (m_x, n)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != params.widths[0]:
        raise ValueError(f"input has length {x.shape[0]}, network expects {params.widths[0]}")
    vec = x.ndim == 1
    h = x[:, None] if vec else x
    xs, pre = [h], []
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        a = W @ h + b[:, None]
        h = softplus(a, params.alpha) / math.sqrt(W.shape[0])
        pre.append(a)
        xs.append(h)
    f = params.weights[-1] @ h + params.biases[-1][:, None]
    if vec:
        xs = [v[:, 0] for v in xs]
        pre = [v[:, 0] for v in pre]
        f = f[:, 0]
    return ForwardTrace(tuple(xs), tuple(pre), f)


def features(params, X):
    """Rows z_i^T of the feature matrix: shape (n, m_H + 1)."""
    return forward(params, np.asarray(X, dtype=float).reshape(params.widths[0], -1)).z.T


def _backward(params, trace, G):
    """Reverse-mode pass: G = dJ/df (m_y, n) -> per-layer (dW, db)."""
    grads_W, grads_b = [None] * (params.H + 1), [None] * (params.H + 1)
    grads_W[-1] = G @ trace.xs[-1].T
    grads_b[-1] = G.sum(axis=1)
    upstream = params.weights[-1].T @ G
    for l in range(params.H - 1, -1, -1):
        m = params.weights[l].shape[0]
        delta = upstream * softplus_grad(trace.pre[l], params.alpha) / math.sqrt(m)
        grads_W[l] = delta @ trace.xs[l].T
        grads_b[l] = delta.sum(axis=1)
        if l:
            upstream = params.weights[l].T @ delta
    return grads_W, grads_b


def objective(params, X, Y, loss):
    """J(theta) = (1/n) sum_i loss(f(x_i), y_i)."""
    return loss.value(forward(params, X).f, Y)


def grad_objective(params, X, Y, loss):
    """Exact gradient of J(theta), returned as a Params of the same shape."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    trace = forward(params, X)
    G = loss.grad(trace.f, Y) / X.shape[1]
    gW, gb = _backward(params, trace, G)
    return Params(tuple(gW), tuple(gb), params.alpha)


def jacobian_fX(params, X, max_entries=50_000_000):
    """Jacobian of theta -> vec([f(x_1), ..., f(x_n)]), shape (n m_y, d).

    Row i*m_y + k holds d f_k(x_i) / d theta; columns follow ``flatten``.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    m_y, d = params.widths[-1], params.size
    if n * m_y * d > max_entries:
        raise MemoryError(f"Jacobian would hold {n * m_y * d} entries (limit {max_entries})")
    trace = forward(params, X)
    slices = layer_slices(params.widths)
    jac = np.empty((n, m_y, d))
    for k in range(m_y):
        # one output coordinate at a time, all samples together
        seed = np.zeros((m_y, n))
        seed[k] = 1.0
        delta = seed
        for l in range(params.H, -1, -1):
            lo, hi = slices[l]
            x_in = trace.xs[l]
            # per-sample [delta x^T, delta] stored column-major
            block = np.concatenate(
                [delta.T[:, None, :] * x_in.T[:, :, None], delta.T[:, None, :]], axis=1
            )
            jac[:, k, lo:hi] = block.reshape(n, -1)
            if l:
                up = params.weights[l].T @ delta
                m = params.weights[l - 1].shape[0]
                delta = up * softplus_grad(trace.pre[l - 1], params.alpha) / math.sqrt(m)
    return jac.reshape(n * m_y, d)
