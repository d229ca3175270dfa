"""MLP actor-critic building blocks with manual reverse-mode gradients.

Fixed architecture (affine + ELU hidden layers, linear output), a
state-independent diagonal-Gaussian head, Adam updates, and a flat binary
checkpoint format.  No autodiff framework: backward is written out
explicitly and checked against finite differences in the tests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .mathcore import RngStream, TWO_PI

LOG_2PI = float(np.log(TWO_PI))


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


class MLP:
    """Affine chain with ELU hidden activations and a linear output layer."""

    def __init__(self, weights, biases):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for w_prev, w_next in zip(self.weights[:-1], self.weights[1:]):
            if w_prev.shape[1] != w_next.shape[0]:
                raise ValueError("consecutive layer dimensions disagree")

    @classmethod
    def init(cls, sizes, stream: RngStream, out_scale=0.01):
        """Fan-in-scaled uniform init; output layer shrunk by out_scale."""
        weights, biases = [], []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = np.sqrt(1.0 / n_in)
            w = stream.uniform_block(n_in * n_out, -bound, bound).reshape(n_in, n_out)
            if i == len(sizes) - 2:
                w = w * out_scale
            weights.append(w)
            biases.append(np.zeros(n_out))
        return cls(weights, biases)

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self):
        """Flat parameter list: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x, cache=None):
        """Batched forward pass; pass a list as cache to enable backward."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.weights[0].shape[0]:
            raise ValueError("input width does not match the first layer")
        h = x
        if cache is not None:
            cache.append(h)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else elu(z)
            if cache is not None:
                cache.append(z)
                cache.append(h)
        return h

    def backward(self, cache, grad_out):
        """Exact gradients of the cached forward pass.

        Returns (grads, grad_input) with grads parallel to params().
        """
        grad_out = np.asarray(grad_out, dtype=np.float64)
        grads = [None] * (2 * len(self.weights))
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = cache[2 * i]
            z = cache[2 * i + 1]
            if i != len(self.weights) - 1:
                g = g * elu_grad(z)
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, g


def sample_and_logprob(mean, log_std, stream: RngStream):
    """Draw a ~ N(mean, exp(log_std)^2) per row using per-stream noise.

    Returns (action, logp) with logp summed over action dimensions.
    """
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    eps = stream.normal_block(mean.shape[-1])
    action = mean + np.exp(log_std) * eps
    logp = -0.5 * np.sum(eps * eps, axis=-1) - np.sum(log_std) - 0.5 * LOG_2PI * mean.shape[-1]
    return action, logp


def gaussian_logprob(mean, log_std, action):
    """Log density of stored actions under N(mean, exp(log_std)^2)."""
    z = (np.asarray(action) - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * LOG_2PI * mean.shape[-1]


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_update(params, grads, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam step, updating params in place."""
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


# -- checkpoint format -------------------------------------------------------
#
# magic "BPCK" | u32 version | u32 tensor count, then per tensor:
# u32 rank | u64 dims[rank] | row-major float64 payload.

CHECKPOINT_MAGIC = b"BPCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, tensors):
    tensors = [np.ascontiguousarray(t, dtype=np.float64) for t in tensors]
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(tensors)))
        for t in tensors:
            f.write(struct.pack("<I", t.ndim))
            f.write(struct.pack(f"<{t.ndim}Q", *t.shape))
            f.write(t.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        tensors = []
        for _ in range(count):
            (rank,) = struct.unpack("<I", f.read(4))
            dims = struct.unpack(f"<{rank}Q", f.read(8 * rank)) if rank else ()
            n = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(f.read(8 * n), dtype=np.float64).reshape(dims)
            tensors.append(data.copy())
        return tensors
