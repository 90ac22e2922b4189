"""Dense numeric kernel: shape-checked array ops and a seedable generator.

All values are 64-bit floats. Matrices are row-major 2-d numpy arrays,
vectors are 1-d numpy arrays; everything downstream computes through
these ops (or plain numpy arithmetic with identical semantics).

Randomness comes from :class:`Rng`, a SplitMix64 generator implemented in
pure integer arithmetic so that a seed produces the same stream on every
platform, independent of numpy's own generators.
"""

from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    """Operand dimensions do not conform."""


def _as_matrix(name: str, a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-d, got shape {a.shape}")
    return a


def _as_vector(name: str, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-d, got shape {v.shape}")
    return v


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit conformance check."""
    a = _as_matrix("left operand", a)
    b = _as_matrix("right operand", b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: left is {a.shape[0]}x{a.shape[1]}, "
            f"right is {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def kron(x, g) -> np.ndarray:
    """Kronecker product of two vectors.

    Result has length ``len(x) * len(g)`` with element ``i*len(g) + j``
    equal to ``x[i] * g[j]``.
    """
    x = _as_vector("x", x)
    g = _as_vector("g", g)
    if x.size == 0 or g.size == 0:
        raise ShapeError("kron: operands must be non-empty")
    return np.kron(x, g)


def kron_cols(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product: (n, B) x (m, B) -> (n*m, B)."""
    if x.ndim != 2 or g.ndim != 2 or x.shape[1] != g.shape[1]:
        raise ShapeError(f"kron_cols: incompatible shapes {x.shape}, {g.shape}")
    n, b = x.shape
    m = g.shape[0]
    return (x[:, None, :] * g[None, :, :]).reshape(n * m, b)


def sigmoid(v) -> np.ndarray:
    """Numerically stable logistic function, elementwise."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def tanh(v) -> np.ndarray:
    return np.tanh(np.asarray(v, dtype=np.float64))


def hadamard(a, b) -> np.ndarray:
    """Elementwise product; operands must have identical shape."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    return a * b


_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class Rng:
    """SplitMix64 pseudo-random generator.

    The state advances by the constant 0x9E3779B97F4A7C15 each draw; the
    output is the state mixed with the xor-shift/multiply constants
    0xBF58476D1CE4E5B9 and 0x94D049BB133111EB. Pure integer arithmetic,
    so equal seeds give bit-identical integer streams everywhere.
    """

    def __init__(self, seed: int):
        self._state = int(seed) & _MASK64
        self._spare_normal: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def randint(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("randint: n must be positive")
        span = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < span:
                return u % n

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Gaussian draw via Box-Muller, one spare cached."""
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
        else:
            u1 = 1.0 - self.random()  # avoid log(0)
            u2 = self.random()
            rad = math.sqrt(-2.0 * math.log(u1))
            z = rad * math.cos(2.0 * math.pi * u2)
            self._spare_normal = rad * math.sin(2.0 * math.pi * u2)
        return mu + sigma * z

    def uniform_array(self, lo: float, hi: float, shape) -> np.ndarray:
        out = np.empty(int(np.prod(shape)))
        for i in range(out.size):
            out[i] = self.uniform(lo, hi)
        return out.reshape(shape)

    def normal_array(self, mu: float, sigma: float, shape) -> np.ndarray:
        out = np.empty(int(np.prod(shape)))
        for i in range(out.size):
            out[i] = self.normal(mu, sigma)
        return out.reshape(shape)

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randint(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def permutation(self, n: int) -> list[int]:
        idx = list(range(n))
        self.shuffle(idx)
        return idx

    def split(self) -> "Rng":
        """Derive an independent child generator."""
        return Rng(self.next_u64())
