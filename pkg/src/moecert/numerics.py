"""Scalar and small-vector numerical kernels shared by the whole package.

Everything here is deterministic double-precision math: the Gaussian
upper-tail function used as a smooth loss, the Bernoulli KL divergence and
its numerical inversion (the workhorse of Langford-Seeger-type risk
certificates), an overflow-safe softmax, and a seeded random source with
inverse-CDF categorical sampling.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

__all__ = [
    "probit",
    "gaussian_pdf",
    "binary_kl",
    "kl_inverse_upper",
    "softmax_with_bias",
    "log_softmax_with_bias",
    "sample_categorical",
    "RandomSource",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def probit(z):
    """Upper-tail probability of a standard normal, P(Z > z) = erfc(z / sqrt 2) / 2.

    Accepts a scalar or an ndarray; returns the same shape. Strictly
    decreasing, probit(z) + probit(-z) = 1, and extreme arguments underflow
    to 0 or saturate to 1 without ever producing NaN.
    """
    arr = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("probit requires finite input")
    out = 0.5 * special.erfc(arr / _SQRT2)
    return float(out) if np.isscalar(z) or arr.ndim == 0 else out


def gaussian_pdf(z):
    """Standard normal density, exp(-z^2/2) / sqrt(2 pi). Scalar or ndarray."""
    arr = np.asarray(z, dtype=np.float64)
    out = _INV_SQRT_2PI * np.exp(-0.5 * arr * arr)
    return float(out) if np.isscalar(z) or arr.ndim == 0 else out


def binary_kl(q: float, p: float) -> float:
    """KL divergence between Bernoulli(q) and Bernoulli(p).

    kl(q||p) = q ln(q/p) + (1-q) ln((1-q)/(1-p)), with the usual limit
    conventions: 0 ln 0 = 0, and kl(q||p) = +inf when p is an endpoint the
    mass of q cannot reach (p = 0 with q > 0, or p = 1 with q < 1).
    """
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if q == p:
        return 0.0
    if p == 0.0 or p == 1.0:
        return math.inf
    value = 0.0
    if q > 0.0:
        value += q * math.log(q / p)
    if q < 1.0:
        value += (1.0 - q) * math.log((1.0 - q) / (1.0 - p))
    return value


def kl_inverse_upper(q: float, c: float) -> float:
    """Largest p in [q, 1] with binary_kl(q, p) <= c.

    kl(q||.) increases from 0 at p = q toward +inf at p = 1, so the
    feasible set is an interval [q, p*]; 200 halvings of [q, 1] pin p* far
    below 1e-10 absolute error. Returns q when c = 0, and is monotone
    nondecreasing in c.
    """
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if c < 0.0:
        raise ValueError(f"c must be nonnegative, got {c}")
    if q == 1.0:
        return 1.0
    if c == 0.0:
        # kl(q, p) loses to cancellation noise for p within ~1e-9 of q, so
        # bisection cannot resolve the degenerate budget; the answer is q.
        return q
    lo, hi = q, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if binary_kl(q, mid) <= c:
            lo = mid
        else:
            hi = mid
    return lo


def softmax_with_bias(logits, bias):
    """Softmax of (logits + bias), computed with max-subtraction.

    `logits` may be a vector of length n or a matrix of row vectors; `bias`
    is a length-n vector broadcast across rows. Output rows are positive
    and sum to 1, and the result is invariant under adding a common
    constant to every component.
    """
    logits = np.asarray(logits, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if bias.ndim != 1 or logits.shape[-1] != bias.shape[0]:
        raise ValueError(
            f"bias of length {bias.shape} does not match logits of shape {logits.shape}"
        )
    if not (np.all(np.isfinite(logits)) and np.all(np.isfinite(bias))):
        raise ValueError("softmax_with_bias requires finite input")
    z = logits + bias
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_with_bias(logits, bias):
    """Log of softmax_with_bias via logsumexp; avoids log-of-underflow."""
    logits = np.asarray(logits, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if bias.ndim != 1 or logits.shape[-1] != bias.shape[0]:
        raise ValueError(
            f"bias of length {bias.shape} does not match logits of shape {logits.shape}"
        )
    z = logits + bias
    return z - special.logsumexp(z, axis=-1, keepdims=True)


class RandomSource:
    """Deterministic stream of randomness under a fixed 64-bit seed.

    Thin wrapper around numpy's PCG64 generator: identical seeds yield
    identical draw sequences on every platform. Instances carry mutable
    stream state and must not be shared across threads without exclusive
    access; everything else in this module is pure.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RandomSource(seed={self.seed})"


def sample_categorical(weights, rng: RandomSource) -> int:
    """Draw an index i with probability weights[i] from one uniform draw.

    Inverse-CDF sampling: a single uniform is compared against the running
    sum of the weights, so the draw is a deterministic function of the
    stream state. Weights must be nonnegative and sum to 1 within 1e-9.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a nonempty vector")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative")
    total = w.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1 within 1e-9, got {total}")
    u = rng.uniform()
    cdf = np.cumsum(w)
    cdf[-1] = max(cdf[-1], 1.0)  # guard against rounding shortfall at the top
    idx = int(np.searchsorted(cdf, u, side="right"))
    return min(idx, w.size - 1)
