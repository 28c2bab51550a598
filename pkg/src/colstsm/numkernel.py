"""Dense float64 kernels, activations and the splitmix64 generator.

Matrices are plain C-ordered (row-major) ``numpy.ndarray`` objects of dtype
float64.  Vector arguments may carry leading batch axes; a batch of vectors
is stored one vector per row.  Kernels never narrow their inputs, so the same
code runs in ``np.longdouble`` for the finite-difference oracle.
"""

import math

import numpy as np

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = 0xFFFFFFFFFFFFFFFF
_TWO_NEG_53 = 1.0 / (1 << 53)


def _check(name, W, x, rows):
    if W.ndim != 2:
        raise ValueError(f"{name}: expected a matrix, got shape {W.shape}")
    if x.shape[-1] != W.shape[1]:
        raise ValueError(
            f"{name}: matrix has {W.shape[1]} columns but its operand has length {x.shape[-1]}")
    if rows is not None and W.shape[0] != rows:
        raise ValueError(f"{name}: expected {rows} rows, got {W.shape[0]}")


def matvec(W, x):
    """``W @ x`` for a single vector or a row-stacked batch of vectors."""
    _check("W", W, x, None)
    return x @ W.T


def affine(W, x, U, h, b):
    """Return ``W.x + U.h + b``.

    The common pre-activation of every gate in the recurrent cells.  ``x`` and
    ``h`` may be single vectors or batches with matching leading axes.
    """
    W, U, b, x, h = (as_real(v) for v in (W, U, b, x, h))
    m = W.shape[0] if W.ndim == 2 else None
    _check("W", W, x, None)
    _check("U", U, h, m)
    if U.shape[0] != U.shape[1]:
        raise ValueError(f"U: expected a square matrix, got shape {U.shape}")
    if b.shape != (m,):
        raise ValueError(f"b: expected length {m}, got shape {b.shape}")
    if x.shape[:-1] != h.shape[:-1]:
        raise ValueError(f"x/h: batch shapes differ ({x.shape[:-1]} vs {h.shape[:-1]})")
    return x @ W.T + h @ U.T + b


def as_real(v):
    """Array view with a floating dtype; float64 unless already wider."""
    v = np.asarray(v)
    return v.astype(np.result_type(v.dtype, np.float64), copy=False)


def sigmoid(v):
    v = as_real(v)
    # exp(-v) overflows for v < -709; evaluate the mirrored form there.
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def tanh_act(v):
    return np.tanh(as_real(v))


def _mix(z):
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def prng_next(state):
    """Advance a splitmix64 state. Returns ``(new_state, output)``."""
    state = (state + _GAMMA) & _MASK
    return state, _mix(state)


class Prng:
    """Stateful wrapper around :func:`prng_next`.

    The n-th splitmix64 output depends only on ``seed + n * gamma``, so bulk
    draws are vectorised in numpy while producing exactly the same stream as
    repeated scalar calls.
    """

    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next_u64(self):
        self.state, out = prng_next(self.state)
        return out

    def u64_array(self, count):
        if count <= 0:
            return np.zeros(0, dtype=np.uint64)
        with np.errstate(over="ignore"):
            steps = np.arange(1, count + 1, dtype=np.uint64)
            z = np.uint64(self.state) + steps * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self.state = (self.state + count * _GAMMA) & _MASK
        return z

    def uniform(self, size=None, low=0.0, high=1.0):
        """Doubles in ``[low, high)`` built from the top 53 bits of each output."""
        if size is None:
            u = (self.next_u64() >> 11) * _TWO_NEG_53
            return low + (high - low) * u
        count = int(np.prod(size))
        u = (self.u64_array(count) >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53
        return (low + (high - low) * u).reshape(size)

    def gaussian(self, size=None):
        """Standard normal samples; each consumes two outputs (Box-Muller, cosine branch)."""
        count = 1 if size is None else int(np.prod(size))
        raw = self.u64_array(2 * count).reshape(count, 2)
        u = (raw >> np.uint64(11)).astype(np.float64) * _TWO_NEG_53
        # 1 - u lies in (0, 1], keeping the logarithm finite.
        z = np.sqrt(-2.0 * np.log(1.0 - u[:, 0])) * np.cos(2.0 * math.pi * u[:, 1])
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def randbelow(self, n):
        return self.next_u64() % n

    def permutation(self, n):
        """Fisher-Yates shuffle of ``range(n)``."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx
