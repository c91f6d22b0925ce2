"""Deterministic numeric substrate: seeded RNG, dense ops, softmax with
temperature, cross-entropy, Adam, and a finite-difference gradient checker.

Everything runs in 64-bit floats. All randomness flows through RngStream
(SplitMix64), so identical seeds give identical results on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    """SplitMix64 output function on a plain int, mod 2**64."""
    z &= 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * _MIX1) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * _MIX2) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def derive_seed(seed: int, label: str, index: int = 0) -> int:
    """Derive an independent child seed from (seed, label, index).

    This is the one documented seed-splitting scheme: parallel or staged work
    must take its streams from here rather than sharing a stream.
    """
    h = _fnv1a64(label.encode("utf-8"))
    s = seed & 0xFFFFFFFFFFFFFFFF
    s = _mix64(s ^ _mix64(h))
    s = _mix64(s ^ _mix64(((index + 1) * _GOLDEN) & 0xFFFFFFFFFFFFFFFF))
    return s


class RngStream:
    """SplitMix64 generator. Single-owner: never share one stream between
    concurrent tasks; derive children with :func:`derive_seed` or `split`."""

    def __init__(self, seed: int):
        self.state = seed & 0xFFFFFFFFFFFFFFFF

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & 0xFFFFFFFFFFFFFFFF
        return _mix64(self.state)

    def next_u64_array(self, n: int) -> np.ndarray:
        """Vectorized batch of n draws, identical to n calls of next_u64."""
        if n <= 0:
            return np.empty(0, dtype=np.uint64)
        with np.errstate(over="ignore"):
            steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
            z = np.uint64(self.state) + steps
            self.state = int(z[-1])
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        return z

    def uniform(self) -> float:
        """One double in [0, 1), using the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_array(self, n: int) -> np.ndarray:
        return (self.next_u64_array(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def categorical(self, probs: np.ndarray) -> int:
        """Inverse-CDF draw over the cumulative sum in index order."""
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("categorical() needs a non-empty 1-d probability vector")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        cum = np.cumsum(probs)
        idx = int(np.searchsorted(cum, self.uniform(), side="right"))
        return min(idx, probs.size - 1)

    def split(self, key: int) -> "RngStream":
        """Child stream keyed on `key`; does not advance this stream."""
        return RngStream(_mix64(self.state ^ _mix64(((key + 1) * _GOLDEN) & 0xFFFFFFFFFFFFFFFF)))


def assert_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {name}")


# -- dense ops ---------------------------------------------------------------
# Thin wrappers over numpy so shape failures carry a clear message and the
# accumulation order stays fixed (C-order float64 throughout).

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"multiply shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


# -- softmax / loss ----------------------------------------------------------

def softmax_temp(logits: np.ndarray, temp: float) -> np.ndarray:
    """Probability vector exp(logits/temp) / sum(exp(logits/temp)).

    Computed with max-subtraction, which is mathematically identical but does
    not overflow at low temperatures. Valid temperatures are 0 < temp <= 1.0.
    """
    if not (0.0 < temp <= 1.0):
        raise ValueError(f"temperature must be in (0, 1.0], got {temp}")
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise ValueError("softmax of empty logits")
    assert_finite("logits", logits)
    z = logits / temp
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def row_softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax over the last axis at temperature 1 (training/loss path)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def entropy(probs: np.ndarray) -> float:
    p = np.asarray(probs, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def cross_entropy(probs: np.ndarray, target_index: int) -> float:
    """-ln probs[target]; the target probability is floored at 1e-300."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= target_index < probs.size:
        raise IndexError(f"target {target_index} out of range for {probs.size} classes")
    p = probs[target_index]
    assert p >= 0.0, "negative probability"
    return float(-np.log(max(p, 1e-300)))


# -- Adam --------------------------------------------------------------------

Params = dict[str, np.ndarray]


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the parameter set."""

    m: Params
    v: Params
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init_like(cls, params: Params) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.items()},
            v={k: np.zeros_like(a) for k, a in params.items()},
        )


def adam_step(params: Params, grads: Params, state: AdamState, lr: float) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update, applied in place."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if set(params) != set(grads):
        raise ValueError("params and grads have different keys")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {k}: {g.shape} vs {p.shape}")
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def global_norm(grads: Params) -> float:
    total = 0.0
    for k in grads:
        total += float(np.sum(grads[k] * grads[k]))
    return float(np.sqrt(total))


def clip_global_norm(grads: Params, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the pre-clip norm.
    """
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for k in grads:
            grads[k] *= scale
    return norm


# -- gradient checking -------------------------------------------------------

def grad_check(f, params: Params, analytic_grads: Params, h: float = 1e-5,
               atol: float = 1e-6, sample: int | None = None,
               rng: RngStream | None = None) -> float:
    """Max relative error between analytic gradients and central differences.

    For each checked coordinate the numeric gradient is (f(x+h)-f(x-h))/2h and
    the error is |analytic - numeric| / max(|numeric|, atol). Coordinates where
    both gradients are below atol are skipped (both agree the slope is ~0).
    With `sample`, only that many randomly chosen coordinates per parameter are
    checked.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    max_err = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        n = flat.size
        if sample is not None and sample < n:
            if rng is None:
                raise ValueError("sampled grad_check needs an RngStream")
            coords = sorted({rng.below(n) for _ in range(sample)})
        else:
            coords = range(n)
        a_flat = analytic_grads[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f())
            flat[i] = orig - h
            f_minus = float(f())
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise FloatingPointError(f"non-finite objective while perturbing {name}[{i}]")
            numeric = (f_plus - f_minus) / (2.0 * h)
            analytic = float(a_flat[i])
            if abs(numeric) < atol and abs(analytic) < atol:
                continue
            err = abs(analytic - numeric) / max(abs(numeric), atol)
            if err > max_err:
                max_err = err
    return max_err
