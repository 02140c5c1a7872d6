"""Polar outer code for the binary symmetric channel.

Natural bit order throughout: a codeword is ``x = u F^{(x)k}`` with
``F = [[1, 0], [1, 1]]`` and no bit-reversal permutation, so the first half
of ``u`` sees the degraded channel of the top-level split.  Frozen bits are
zero.  Decoding is plain successive cancellation on LLRs, batched over
frames (leading axis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class OutOfRange(ValueError):
    pass


class InvalidLength(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


def entropy(x: float) -> float:
    """Binary entropy in bits, 0 at both endpoints."""
    if not 0.0 <= x <= 1.0:
        raise OutOfRange(f"entropy argument {x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def bhattacharyya_log(n: int, crossover: float) -> np.ndarray:
    """Natural log of the Bhattacharyya parameter of each synthetic channel.

    Tracks log Z and log(1 - Z) together so both tails stay accurate:
    Z- = Z (2 - Z) with 1 - Z- = (1 - Z)^2, and Z+ = Z^2 with
    1 - Z+ = (1 - Z)(1 + Z).
    """
    if not _is_pow2(n):
        raise InvalidLength(f"block length {n} is not a power of two")
    z0 = 2.0 * math.sqrt(crossover * (1.0 - crossover))
    a = np.array([math.log(z0)])
    b = np.array([math.log1p(-z0)])
    for _ in range(int(math.log2(n))):
        a_minus = a + np.log(2.0 - np.exp(a))
        b_minus = 2.0 * b
        a_plus = 2.0 * a
        b_plus = b + np.log1p(np.exp(a))
        a = np.stack([a_minus, a_plus], axis=-1).ravel()
        b = np.stack([b_minus, b_plus], axis=-1).ravel()
    return a


@dataclass(frozen=True)
class PolarCode:
    n_outer: int
    frozen: tuple
    design_crossover: float

    @property
    def k(self) -> int:
        return self.n_outer - len(self.frozen)

    @property
    def rate_o(self) -> float:
        return self.k / self.n_outer

    @property
    def frozen_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_outer, dtype=bool)
        mask[list(self.frozen)] = True
        return mask

    @property
    def info_positions(self) -> np.ndarray:
        return np.flatnonzero(~self.frozen_mask)

    def to_dict(self) -> dict:
        return {"n": self.n_outer, "design_crossover": self.design_crossover, "frozen": list(self.frozen)}

    @classmethod
    def from_dict(cls, doc) -> "PolarCode":
        return cls(int(doc["n"]), tuple(sorted(int(i) for i in doc["frozen"])), float(doc["design_crossover"]))


def info_count(n_outer: int, rate: float) -> int:
    return max(0, min(n_outer, math.floor(rate * n_outer + 1e-9)))


def construct(n_outer: int, design_crossover: float, rate: float) -> PolarCode:
    """Freeze the n - k positions with the largest Bhattacharyya parameter.

    ``k = floor(rate * n)``; among equal parameters the lower index is frozen
    first.
    """
    if not _is_pow2(n_outer):
        raise InvalidLength(f"block length {n_outer} is not a power of two")
    if not 0.0 < design_crossover < 0.5:
        raise OutOfRange(f"design crossover {design_crossover} outside (0, 1/2)")
    k = info_count(n_outer, rate)
    logz = bhattacharyya_log(n_outer, design_crossover)
    order = np.lexsort((np.arange(n_outer), -logz))
    frozen = tuple(sorted(int(i) for i in order[: n_outer - k]))
    return PolarCode(n_outer, frozen, design_crossover)


def polar_transform(u: np.ndarray) -> np.ndarray:
    """x = u F^{(x)k} over GF(2); works on the last axis, any leading shape."""
    x = np.array(u, dtype=np.uint8, copy=True)
    n = x.shape[-1]
    lead = x.shape[:-1]
    h = 1
    while h < n:
        v = x.reshape(lead + (n // (2 * h), 2, h))
        v[..., 0, :] ^= v[..., 1, :]
        h *= 2
    return x


def polar_encode(code: PolarCode, message) -> np.ndarray:
    msg = np.asarray(message, dtype=np.uint8)
    if msg.shape[-1] != code.k:
        raise LengthMismatch(f"message has {msg.shape[-1]} bits, code carries {code.k}")
    u = np.zeros(msg.shape[:-1] + (code.n_outer,), dtype=np.uint8)
    u[..., code.info_positions] = msg
    return polar_transform(u)


def _boxplus(a, b):
    return (
        np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
        + np.log1p(np.exp(-np.abs(a + b)))
        - np.log1p(np.exp(-np.abs(a - b)))
    )


def _sc(llr, frozen):
    """Returns (u_hat, x_hat) for one subtree; ``llr`` is (F, N)."""
    N = llr.shape[1]
    if frozen.all():
        z = np.zeros(llr.shape, dtype=np.uint8)
        return z, z
    if N == 1:
        u = (llr < 0).astype(np.uint8)
        return u, u
    h = N // 2
    a, b = llr[:, :h], llr[:, h:]
    u1, v1 = _sc(_boxplus(a, b), frozen[:h])
    u2, v2 = _sc(b + (1.0 - 2.0 * v1) * a, frozen[h:])
    return np.concatenate([u1, u2], axis=1), np.concatenate([v1 ^ v2, v2], axis=1)


def bsc_llr(bits, crossover: float) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.float64)
    return (1.0 - 2.0 * bits) * math.log((1.0 - crossover) / crossover)


def polar_decode(code: PolarCode, received, crossover: float | None = None) -> np.ndarray:
    """Successive-cancellation decode of hard BSC outputs; returns info bits.

    Accepts one word ``(n,)`` or a batch ``(F, n)``.  Likelihoods use
    ``crossover`` (default: the design crossover); a zero LLR decides 0.
    """
    r = np.asarray(received, dtype=np.uint8)
    if r.shape[-1] != code.n_outer:
        raise LengthMismatch(f"received {r.shape[-1]} bits, code length {code.n_outer}")
    single = r.ndim == 1
    r2 = r.reshape(-1, code.n_outer)
    p = code.design_crossover if crossover is None else crossover
    u, _ = _sc(bsc_llr(r2, p), code.frozen_mask)
    out = u[:, code.info_positions]
    return out[0] if single else out
