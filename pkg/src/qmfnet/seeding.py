"""Seed derivation and the keyed pseudorandom function behind the random codes.

Every random object in a simulation is a pure function of one master seed:

* PRF keys (source codebooks, relay maps) are ``derive_key(master, purpose,
  chunk, node)``: the first 8 bytes of a BLAKE2b digest of the ``|``-joined
  decimal/str parts, read little-endian.
* Sequential streams (channel noise, scrambler, message bits) are numpy
  ``PCG64`` generators seeded by ``SeedSequence([master, tag, *indices])``
  where ``tag`` is the 32-bit BLAKE2b digest of the purpose string.

The PRF maps (key, integer tuple) to a block of CN(0,1) samples.  The tuple
is folded into a 64-bit state with the SplitMix64 finalizer, then each output
symbol uses two further SplitMix64 outputs as a Box-Muller pair.  All
arithmetic is on uint64 with wraparound, so the stream is platform
independent.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

SEED_ENV = "QMFNET_SEED"

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)


def resolve_seed(seed: int | None = None, default: int = 0) -> int:
    """Return ``seed`` if given, else ``$QMFNET_SEED``, else ``default``."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return default


def derive_key(master_seed: int, *parts) -> int:
    text = "|".join(str(p) for p in (master_seed,) + parts)
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _tag(purpose: str) -> int:
    return int.from_bytes(hashlib.blake2b(purpose.encode(), digest_size=4).digest(), "little")


def substream(master_seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Independent generator keyed by (master seed, purpose tag, indices)."""
    entropy = [int(master_seed) & _MASK64, _tag(purpose)] + [int(i) & _MASK64 for i in indices]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def splitmix64(x: np.ndarray) -> np.ndarray:
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _to_unit(u: np.ndarray) -> np.ndarray:
    # 53-bit mantissa in (0, 1]; never 0 so log() is safe
    return ((u >> _S11).astype(np.float64) + 1.0) * (1.0 / 9007199254740992.0)


def prf_gaussian(keys, inputs: np.ndarray, length: int) -> np.ndarray:
    """Evaluate the keyed PRF.

    ``inputs`` is an integer array of shape ``(..., d)`` (one tuple per row);
    ``keys`` broadcasts against ``inputs.shape[:-1]``.  Returns complex128
    of shape ``(..., length)`` with i.i.d. CN(0,1) marginals.
    """
    inputs = np.asarray(inputs, dtype=np.int64)
    batch = inputs.shape[:-1]
    with np.errstate(over="ignore"):
        state = np.broadcast_to(np.asarray(keys, dtype=np.uint64), batch).copy()
        for j in range(inputs.shape[-1]):
            state = splitmix64(state ^ inputs[..., j].astype(np.uint64))
        state = splitmix64(state ^ np.uint64(inputs.shape[-1]))
        counters = np.arange(1, 2 * length + 1, dtype=np.uint64) * _GOLDEN
        raw = splitmix64(state[..., None] + counters)
    u1 = _to_unit(raw[..., 0::2])
    u2 = _to_unit(raw[..., 1::2])
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    return (radius * np.cos(angle) + 1j * radius * np.sin(angle)) * np.sqrt(0.5)
