"""Public-randomness permutation and XOR mask between outer and inner codes.

Encoder order is permute-then-mask: ``out[i] = bits[perm_inv[i]] ^ mask[i]``,
i.e. input bit ``j`` moves to position ``perm[j]``.  The sink unmasks, then
unpermutes.  The permutation is a Fisher-Yates shuffle from the
``(master, "perm")`` substream; the mask comes from ``(master, "mask")``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import substream


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScramblerState:
    permutation: np.ndarray  # perm[j] = output position of input bit j
    mask: np.ndarray
    seed_tag: str = ""

    def __post_init__(self):
        perm = np.asarray(self.permutation)
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(len(perm))):
            raise ValueError("permutation is not a bijection")
        if len(self.mask) != len(perm):
            raise LengthMismatch("mask length differs from permutation length")

    @property
    def length(self) -> int:
        return len(self.permutation)


def fisher_yates(m: int, rng: np.random.Generator) -> np.ndarray:
    perm = np.arange(m)
    for i in range(m - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def make_scrambler(m: int, master_seed: int, *indices: int) -> ScramblerState:
    perm = fisher_yates(m, substream(master_seed, "perm", *indices))
    mask = substream(master_seed, "mask", *indices).integers(0, 2, m, dtype=np.uint8)
    return ScramblerState(perm, mask, f"{master_seed}:{'/'.join(map(str, indices))}")


def identity_scrambler(m: int) -> ScramblerState:
    return ScramblerState(np.arange(m), np.zeros(m, dtype=np.uint8), "identity")


def scramble(state: ScramblerState, bits) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    if b.shape[-1] != state.length:
        raise LengthMismatch(f"{b.shape[-1]} bits for a length-{state.length} scrambler")
    out = np.empty_like(b)
    out[..., state.permutation] = b
    return out ^ state.mask


def descramble(state: ScramblerState, bits) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8)
    if b.shape[-1] != state.length:
        raise LengthMismatch(f"{b.shape[-1]} bits for a length-{state.length} scrambler")
    return (b ^ state.mask)[..., state.permutation]
