"""Complex AWGN superposition over one layer of a layered network.

Blocks are complex128 arrays whose last axis is time; leading axes batch
independent blocks (e.g. the chunks of a frame).  Noise is CN(0,1): real and imaginary
parts are independent N(0, 1/2), so E|z|^2 = 1.
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from .network import LayeredNetwork

UNIT_COMPONENT_STD = np.sqrt(0.5)


class LayerMismatch(ValueError):
    pass


def sample_noise_block(length, noise_source: np.random.Generator, std: float = UNIT_COMPONENT_STD) -> np.ndarray:
    """I.i.d. complex Gaussians with per-component std ``std``.

    ``length`` is a count or a shape tuple.
    """
    shape = (length,) if np.isscalar(length) else tuple(length)
    if not shape or min(shape) < 1:
        raise ValueError("block length must be >= 1")
    parts = noise_source.standard_normal(shape + (2,)) * std
    return parts[..., 0] + 1j * parts[..., 1]


def _noise_for(node, shape, noise_source):
    if noise_source is None:
        return np.zeros(shape, dtype=complex)
    if isinstance(noise_source, Mapping):
        src = noise_source[node]
        if isinstance(src, np.random.Generator):
            return sample_noise_block(shape, src)
        block = np.asarray(src, dtype=complex)
        if block.shape != shape:
            raise LayerMismatch(f"noise block for {node!r} has shape {block.shape}")
        return block
    return sample_noise_block(shape, noise_source)


def propagate_layer(net: LayeredNetwork, layer: int, transmits: Mapping, noise_source=None) -> dict:
    """Received blocks at layer ``layer + 1`` given the transmits of ``layer``.

    ``noise_source`` is a Generator (drawn in receiver order), a mapping of
    receiver -> Generator or explicit noise block, or ``None`` for a
    noiseless channel.
    """
    senders = net.layer(layer)
    if set(transmits) != set(senders):
        raise LayerMismatch(f"transmits cover {sorted(transmits)}, layer {layer} is {sorted(senders)}")
    if layer >= net.num_layers:
        raise LayerMismatch(f"layer {layer} has no receiving layer")
    shapes = {np.asarray(b).shape for b in transmits.values()}
    if len(shapes) != 1:
        raise LayerMismatch("transmit blocks differ in shape")
    shape = shapes.pop()

    received = {}
    for i in net.layer(layer + 1):
        y = np.zeros(shape, dtype=complex)
        for j in senders:
            h = net.gains.get((j, i))
            if h is not None:
                y = y + h * np.asarray(transmits[j], dtype=complex)
        received[i] = y + _noise_for(i, shape, noise_source)
    return received
