"""Layered Gaussian relay networks and the i.i.d.-input cut-set value.

Network description files are YAML (JSON is accepted too)::

    nodes:
      - {id: S, layer: 1}
      - {id: A, layer: 2}
      - {id: D, layer: 3}
    edges:
      - {from: S, to: A, re: 1.0, im: 0.0}
      - {from: A, to: D, re: 2.0, im: 0.0}
    source: S
    sink: D
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

MAX_CUT_NODES = 20


class NetworkError(ValueError):
    pass


class MalformedDescription(NetworkError):
    pass


class NotLayered(NetworkError):
    pass


class DisconnectedNode(NetworkError):
    pass


class TooManyNodes(NetworkError):
    pass


@dataclass(frozen=True)
class LayeredNetwork:
    """Immutable layered relay network.

    ``gains[(j, i)]`` is the complex gain of the edge from ``j`` to ``i``.
    Zero-gain edges are legal and behave as absent edges in every formula.
    """

    nodes: tuple
    layer_of: dict
    gains: dict
    source: str
    sink: str
    _layers: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _validate(self)
        depth = max(self.layer_of.values())
        layers = tuple(
            tuple(n for n in self.nodes if self.layer_of[n] == l) for l in range(1, depth + 1)
        )
        object.__setattr__(self, "_layers", layers)

    @property
    def num_layers(self) -> int:
        return len(self._layers)

    def layer(self, l: int) -> tuple:
        """Nodes of layer ``l`` (1-based), in declaration order."""
        return self._layers[l - 1]

    @property
    def relays(self) -> tuple:
        return tuple(n for n in self.nodes if n not in (self.source, self.sink))

    def in_neighbors(self, node) -> tuple:
        return tuple(j for (j, i) in self.gains if i == node)

    def gain_matrix(self, rows, cols) -> np.ndarray:
        """Transfer matrix with ``H[r, c] = h_{cols[c], rows[r]}``."""
        H = np.zeros((len(rows), len(cols)), dtype=complex)
        for r, i in enumerate(rows):
            for c, j in enumerate(cols):
                H[r, c] = self.gains.get((j, i), 0.0)
        return H

    def scaled(self, factor: float) -> "LayeredNetwork":
        return LayeredNetwork(
            self.nodes,
            dict(self.layer_of),
            {e: g * factor for e, g in self.gains.items()},
            self.source,
            self.sink,
        )

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n, "layer": self.layer_of[n]} for n in self.nodes],
            "edges": [
                {"from": j, "to": i, "re": float(g.real), "im": float(g.imag)}
                for (j, i), g in self.gains.items()
            ],
            "source": self.source,
            "sink": self.sink,
        }


def _validate(net: LayeredNetwork) -> None:
    if len(set(net.nodes)) != len(net.nodes):
        raise MalformedDescription("duplicate node ids")
    for n in net.nodes:
        if n not in net.layer_of:
            raise MalformedDescription(f"node {n!r} has no layer")
        if not isinstance(net.layer_of[n], int) or net.layer_of[n] < 1:
            raise MalformedDescription(f"node {n!r} has invalid layer {net.layer_of[n]!r}")
    if net.source not in net.layer_of or net.sink not in net.layer_of:
        raise MalformedDescription("source and sink must be declared nodes")
    depth = max(net.layer_of.values())
    if net.layer_of[net.source] != 1 or [n for n in net.nodes if net.layer_of[n] == 1] != [net.source]:
        raise MalformedDescription("source must be the unique node at layer 1")
    if net.layer_of[net.sink] != depth or [n for n in net.nodes if net.layer_of[n] == depth] != [net.sink]:
        raise MalformedDescription("sink must be the unique node at the last layer")
    if depth < 2:
        raise MalformedDescription("network needs at least two layers")
    for (j, i) in net.gains:
        if j not in net.layer_of or i not in net.layer_of:
            raise MalformedDescription(f"edge ({j!r}, {i!r}) references an unknown node")
        if net.layer_of[i] != net.layer_of[j] + 1:
            raise NotLayered(
                f"edge {j}->{i} joins layers {net.layer_of[j]} and {net.layer_of[i]}"
            )

    succ = {n: [] for n in net.nodes}
    pred = {n: [] for n in net.nodes}
    for (j, i) in net.gains:
        succ[j].append(i)
        pred[i].append(j)
    forward = _reach(net.source, succ)
    backward = _reach(net.sink, pred)
    for n in net.nodes:
        if n not in forward or n not in backward:
            raise DisconnectedNode(f"node {n!r} is not on any source-sink path")


def _reach(start, adjacency) -> set:
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adjacency[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def network_from_dict(doc) -> LayeredNetwork:
    if not isinstance(doc, dict):
        raise MalformedDescription("network description must be a mapping")
    try:
        nodes = tuple(str(n["id"]) for n in doc["nodes"])
        layer_of = {str(n["id"]): int(n["layer"]) for n in doc["nodes"]}
        gains = {}
        for e in doc["edges"]:
            key = (str(e["from"]), str(e["to"]))
            if key in gains:
                raise MalformedDescription(f"duplicate edge {key}")
            gains[key] = complex(float(e.get("re", 0.0)), float(e.get("im", 0.0)))
        source = str(doc["source"])
        sink = str(doc["sink"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, NetworkError):
            raise
        raise MalformedDescription(f"bad network description: {exc}") from exc
    return LayeredNetwork(nodes, layer_of, gains, source, sink)


def load_network(description: str) -> LayeredNetwork:
    """Parse a network description document (YAML or JSON text)."""
    try:
        doc = yaml.safe_load(description)
    except yaml.YAMLError as exc:
        raise MalformedDescription(f"unparseable network description: {exc}") from exc
    return network_from_dict(doc)


def read_network(path) -> LayeredNetwork:
    return load_network(Path(path).read_text())


def line_network(*gains: complex) -> LayeredNetwork:
    """S -> R1 -> ... -> D with the given per-hop gains."""
    names = ["S"] + [f"R{k}" for k in range(1, len(gains))] + ["D"]
    return LayeredNetwork(
        tuple(names),
        {n: k + 1 for k, n in enumerate(names)},
        {(names[k], names[k + 1]): complex(g) for k, g in enumerate(gains)},
        "S",
        "D",
    )


def diamond_network(h_sa=1.0, h_sb=1.0, h_ad=1.0, h_bd=1.0) -> LayeredNetwork:
    return LayeredNetwork(
        ("S", "A", "B", "D"),
        {"S": 1, "A": 2, "B": 2, "D": 3},
        {
            ("S", "A"): complex(h_sa),
            ("S", "B"): complex(h_sb),
            ("A", "D"): complex(h_ad),
            ("B", "D"): complex(h_bd),
        },
        "S",
        "D",
    )


@dataclass(frozen=True)
class CutSetReport:
    c_iid: float
    c_bar_upper: float
    per_cut: tuple  # ((frozenset of node ids, bits), ...)

    def to_dict(self) -> dict:
        return {
            "c_iid": self.c_iid,
            "c_bar_upper": self.c_bar_upper,
            "per_cut": [{"cut": sorted(cut), "bits": bits} for cut, bits in self.per_cut],
        }


def log2det_gram(H: np.ndarray) -> float:
    """log2 det(I + H H^dagger) via a Cholesky factor of the smaller Gram matrix."""
    if H.size == 0:
        return 0.0
    G = H.conj().T @ H if H.shape[1] <= H.shape[0] else H @ H.conj().T
    L = np.linalg.cholesky(np.eye(G.shape[0]) + G)
    return float(2.0 * np.sum(np.log2(np.abs(np.diag(L)))))


def cut_matrices(net: LayeredNetwork, cut) -> list:
    """``(l, H_l)`` for every layer where the cut has senders at l-1 and
    receivers at l; rows are the receivers outside the cut."""
    out = []
    for l in range(2, net.num_layers + 1):
        tx = [n for n in net.layer(l - 1) if n in cut]
        rx = [n for n in net.layer(l) if n not in cut]
        if tx and rx:
            out.append((l, net.gain_matrix(rx, tx)))
    return out


def cut_value(net: LayeredNetwork, cut) -> float:
    """Sum over layers of log2 det(I + H_l H_l^dagger) for the cut ``cut``."""
    return sum((log2det_gram(H) for _, H in cut_matrices(net, cut)), 0.0)


def iter_cuts(net: LayeredNetwork):
    middle = [n for n in net.nodes if n not in (net.source, net.sink)]
    for r in range(len(middle) + 1):
        for subset in itertools.combinations(middle, r):
            yield frozenset((net.source,) + subset)


def cutset_iid(net: LayeredNetwork) -> CutSetReport:
    if len(net.nodes) > MAX_CUT_NODES:
        raise TooManyNodes(f"{len(net.nodes)} nodes exceeds the enumeration guard of {MAX_CUT_NODES}")
    per_cut = tuple((cut, cut_value(net, cut)) for cut in iter_cuts(net))
    c_iid = min(v for _, v in per_cut)
    return CutSetReport(c_iid, c_iid + 2 * len(net.nodes), per_cut)


def awgn_capacity(gain: complex) -> float:
    return math.log2(1.0 + abs(gain) ** 2)
