"""Random inner codes: source codebook, quantize-map-and-forward relays, and
the sink's exhaustive decoder over messages x candidate noise hypotheses.

Random functions are realized lazily through the keyed PRF in
:mod:`qmfnet.seeding`; encoder, relays and decoder rebuild identical
realizations from the same keys.  A relay's map input is its rounded,
clamped reception flattened as ``(re_1, im_1, ..., re_l, im_l)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .network import LayeredNetwork
from .quantization import NoiseSetBundle, round_block, tuple_log2prob
from .seeding import derive_key, prf_gaussian

CODEWORD_COMPONENT_STD = math.sqrt(0.5)
DEFAULT_MAX_HYPOTHESES = 5 * 10**6
_BATCH_ELEMENTS = 1 << 21
_LN2 = math.log(2.0)


class MessageOutOfRange(ValueError):
    pass


class HypothesisBudgetExceeded(RuntimeError):
    pass


class Outcome(enum.Enum):
    DECODED = "decoded"
    AMBIGUOUS = "ambiguous"
    NO_CANDIDATE = "no_candidate"
    CLIP_DECLARED = "clip_declared"
    NOISE_OUTSIDE_Q = "noise_outside_q"


@dataclass(frozen=True)
class RelayAlphabet:
    node: str
    m_i: int
    delta_i: int

    @property
    def s_i(self) -> int:
        return self.m_i + self.delta_i


def slack(ell: int) -> int:
    return math.ceil(math.sqrt(2 * ell * math.log(2)))


def compute_alphabets(
    net: LayeredNetwork,
    ell: int,
    codeword_std: float = CODEWORD_COMPONENT_STD,
    overrides: dict | None = None,
) -> dict:
    """Clipping alphabets for every receiving node.

    ``m_i`` bounds |Re| and |Im| of the clean received signal at the same
    quantile the slack uses: ceil(sum_j |h_ji| * sqrt(2 l ln 2) * codeword_std).
    ``overrides`` maps node -> m_i.
    """
    overrides = overrides or {}
    d = slack(ell)
    out = {}
    for node in net.nodes:
        if node == net.source:
            continue
        if node in overrides:
            m = int(overrides[node])
        else:
            gain_sum = sum(abs(net.gains[(j, node)]) for j in net.in_neighbors(node))
            m = math.ceil(gain_sum * math.sqrt(2 * ell * math.log(2)) * codeword_std)
        out[node] = RelayAlphabet(node, m, d)
    return out


@dataclass(frozen=True)
class InnerCodeInstance:
    chunk_index: int
    rate_bits: float
    ell: int
    codebook_key: int
    relay_keys: dict
    alphabets: dict

    @property
    def message_bits(self) -> int:
        return math.ceil(self.rate_bits * self.ell - 1e-12)

    @property
    def message_count(self) -> int:
        return 1 << self.message_bits


def make_instance(
    net: LayeredNetwork,
    ell: int,
    rate_bits: float,
    master_seed: int,
    chunk_index: int,
    alphabets: dict | None = None,
) -> InnerCodeInstance:
    return InnerCodeInstance(
        chunk_index,
        rate_bits,
        ell,
        derive_key(master_seed, "codebook", chunk_index, net.source),
        {n: derive_key(master_seed, "relay", chunk_index, n) for n in net.relays},
        alphabets if alphabets is not None else compute_alphabets(net, ell),
    )


def encode_message(inst: InnerCodeInstance, u: int) -> np.ndarray:
    if not 0 <= u < inst.message_count:
        raise MessageOutOfRange(f"message {u} outside [0, {inst.message_count})")
    return prf_gaussian(inst.codebook_key, np.array([[u]]), inst.ell)[0]


def relay_map(key, quantized: np.ndarray, ell: int) -> np.ndarray:
    """PRF relay map on rounded receptions of shape ``(..., l, 2)``."""
    q = np.asarray(quantized, dtype=np.int64)
    return prf_gaussian(key, q.reshape(q.shape[:-2] + (2 * ell,)), ell)


def relay_forward(inst: InnerCodeInstance, node, received) -> tuple[np.ndarray, bool]:
    """Round, clamp to the node's alphabet, and map.  Returns (block, clipped)."""
    s = inst.alphabets[node].s_i
    q = round_block(received)
    clipped = bool(np.any(np.abs(q) > s))
    return relay_map(inst.relay_keys[node], np.clip(q, -s, s), inst.ell), clipped


@dataclass
class ChunkDecodeResult:
    """Outcome of one exhaustive inner decode.

    ``candidates`` are the messages with an accepting branch.  ``estimate``
    is what the sink forwards: the unique candidate; for an ambiguous chunk,
    the candidate with the largest summed branch weight (each branch weighted
    by the rounded-noise probability of its hypotheses, ties to the lower
    index); 0 when nothing is accepted.
    """

    outcome: Outcome
    estimate: int
    hypotheses_examined: int
    candidates: tuple = ()
    log2_weight: dict = field(default_factory=dict)

    @property
    def message(self) -> int | None:
        return self.estimate if self.outcome is Outcome.DECODED else None


def hypothesis_ceiling(inst: InnerCodeInstance, net: LayeredNetwork, bundle: NoiseSetBundle) -> int:
    return inst.message_count * bundle.q_size ** len(net.relays)


def decode_chunk(
    inst: InnerCodeInstance,
    net: LayeredNetwork,
    bundle: NoiseSetBundle,
    sink_observation,
    max_hypotheses: int = DEFAULT_MAX_HYPOTHESES,
) -> ChunkDecodeResult:
    return decode_chunks([inst], net, bundle, np.asarray(sink_observation)[None], max_hypotheses)[0]


def decode_chunks(
    instances,
    net: LayeredNetwork,
    bundle: NoiseSetBundle,
    sink_observations,
    max_hypotheses: int = DEFAULT_MAX_HYPOTHESES,
) -> list:
    """Exhaustively decode a batch of chunks sharing network, l and rate.

    For each message the decoder walks the relay layers in order.  At every
    relay it hypothesizes each quantized noise q in Q_l, sets the relay's
    rounded reception to [clean prediction] + q (clamped to the alphabet),
    and applies the relay map; hypotheses of relays in one layer combine as
    a Cartesian product.  At the sink a branch is accepted iff the residual
    [y_D] - [prediction] lies in Q_l.
    """
    instances = list(instances)
    if not instances:
        return []
    ell = instances[0].ell
    if bundle.ell != ell:
        raise ValueError(f"bundle is for l={bundle.ell}, code uses l={ell}")
    M = instances[0].message_count
    obs = round_block(np.asarray(sink_observations, dtype=complex))
    q = bundle.q_tuples
    qw = bundle.q_log_weights()

    branches = 1
    for l in range(2, net.num_layers):
        branches *= len(q) ** len(net.layer(l))
    if M * branches > max_hypotheses:
        raise HypothesisBudgetExceeded(
            f"{M} messages x {branches} noise branches exceeds budget {max_hypotheses}"
        )

    per_batch = max(1, _BATCH_ELEMENTS // max(1, M * branches * ell))
    results = []
    for start in range(0, len(instances), per_batch):
        block = instances[start : start + per_batch]
        results.extend(_decode_batch(block, net, bundle, obs[start : start + per_batch], q, qw, M, branches))
    return results


def _decode_batch(instances, net, bundle, obs, q, qw, M, branches):
    K = len(instances)
    ell = instances[0].ell
    chunk_of = np.repeat(np.arange(K), M)
    msg = np.tile(np.arange(M), K)
    book_keys = np.array([inst.codebook_key for inst in instances], dtype=np.uint64)

    # tx[node]: (C, B, l) transmit blocks per case and branch
    tx = {net.source: prf_gaussian(book_keys[chunk_of], msg[:, None], ell)[:, None, :]}
    logw = np.zeros((K * M, 1))

    for l in range(2, net.num_layers):
        outs, weights = [], []
        for node in net.layer(l):
            clean = _superpose(net, node, tx)
            base = round_block(clean)  # (C, B, l, 2)
            s = instances[0].alphabets[node].s_i
            cand = np.clip(base[:, :, None] + q[None, None], -s, s)  # (C, B, Q, l, 2)
            keys = np.array([inst.relay_keys[node] for inst in instances], dtype=np.uint64)
            outs.append(relay_map(keys[chunk_of][:, None, None], cand, ell))
            weights.append(qw)
        tx, logw = _product(net.layer(l), outs, weights, logw)

    pred = round_block(_superpose(net, net.sink, tx))
    resid = obs[chunk_of][:, None] - pred
    accepted = bundle.q_contains(resid)
    score = np.full(accepted.shape, -np.inf)
    score[accepted] = logw[accepted] + tuple_log2prob(resid[accepted], bundle.sigma)
    # total weight of the accepting branches of each message (log2 domain)
    with np.errstate(divide="ignore", invalid="ignore"):
        best = (logsumexp(score * _LN2, axis=1) / _LN2).reshape(K, M)
    any_acc = accepted.any(axis=1).reshape(K, M)

    results = []
    n_branches = logw.shape[1]
    for k in range(K):
        cands = tuple(int(u) for u in np.flatnonzero(any_acc[k]))
        weights = {u: float(best[k, u]) for u in cands}
        if len(cands) == 1:
            outcome, est = Outcome.DECODED, cands[0]
        elif cands:
            outcome = Outcome.AMBIGUOUS
            est = max(cands, key=lambda u: (weights[u], -u))
        else:
            outcome, est = Outcome.NO_CANDIDATE, 0
        results.append(ChunkDecodeResult(outcome, est, M * n_branches, cands, weights))
    return results


def _superpose(net, node, tx):
    total = None
    for j in net.in_neighbors(node):
        term = net.gains[(j, node)] * tx[j]
        total = term if total is None else total + term
    return total


def _product(nodes, outs, weights, logw):
    """Cartesian product of per-relay hypotheses; flattens into the branch axis."""
    C, B = logw.shape
    r = len(nodes)
    sizes = [o.shape[2] for o in outs]
    new_tx = {}
    w = logw.reshape((C, B) + (1,) * r)
    for idx, (node, out, wt) in enumerate(zip(nodes, outs, weights)):
        shape = [C, B] + [1] * r + [out.shape[-1]]
        shape[2 + idx] = sizes[idx]
        full = [C, B] + sizes + [out.shape[-1]]
        new_tx[node] = np.broadcast_to(out.reshape(shape), full).reshape(C, -1, out.shape[-1])
        wshape = [1, 1] + [1] * r
        wshape[2 + idx] = sizes[idx]
        w = w + wt.reshape(wshape)
    return new_tx, np.broadcast_to(w, [C, B] + sizes).reshape(C, -1)
