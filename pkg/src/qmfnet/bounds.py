"""Closed-form error bounds and scheme parameter selection.

Probabilities come back as base-2 logarithms.  A bound whose log is >= 0
says nothing and is flagged ``vacuous`` instead of being clamped.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .polar import entropy
from .quantization import clopper_pearson
from .seeding import substream

LOG2E = math.log2(math.e)
_EVENT_NAMES = ("clipping", "z_construction", "noise_outside_q", "indistinguishable")


class QOutOfRange(ValueError):
    pass


class BlockLengthTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class LogBound:
    log2_value: float

    @property
    def vacuous(self) -> bool:
        return self.log2_value >= 0.0

    @property
    def value(self) -> float:
        return 2.0 ** min(self.log2_value, 1024.0)

    def to_dict(self) -> dict:
        return {"log2": self.log2_value, "value": self.value, "vacuous": self.vacuous}


def short_block_length(c_bar: float) -> int:
    """``3 + ceil(log2 c_bar)``; only guarantees ``8 * 2^-l <= 1/c_bar``."""
    return 3 + math.ceil(math.log2(c_bar))


def sufficient_block_length(c_bar: float) -> int:
    """Smallest closed-form l with ``8 * 2^-l <= 1/c_bar^2``, which makes
    ``h(8 * 2^-l) <= 1/c_bar`` hold for every c_bar > 16."""
    return 3 + math.ceil(2.0 * math.log2(c_bar))


ELL_RULES = {"sufficient": sufficient_block_length, "short": short_block_length}


@dataclass(frozen=True)
class SchemeParams:
    c_bar: float
    n_nodes: int
    ell: int
    r_i: float
    p_i_bound: float
    r_o: float
    overall_rate: float
    feasible: bool
    entropy_check: bool
    ell_rule: str
    reason: str = ""

    @property
    def rate_floor(self) -> float:
        return self.c_bar - 16 * self.n_nodes - 2

    def to_dict(self) -> dict:
        return asdict(self)


def select_params(c_bar: float, n_nodes: int, ell: int | None = None, ell_rule: str = "sufficient") -> SchemeParams:
    """Inner/outer parameters for a cut-set value ``c_bar`` on ``n_nodes`` nodes.

    ``ell`` overrides the block-length rule.  ``entropy_check`` records
    whether ``h(2 P_I) <= 1/c_bar`` under the pessimistic ``P_I = 4 * 2^-l``.
    """
    if c_bar <= 0:
        raise ValueError("c_bar must be positive")
    if n_nodes < 2:
        raise ValueError("a network has at least a source and a sink")
    if ell is None:
        ell = ELL_RULES[ell_rule](c_bar)
        rule = ell_rule
    else:
        rule = "override"
    ell = max(int(ell), 1)
    r_i = c_bar - 16 * n_nodes - 1
    p_i = 4.0 * 2.0**-ell
    h2 = entropy(min(2.0 * p_i, 1.0))
    r_o = 1.0 - h2
    feasible = r_i > 0
    reason = "" if feasible else f"inner rate {r_i:g} <= 0 needs c_bar > {16 * n_nodes + 1}"
    return SchemeParams(
        c_bar=float(c_bar),
        n_nodes=int(n_nodes),
        ell=ell,
        r_i=float(r_i),
        p_i_bound=p_i,
        r_o=r_o,
        overall_rate=r_i * r_o if feasible else 0.0,
        feasible=feasible,
        entropy_check=h2 <= 1.0 / c_bar,
        ell_rule=rule,
        reason=reason,
    )


def rate_gap_holds(params: SchemeParams) -> bool:
    """Overall rate at least ``c_bar - 16|N| - 2``; False when infeasible."""
    return params.feasible and params.overall_rate >= params.rate_floor


def mimo_information(singular_values) -> float:
    s = np.asarray(singular_values, dtype=float)
    return float(np.sum(np.log2(1.0 + s**2)))


def box_bound(singular_values, n_rx: int, sigma_sq: float, ell: int) -> LogBound:
    """log2 bound on P(H x_t + r_t rounds into {-1,0,1} for every t).

    The value is ``-l (I - (n_rx / sigma^2) log2 e)`` with
    ``I = sum log2(1 + s^2)``.  ``I`` is the unit-variance complex-input information of the channel;
    the input variance only enters the penalty term.
    """
    if sigma_sq <= 0:
        raise ValueError("sigma_sq must be positive")
    info = mimo_information(singular_values)
    return LogBound(-ell * (info - n_rx / sigma_sq * LOG2E))


def box_bound_for(h_matrix, sigma_sq: float, ell: int) -> LogBound:
    H = np.atleast_2d(np.asarray(h_matrix, dtype=complex))
    return box_bound(np.linalg.svd(H, compute_uv=False), H.shape[0], sigma_sq, ell)


@dataclass(frozen=True)
class MonteCarloEstimate:
    hits: int
    trials: int
    lower: float
    upper: float

    @property
    def estimate(self) -> float:
        return self.hits / self.trials if self.trials else float("nan")


def box_empirical(
    h_matrix,
    shifts,
    sigma_sq: float,
    ell: int,
    trials: int,
    seed: int,
    confidence: float = 0.99,
    batch: int = 1 << 16,
) -> MonteCarloEstimate:
    """Estimate P(for all t: ||H x_t + r_t||_inf <= sqrt 2), x_t ~ CN(0, sigma^2 I).

    ``||.||_inf`` is the largest real or imaginary component magnitude, so
    the event is that every component rounds into {-1, 0, 1}.  ``shifts`` is
    ``(l, n_rx)`` complex.
    """
    H = np.atleast_2d(np.asarray(h_matrix, dtype=complex))
    n_rx, n_tx = H.shape
    r = np.asarray(shifts, dtype=complex).reshape(ell, n_rx)
    rng = substream(seed, "box")
    std = math.sqrt(sigma_sq / 2.0)
    limit = math.sqrt(2.0)
    hits = 0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        x = (rng.standard_normal((b, ell, n_tx)) + 1j * rng.standard_normal((b, ell, n_tx))) * std
        v = x @ H.T + r
        ok = (np.abs(v.real) <= limit) & (np.abs(v.imag) <= limit)
        hits += int(ok.all(axis=(1, 2)).sum())
        done += b
    lo, hi = clopper_pearson(hits, trials, confidence)
    return MonteCarloEstimate(hits, trials, lo, hi)


def p_omega_bound(c_bar: float, n_nodes: int, ell: int) -> LogBound:
    return LogBound(-ell * (c_bar - 3 * n_nodes))


def indistinguishability_bound(params: SchemeParams) -> LogBound:
    return LogBound(-params.ell * (params.c_bar - 16 * params.n_nodes - params.r_i))


def with_inner_rate(params: SchemeParams, r_i: float) -> SchemeParams:
    d = params.to_dict()
    d["r_i"] = float(r_i)
    d["feasible"] = r_i > 0
    d["overall_rate"] = r_i * params.r_o if r_i > 0 else 0.0
    d["reason"] = "" if r_i > 0 else f"inner rate {r_i:g} <= 0"
    return SchemeParams(**d)


def chernoff_bound(k_chunks: int, q: float) -> float:
    """P(more than 2Kq of K Bernoulli(q) trials succeed) <= exp(-0.3 K q)."""
    if not 0.0 < q < 0.5:
        raise QOutOfRange(f"q={q} outside (0, 1/2)")
    return math.exp(-0.3 * k_chunks * q)


def chernoff_exponent_gap(q):
    """``(1-2q) ln((1-q)/(1-2q)) - 2q ln 2 + 0.3 q``; non-positive on (0, 1/2)."""
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 0.5)):
        raise QOutOfRange("q must lie in (0, 1/2)")
    return (1 - 2 * q) * np.log((1 - q) / (1 - 2 * q)) - 2 * q * math.log(2) + 0.3 * q


def bernoulli_tail(k_chunks: int, q: float, trials: int, seed: int) -> MonteCarloEstimate:
    """Monte Carlo P(Binomial(K, q) >= 2Kq)."""
    counts = substream(seed, "chernoff").binomial(k_chunks, q, size=trials)
    hits = int(np.count_nonzero(counts >= 2 * k_chunks * q))
    lo, hi = clopper_pearson(hits, trials, 0.99)
    return MonteCarloEstimate(hits, trials, lo, hi)


@dataclass(frozen=True)
class ErrorBudget:
    ell: int
    n_nodes: int
    events: dict

    @property
    def total(self) -> float:
        return 4.0 * 2.0**-self.ell

    def to_dict(self) -> dict:
        return {"ell": self.ell, "n_nodes": self.n_nodes, "events": dict(self.events), "total": self.total}


def inner_error_budget(ell: int, n_nodes: int) -> ErrorBudget:
    """Per-event bounds on an inner chunk failure.

    Clipping and Q-misses are union bounds over the nodes, ``|N| 2^{-2l}``,
    which stay below ``2^{-l}`` only when ``l > log2 |N|``.
    """
    if not ell > math.log2(n_nodes):
        raise BlockLengthTooSmall(f"l={ell} must exceed log2({n_nodes})")
    per_node = n_nodes * 2.0 ** (-2 * ell)
    events = dict(zip(_EVENT_NAMES, (per_node, 2.0**-ell, per_node, 2.0**-ell)))
    return ErrorBudget(ell, n_nodes, events)
