"""End-to-end frames: outer polar code, scrambler, per-chunk inner codes.

A frame carries ``k`` message bits.  They are polar-encoded to ``M`` bits,
scrambled, zero-padded to ``N * b`` bits and cut into ``N`` chunks of
``b = ceil(r_i * l)`` bits, each read big-endian as an inner message.  The
sink decodes every chunk, reassembles the bits, drops the padding,
descrambles and runs the SC decoder.

All randomness for frame ``f`` derives from ``(seed, f)``: the message
(``"message"``), channel noise (``"noise"``), scrambler (``"perm"``,
``"mask"``) and the inner-code PRF keys (``derive_key(seed, "frame", f)``).
Changing the gains with the seed held fixed therefore gives paired runs.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import bounds
from .channel import propagate_layer
from .inner import (
    DEFAULT_MAX_HYPOTHESES,
    Outcome,
    compute_alphabets,
    decode_chunks,
    make_instance,
    relay_map,
)
from .network import LayeredNetwork, cutset_iid, network_from_dict, read_network
from .polar import PolarCode, construct, entropy, polar_decode, polar_encode
from .quantization import (
    NoiseSetBundle,
    build_zl_exact,
    build_zl_sampled,
    clopper_pearson,
    noiseless_bundle,
    round_block,
)
from .scrambler import descramble, make_scrambler, scramble
from .seeding import derive_key, prf_gaussian, resolve_seed, substream

SIGMA_CONVENTIONS = {"unit_component": 1.0, "unit_total": math.sqrt(0.5)}
MAX_DESIGN_CROSSOVER = 0.49
MIN_DESIGN_CROSSOVER = 1e-4

CSV_COLUMNS = (
    "frame",
    "chunks",
    "chunk_errors",
    "clip_declared",
    "noise_outside_q",
    "ambiguous",
    "no_candidate",
    "decoded_wrong",
    "ambiguous_chunks",
    "completeness_violations",
    "hypotheses",
    "bit_flips",
    "frame_error",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    network: object
    n: int
    frames: int = 0
    ell: int | None = None
    r_i: float | None = None
    seed: int | None = None
    sigma_convention: str = "unit_component"
    construction: str = "exact"
    zero_noise: bool = False
    gain_scale: float = 1.0
    outer_rate: float | None = None
    design_crossover: float | None = None
    calibration_chunks: int = 2000
    c_bar: float | None = None
    m_overrides: dict = field(default_factory=dict)
    max_hypotheses: int = DEFAULT_MAX_HYPOTHESES
    workers: int = 1
    output: str | None = None
    figures: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.network, LayeredNetwork):
            d["network"] = self.network.to_dict()
        return d


def config_from_mapping(doc, base_dir=None) -> SimulationConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    doc = dict(doc)
    known = set(SimulationConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("network", "n"):
        if key not in doc:
            raise ConfigError(f"config is missing {key!r}")
    net = doc["network"]
    if isinstance(net, str) and base_dir is not None and not os.path.isabs(net):
        doc["network"] = str(Path(base_dir) / net)
    if isinstance(doc.get("output"), str) and base_dir is not None and not os.path.isabs(doc["output"]):
        doc["output"] = str(Path(base_dir) / doc["output"])
    try:
        return SimulationConfig(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"unparseable config {path}: {exc}") from exc
    return config_from_mapping(doc, base_dir=path.parent)


def _network_of(cfg: SimulationConfig) -> LayeredNetwork:
    net = cfg.network
    if isinstance(net, LayeredNetwork):
        pass
    elif isinstance(net, dict):
        net = network_from_dict(net)
    elif isinstance(net, (str, os.PathLike)):
        try:
            net = read_network(net)
        except OSError as exc:
            raise ConfigError(f"cannot read network {net}: {exc}") from exc
    else:
        raise ConfigError("network must be a path, a mapping or a LayeredNetwork")
    return net if cfg.gain_scale == 1.0 else net.scaled(cfg.gain_scale)


def next_pow2(x: int) -> int:
    return 1 << max(0, math.ceil(math.log2(x))) if x > 1 else 1


@dataclass(frozen=True, eq=False)
class Simulation:
    """Everything shared by the frames of one campaign; read-only."""

    config: SimulationConfig
    seed: int
    net: LayeredNetwork
    cutset: object
    scheme_params: bounds.SchemeParams
    ell: int
    r_i: float
    bits_per_chunk: int
    n_chunks: int
    outer_length: int
    padding: int
    alphabets: dict
    bundle: NoiseSetBundle
    code: PolarCode | None
    design_crossover: float
    design_source: str
    calibration: dict | None

    @property
    def k(self) -> int:
        return 0 if self.code is None else self.code.k

    @property
    def channel_uses(self) -> int:
        return self.n_chunks * self.ell

    def layout(self) -> dict:
        requested = self.config.n // self.ell
        return {
            "ell": self.ell,
            "r_i": self.r_i,
            "bits_per_chunk": self.bits_per_chunk,
            "requested_chunks": requested,
            "chunks": self.n_chunks,
            "channel_uses": self.channel_uses,
            "outer_length": self.outer_length,
            "padding_bits": self.padding,
            "message_bits": self.k,
            "outer_rate": self.k / self.outer_length,
            "design_crossover": self.design_crossover,
            "design_source": self.design_source,
            "padding_note": (
                f"{requested} chunks x {self.bits_per_chunk} bits rounded up to a "
                f"length-{self.outer_length} polar code; {self.n_chunks} chunks sent, "
                f"last {self.padding} bits are zero padding"
            ),
        }


def _decoder_bundle(cfg: SimulationConfig, ell: int, seed: int) -> NoiseSetBundle:
    if cfg.sigma_convention not in SIGMA_CONVENTIONS:
        raise ConfigError(f"sigma_convention must be one of {sorted(SIGMA_CONVENTIONS)}")
    sigma = SIGMA_CONVENTIONS[cfg.sigma_convention]
    if cfg.zero_noise:
        return noiseless_bundle(ell, sigma)
    if cfg.construction == "exact":
        return build_zl_exact(ell, sigma)
    if cfg.construction == "sampled":
        return build_zl_sampled(ell, sigma, substream(seed, "zl"))
    raise ConfigError("construction must be 'exact' or 'sampled'")


def prepare(cfg: SimulationConfig) -> Simulation:
    """Resolve sizes, noise sets and the outer code (calibrating if needed)."""
    seed = resolve_seed(cfg.seed)
    net = _network_of(cfg)
    if cfg.frames < 0:
        raise ConfigError("frames must be >= 0")
    cut = cutset_iid(net)
    c_bar = cfg.c_bar if cfg.c_bar is not None else cut.c_bar_upper
    scheme = bounds.select_params(c_bar, len(net.nodes))

    ell = cfg.ell if cfg.ell is not None else scheme.ell
    if ell < 1:
        raise ConfigError("ell must be >= 1")
    r_i = cfg.r_i if cfg.r_i is not None else scheme.r_i
    if r_i <= 0:
        raise ConfigError(f"inner rate {r_i:g} is not positive; set r_i explicitly ({scheme.reason})")
    if cfg.n < ell or cfg.n % ell:
        raise ConfigError(f"n={cfg.n} is not a positive multiple of l={ell}")
    b = math.ceil(r_i * ell - 1e-12)
    outer = next_pow2((cfg.n // ell) * b)
    n_chunks = math.ceil(outer / b)

    alphabets = compute_alphabets(net, ell, overrides=cfg.m_overrides)
    bundle = _decoder_bundle(cfg, ell, seed)

    sim = Simulation(
        cfg, seed, net, cut, scheme, ell, r_i, b, n_chunks, outer,
        n_chunks * b - outer, alphabets, bundle, None, 0.5, "", None,
    )
    calibration = None
    if cfg.design_crossover is not None:
        design, source = float(cfg.design_crossover), "override"
    elif scheme.feasible and cfg.r_i is None and cfg.ell is None:
        design, source = 2.0 * scheme.p_i_bound, "scheme_bound"
    else:
        calibration = calibrate(sim, cfg.calibration_chunks)
        design, source = 2.0 * calibration["p_hat"], "calibration"
    design = min(max(design, MIN_DESIGN_CROSSOVER), MAX_DESIGN_CROSSOVER)
    rate = cfg.outer_rate if cfg.outer_rate is not None else 1.0 - entropy(design)
    if not 0.0 <= rate <= 1.0:
        raise ConfigError("outer_rate must lie in [0, 1]")
    code = construct(outer, design, rate)
    return replace(sim, code=code, design_crossover=design, design_source=source, calibration=calibration)


@dataclass
class ChunkBatch:
    """True per-chunk channel state and the sink's decode of each chunk."""

    messages: np.ndarray
    results: list
    clipped: np.ndarray
    noise_outside_q: np.ndarray

    @property
    def estimates(self) -> np.ndarray:
        return np.array([r.estimate for r in self.results], dtype=np.int64)

    @property
    def errors(self) -> np.ndarray:
        return self.estimates != self.messages

    @property
    def labels(self) -> list:
        out = []
        for r, clip, miss in zip(self.results, self.clipped, self.noise_outside_q):
            if clip:
                out.append(Outcome.CLIP_DECLARED)
            elif miss:
                out.append(Outcome.NOISE_OUTSIDE_Q)
            else:
                out.append(r.outcome)
        return out

    @property
    def completeness_violations(self) -> int:
        """Chunks whose true message had no accepting branch although every
        realized quantized noise was in Q and nothing was clipped."""
        return sum(
            1
            for u, r, clip, miss in zip(self.messages, self.results, self.clipped, self.noise_outside_q)
            if not clip and not miss and int(u) not in r.candidates
        )


def transmit_chunks(sim: Simulation, frame_key: int, messages, noise_source) -> ChunkBatch:
    """Send one inner message per chunk through the network and decode.

    ``noise_source`` is a Generator or ``None`` for a noiseless channel.
    """
    net, ell = sim.net, sim.ell
    messages = np.asarray(messages, dtype=np.int64)
    insts = [make_instance(net, ell, sim.r_i, frame_key, k, sim.alphabets) for k in range(len(messages))]
    book = np.array([i.codebook_key for i in insts], dtype=np.uint64)
    tx = {net.source: prf_gaussian(book, messages[:, None], ell)}
    clipped = np.zeros(len(messages), dtype=bool)
    miss = np.zeros(len(messages), dtype=bool)
    noise = None if sim.config.zero_noise else noise_source

    for l in range(1, net.num_layers):
        rx = propagate_layer(net, l, tx, noise)
        clean = propagate_layer(net, l, tx, None)
        for node, y in rx.items():
            q_true = round_block(y) - round_block(clean[node])
            miss |= ~sim.bundle.q_contains(q_true)
        if l + 1 == net.num_layers:
            sink_obs = rx[net.sink]
            break
        tx = {}
        for node, y in rx.items():
            s = sim.alphabets[node].s_i
            q = round_block(y)
            clipped |= np.any(np.abs(q) > s, axis=(-2, -1))
            keys = np.array([i.relay_keys[node] for i in insts], dtype=np.uint64)
            tx[node] = relay_map(keys, np.clip(q, -s, s), ell)

    results = decode_chunks(insts, net, sim.bundle, sink_obs, sim.config.max_hypotheses)
    return ChunkBatch(messages, results, clipped, miss)


def chunk_bits_to_messages(bits: np.ndarray, b: int) -> np.ndarray:
    weights = 1 << np.arange(b - 1, -1, -1, dtype=np.int64)
    return bits.reshape(-1, b).astype(np.int64) @ weights


def messages_to_chunk_bits(messages: np.ndarray, b: int) -> np.ndarray:
    shifts = np.arange(b - 1, -1, -1, dtype=np.int64)
    return ((np.asarray(messages, dtype=np.int64)[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def calibrate(sim: Simulation, chunks: int) -> dict:
    """Measure the inner chunk error rate on uniformly random messages."""
    if chunks < 1:
        raise ConfigError("calibration needs at least one chunk")
    errors = 0
    done = 0
    batch = 0
    M = 1 << sim.bits_per_chunk
    while done < chunks:
        n = min(sim.n_chunks, chunks - done)
        rng = substream(sim.seed, "calibration", batch)
        msgs = rng.integers(0, M, n)
        res = transmit_chunks(sim, derive_key(sim.seed, "calibration", batch), msgs, rng)
        errors += int(res.errors.sum())
        done += n
        batch += 1
    lo, hi = clopper_pearson(errors, chunks, 0.95)
    return {"chunks": chunks, "errors": errors, "p_hat": errors / chunks, "ci95": [lo, hi]}


@dataclass
class FrameTrace:
    frame_index: int
    message: np.ndarray
    decoded: np.ndarray
    scrambled: np.ndarray
    received_bits: np.ndarray
    chunks: ChunkBatch
    bit_flips_into_outer: int
    frame_error: bool

    @property
    def chunk_outcomes(self) -> list:
        return self.chunks.results

    @property
    def chunk_errors(self) -> int:
        return int(self.chunks.errors.sum())

    def failure_counts(self) -> dict:
        """Wrong chunks split by cause; sums to ``chunk_errors``."""
        counts = {"clip_declared": 0, "noise_outside_q": 0, "ambiguous": 0, "no_candidate": 0, "decoded_wrong": 0}
        names = {
            Outcome.CLIP_DECLARED: "clip_declared",
            Outcome.NOISE_OUTSIDE_Q: "noise_outside_q",
            Outcome.AMBIGUOUS: "ambiguous",
            Outcome.NO_CANDIDATE: "no_candidate",
            Outcome.DECODED: "decoded_wrong",
        }
        for wrong, label in zip(self.chunks.errors, self.chunks.labels):
            if wrong:
                counts[names[label]] += 1
        return counts

    def row(self) -> dict:
        r = {"frame": self.frame_index, "chunks": len(self.chunks.messages), "chunk_errors": self.chunk_errors}
        r.update(self.failure_counts())
        r["ambiguous_chunks"] = sum(1 for x in self.chunks.results if x.outcome is Outcome.AMBIGUOUS)
        r["completeness_violations"] = self.chunks.completeness_violations
        r["hypotheses"] = sum(x.hypotheses_examined for x in self.chunks.results)
        r["bit_flips"] = self.bit_flips_into_outer
        r["frame_error"] = int(self.frame_error)
        return r


def run_frame(sim: Simulation, frame_index: int) -> FrameTrace:
    seed, M, b = sim.seed, sim.outer_length, sim.bits_per_chunk
    w = substream(seed, "message", frame_index).integers(0, 2, sim.k, dtype=np.uint8)
    codeword = polar_encode(sim.code, w)
    scr = make_scrambler(M, seed, frame_index)
    sent = scramble(scr, codeword)
    padded = np.concatenate([sent, np.zeros(sim.padding, dtype=np.uint8)])
    msgs = chunk_bits_to_messages(padded, b)

    chunks = transmit_chunks(
        sim, derive_key(seed, "frame", frame_index), msgs, substream(seed, "noise", frame_index)
    )
    received = messages_to_chunk_bits(chunks.estimates, b)[:M]
    flips = int(np.count_nonzero(received != sent))
    decoded = polar_decode(sim.code, descramble(scr, received), sim.design_crossover)
    return FrameTrace(frame_index, w, decoded, sent, received, chunks, flips, bool(np.any(decoded != w)))


_worker_sim = None


def _worker_init(cfg):
    global _worker_sim
    _worker_sim = prepare(cfg)


def _worker_rows(indices):
    return [run_frame(_worker_sim, f).row() for f in indices]


def frame_rows(sim: Simulation, workers: int = 1) -> list:
    frames = sim.config.frames
    if workers <= 1 or frames < 2:
        return [run_frame(sim, f).row() for f in range(frames)]
    # workers rebuild the simulation from a config with everything pinned
    pinned = replace(
        sim.config,
        seed=sim.seed,
        design_crossover=sim.design_crossover,
        outer_rate=sim.k / sim.outer_length,
    )
    blocks = [list(range(s, frames, workers)) for s in range(workers)]
    with ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(pinned,)) as pool:
        parts = list(pool.map(_worker_rows, blocks))
    rows = [r for part in parts for r in part]
    return sorted(rows, key=lambda r: r["frame"])


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _na(x):
    return "n/a" if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def summarize(sim: Simulation, rows) -> dict:
    F = len(rows)
    N = sim.n_chunks
    summary = {
        "seed": sim.seed,
        "frames": F,
        "layout": sim.layout(),
        "cutset": sim.cutset.to_dict(),
        "scheme_params": sim.scheme_params.to_dict(),
        "decoder_noise_set": {
            "construction": sim.bundle.construction,
            "sigma": sim.bundle.sigma,
            "z_size": sim.bundle.z_size,
        },
        "calibration": sim.calibration if sim.calibration is not None else "n/a",
    }
    try:
        summary["inner_error_budget"] = bounds.inner_error_budget(sim.ell, len(sim.net.nodes)).to_dict()
    except bounds.BlockLengthTooSmall as exc:
        summary["inner_error_budget"] = f"n/a ({exc})"
    if F == 0:
        for key in ("p_i_hat", "fer", "chunk_failures", "chernoff", "chunk_error_mean", "completeness_violations"):
            summary[key] = "n/a"
        return summary

    total_chunks = F * N
    errs = np.array([r["chunk_errors"] for r in rows])
    p_hat = errs.sum() / total_chunks
    fe = sum(r["frame_error"] for r in rows)
    summary["p_i_hat"] = {"value": p_hat, "ci95": list(clopper_pearson(int(errs.sum()), total_chunks, 0.95))}
    summary["fer"] = {"value": fe / F, "errors": fe, "ci95": list(clopper_pearson(fe, F, 0.95))}
    summary["chunk_failures"] = {
        k: int(sum(r[k] for r in rows))
        for k in ("clip_declared", "noise_outside_q", "ambiguous", "no_candidate", "decoded_wrong")
    }
    summary["completeness_violations"] = int(sum(r["completeness_violations"] for r in rows))
    summary["mean_bit_flips"] = float(np.mean([r["bit_flips"] for r in rows]))

    se = float(errs.std(ddof=1) / math.sqrt(F)) if F > 1 else None
    ref = sim.calibration["p_hat"] if sim.calibration else p_hat
    summary["chunk_error_mean"] = {
        "observed": float(errs.mean()),
        "expected": N * ref,
        "reference": "calibration" if sim.calibration else "campaign",
        "std_error": _na(se),
    }

    if 0.0 < p_hat < 0.5:
        bound = bounds.chernoff_bound(N, p_hat)
        threshold = 2 * N * p_hat
        frac = float(np.mean(errs >= threshold))
        slack = 3 * math.sqrt(bound * (1 - bound) / F)
        summary["chernoff"] = {
            "chunks_per_frame": N,
            "q": p_hat,
            "threshold": threshold,
            "empirical": frac,
            "bound": bound,
            "within_bound": frac <= bound + slack,
        }
    else:
        summary["chernoff"] = "n/a"
    return summary


@dataclass
class CampaignReport:
    rows: list
    summary: dict
    csv_text: str
    paths: dict


def run_campaign(config, out_dir=None, workers: int | None = None) -> CampaignReport:
    """Run every frame of a config; write CSV, summary and figures if
    ``out_dir`` (or ``config.output``) is set."""
    cfg = load_config(config) if isinstance(config, (str, os.PathLike)) else config
    sim = prepare(cfg)
    rows = frame_rows(sim, workers if workers is not None else cfg.workers)
    summary = summarize(sim, rows)
    text = rows_to_csv(rows)
    paths = {}
    target = out_dir if out_dir is not None else cfg.output
    if target is not None:
        target = Path(target)
        try:
            target.mkdir(parents=True, exist_ok=True)
            paths["csv"] = target / "frames.csv"
            paths["csv"].write_text(text)
            paths["summary"] = target / "summary.json"
            paths["summary"].write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
        except OSError as exc:
            raise ConfigError(f"cannot write results to {target}: {exc}") from exc
        if cfg.figures and rows:
            from .plotting import campaign_figures

            paths.update(campaign_figures(rows, summary, target))
    return CampaignReport(rows, summary, text, paths)


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (set, frozenset, tuple)):
        return sorted(obj) if isinstance(obj, (set, frozenset)) else list(obj)
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")
