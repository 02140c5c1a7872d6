"""Rounding, quantized noise, and the candidate noise sets Z_l / Q_l.

Gaussian-integer l-tuples are int64 arrays of shape ``(l, 2)`` holding
(real, imag) pairs; batches add leading axes.  Rounding is to the nearest
integer with halves going away from zero.

A tuple's probability is the product of the bin probabilities of its 2l real
components, each the mass a N(0, sigma^2) sample puts on the rounding cell
``[i - 1/2, i + 1/2)``.  Z_l keeps the tuples with log2 probability at least
``-9 l``; Q_l is Z_l dilated by every residue tuple with components in
{-1, 0, 1}.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np
from scipy import stats
from scipy.special import erfc

MAX_EXACT_SET = 10**7
MAX_Q_MATERIALIZE = 2 * 10**6
_SQRT2 = math.sqrt(2.0)


class SetTooLarge(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def round_complex(w: complex) -> complex:
    """Nearest Gaussian integer, componentwise, ties away from zero."""
    w = complex(w)
    return complex(int(round_half_away(w.real)), int(round_half_away(w.imag)))


def round_block(block) -> np.ndarray:
    """Round a complex array to Gaussian integers; returns int64 ``(..., 2)``."""
    block = np.asarray(block, dtype=complex)
    return np.stack([round_half_away(block.real), round_half_away(block.imag)], axis=-1)


def quantized_noise(received, clean) -> np.ndarray:
    received = np.asarray(received, dtype=complex)
    clean = np.asarray(clean, dtype=complex)
    if received.shape != clean.shape:
        raise LengthMismatch(f"received {received.shape} vs clean {clean.shape}")
    return round_block(received) - round_block(clean)


def residue(z1, z2):
    """[z1 + z2] - [z1] - [z2]; components always lie in {-1, 0, 1}."""
    if np.ndim(z1) == 0 and np.ndim(z2) == 0:
        return round_complex(complex(z1) + complex(z2)) - round_complex(z1) - round_complex(z2)
    r = round_block(np.asarray(z1) + np.asarray(z2)) - round_block(z1) - round_block(z2)
    return r[..., 0] + 1j * r[..., 1]


def bin_probability(i, sigma: float = 1.0):
    """P(round(X) = i) for X ~ N(0, sigma^2)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    a = np.abs(np.asarray(i, dtype=float))
    s = sigma * _SQRT2
    # upper-tail form keeps precision far from the origin
    upper = 0.5 * (erfc((a - 0.5) / s) - erfc((a + 0.5) / s))
    centre = 1.0 - erfc(0.5 / s)
    out = np.where(a == 0, centre, upper)
    return float(out) if np.ndim(out) == 0 else out


def log2_bin_probability(i, sigma: float = 1.0):
    with np.errstate(divide="ignore"):
        return np.log2(bin_probability(i, sigma))


@lru_cache(maxsize=64)
def _log2_bin_table(sigma: float, radius: int) -> np.ndarray:
    return log2_bin_probability(np.arange(radius + 1), sigma)


def tuple_log2prob(tuples, sigma: float = 1.0) -> np.ndarray:
    """log2 probability of each l-tuple; sums components in a fixed order."""
    t = np.asarray(tuples, dtype=np.int64)
    flat = np.abs(t.reshape(t.shape[:-2] + (t.shape[-2] * t.shape[-1],)))
    radius = int(flat.max()) if flat.size else 0
    # power-of-two table sizes keep the cache small
    lp = _log2_bin_table(float(sigma), 1 << max(radius, 1).bit_length())[flat]
    total = np.zeros(flat.shape[:-1])
    for j in range(flat.shape[-1]):
        total = total + lp[..., j]
    return total


def coupon_sample_count(ell: int) -> int:
    """ceil((10/9) (1/Q) ln(1/Q)) with Q = 2^(-9 l), i.e. ceil(10 l 2^(9l) ln 2)."""
    return math.ceil(10 * ell * 2 ** (9 * ell) * math.log(2))


def residue_tuples(ell: int) -> np.ndarray:
    """All 9^l residue tuples, shape ``(9^l, l, 2)``."""
    comps = np.array(list(itertools.product((-1, 0, 1), repeat=2 * ell)), dtype=np.int64)
    return comps.reshape(-1, ell, 2)


class TupleIndex:
    """Packed-key index for fast vectorized membership of integer tuples.

    Small key spaces get a dense boolean table; larger ones a sorted array.
    """

    DENSE_LIMIT = 1 << 22

    def __init__(self, tuples: np.ndarray):
        t = np.asarray(tuples, dtype=np.int64)
        self.shape = t.shape[1:]
        flat = t.reshape(len(t), -1)
        self.dim = flat.shape[1]
        self.radius = int(np.abs(flat).max()) if len(flat) else 0
        self.base = 2 * self.radius + 1
        if self.dim * math.log2(self.base) >= 62:
            raise SetTooLarge("tuples too long to pack into 64-bit keys")
        self._weights = self.base ** np.arange(self.dim, dtype=np.int64)
        self.keys = np.unique(self._pack(flat))
        self.dense = None
        if self.base**self.dim <= self.DENSE_LIMIT:
            self.dense = np.zeros(self.base**self.dim, dtype=bool)
            self.dense[self.keys] = True

    def _pack(self, flat):
        return ((flat + self.radius) * self._weights).sum(axis=-1)

    def __len__(self):
        return len(self.keys)

    def contains(self, tuples) -> np.ndarray:
        t = np.asarray(tuples, dtype=np.int64)
        flat = t.reshape(t.shape[: t.ndim - len(self.shape)] + (self.dim,))
        inside = np.all(np.abs(flat) <= self.radius, axis=-1)
        keys = self._pack(np.where(inside[..., None], flat, 0))
        if self.dense is not None:
            return inside & self.dense[keys]
        if len(self.keys) == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.clip(np.searchsorted(self.keys, keys), 0, len(self.keys) - 1)
        return inside & (self.keys[pos] == keys)


@dataclass(frozen=True, eq=False)
class NoiseSetBundle:
    """Z_l (explicit), R_l (implicit), and Q_l (membership / lazy enumeration).

    ``construction`` is ``"deterministic"``, ``"sampled"`` or ``"noiseless"``;
    the noiseless bundle holds only the zero tuple and no residues and is used
    when the channel noise is switched off.
    """

    ell: int
    sigma: float
    z_tuples: np.ndarray
    z_log_threshold: float
    construction: str
    sample_count: int | None = None
    shifts: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.shifts is None:
            object.__setattr__(self, "shifts", residue_tuples(self.ell))

    @property
    def z_size(self) -> int:
        return len(self.z_tuples)

    @property
    def r_cardinality(self) -> int:
        return len(self.shifts)

    @cached_property
    def z_index(self) -> TupleIndex:
        return TupleIndex(self.z_tuples)

    def in_z(self, tuples) -> np.ndarray:
        """Vectorized Z_l membership.

        A deterministic bundle is exactly the threshold set, so its
        membership is the threshold predicate; the others use the stored set.
        """
        if self.construction == "deterministic":
            return tuple_log2prob(tuples, self.sigma) >= self.z_log_threshold
        return self.z_index.contains(tuples)

    @cached_property
    def q_tuples(self) -> np.ndarray:
        """Materialized Q_l, sorted; guarded against blow-up."""
        if self.z_size * self.r_cardinality > MAX_Q_MATERIALIZE:
            raise SetTooLarge(
                f"|Z| * 9^l = {self.z_size * self.r_cardinality} exceeds {MAX_Q_MATERIALIZE}"
            )
        cand = (self.z_tuples[:, None] + self.shifts[None]).reshape(-1, self.ell * 2)
        uniq = np.unique(cand, axis=0)
        return uniq.reshape(-1, self.ell, 2)

    @cached_property
    def q_index(self) -> TupleIndex:
        return TupleIndex(self.q_tuples)

    @property
    def q_size(self) -> int:
        return len(self.q_tuples)

    def q_contains(self, tuples) -> np.ndarray:
        """Vectorized Q_l membership.

        Uses the materialized index when it is small, otherwise tests every
        residue shift against the Z_l index.
        """
        t = np.asarray(tuples, dtype=np.int64)
        if self.z_size * self.r_cardinality <= MAX_Q_MATERIALIZE:
            return self.q_index.contains(t)
        hit = np.zeros(t.shape[:-2], dtype=bool)
        for r in self.shifts:
            hit |= self.z_index.contains(t - r)
        return hit

    def q_log_weights(self) -> np.ndarray:
        """log2 probability of each Q_l element, read as a rounded-noise tuple."""
        return tuple_log2prob(self.q_tuples, self.sigma)


def q_membership(bundle: NoiseSetBundle, t) -> bool:
    t = np.asarray(t, dtype=np.int64).reshape(bundle.ell, 2)
    return bool(bundle.q_contains(t[None])[0])


def _component_range(ell: int, sigma: float, threshold: float) -> np.ndarray:
    lp0 = float(log2_bin_probability(0, sigma))
    slack = threshold - (2 * ell - 1) * lp0
    i = 0
    while log2_bin_probability(i + 1, sigma) >= slack:
        i += 1
    return np.arange(-i, i + 1, dtype=np.int64)


def build_zl_exact(ell: int, sigma: float = 1.0, max_size: int = MAX_EXACT_SET) -> NoiseSetBundle:
    """Enumerate every l-tuple whose probability is at least 2^(-9l)."""
    threshold = -9.0 * ell
    values = _component_range(ell, sigma, threshold)
    lp = log2_bin_probability(values, sigma)
    lp0 = float(log2_bin_probability(0, sigma))
    d = 2 * ell
    partial = np.zeros((1, 0), dtype=np.int64)
    score = np.zeros(1)
    for k in range(d):
        optimistic = (d - k - 1) * lp0
        grown = score[:, None] + lp[None, :]
        keep = grown + optimistic >= threshold
        rows, cols = np.nonzero(keep)
        if len(rows) > max_size:
            raise SetTooLarge(f"Z_{ell} enumeration exceeds {max_size} partial tuples")
        partial = np.concatenate([partial[rows], values[cols][:, None]], axis=1)
        score = grown[rows, cols]
    tuples = partial.reshape(-1, ell, 2)
    # re-score with the canonical summation so every path agrees bit for bit
    tuples = tuples[tuple_log2prob(tuples, sigma) >= threshold]
    return NoiseSetBundle(ell, sigma, _sorted(tuples), threshold, "deterministic")


def build_zl_sampled(
    ell: int,
    sigma: float = 1.0,
    noise_source: np.random.Generator | None = None,
    sample_count: int | None = None,
    batch: int = 1 << 20,
) -> NoiseSetBundle:
    """Coupon-collector construction: keep the distinct high-probability draws."""
    if sample_count is None:
        if ell > 2:
            raise SetTooLarge("sampled construction is limited to l <= 2 unless sample_count is given")
        sample_count = coupon_sample_count(ell)
    rng = noise_source if noise_source is not None else np.random.default_rng()
    threshold = -9.0 * ell
    found = []
    remaining = sample_count
    while remaining > 0:
        m = min(batch, remaining)
        draws = round_half_away(rng.standard_normal((m, ell, 2)) * sigma)
        draws = draws[tuple_log2prob(draws, sigma) >= threshold]
        found.append(np.unique(draws.reshape(len(draws), -1), axis=0))
        remaining -= m
    flat = np.unique(np.concatenate(found), axis=0) if found else np.zeros((0, 2 * ell), np.int64)
    return NoiseSetBundle(ell, sigma, _sorted(flat.reshape(-1, ell, 2)), threshold, "sampled", sample_count)


def noiseless_bundle(ell: int, sigma: float = 1.0) -> NoiseSetBundle:
    zero = np.zeros((1, ell, 2), dtype=np.int64)
    return NoiseSetBundle(ell, sigma, zero, 0.0, "noiseless", None, shifts=zero.copy())


def _sorted(tuples: np.ndarray) -> np.ndarray:
    if len(tuples) == 0:
        return tuples
    flat = tuples.reshape(len(tuples), -1)
    order = np.lexsort(flat.T[::-1])
    return np.ascontiguousarray(tuples[order])


@dataclass(frozen=True)
class TailEstimate:
    misses: int
    trials: int
    estimate: float
    lower: float
    upper: float
    confidence: float


def clopper_pearson(k: int, n: int, confidence: float = 0.99) -> tuple[float, float]:
    """One-sided Clopper-Pearson bounds at level ``confidence`` each."""
    if n == 0:
        return 0.0, 1.0
    lo = 0.0 if k == 0 else float(stats.beta.ppf(1 - confidence, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(confidence, k + 1, n - k))
    return lo, hi


def tail_probability_zl(
    bundle: NoiseSetBundle,
    trials: int,
    noise_source: np.random.Generator,
    confidence: float = 0.99,
    batch: int = 1 << 18,
) -> TailEstimate:
    """Monte Carlo estimate of P(rounded Gaussian l-tuple not in Z_l)."""
    misses = 0
    remaining = trials
    while remaining > 0:
        m = min(batch, remaining)
        draws = round_half_away(noise_source.standard_normal((m, bundle.ell, 2)) * bundle.sigma)
        misses += int(np.count_nonzero(~bundle.in_z(draws)))
        remaining -= m
    lo, hi = clopper_pearson(misses, trials, confidence)
    return TailEstimate(misses, trials, misses / trials if trials else 0.0, lo, hi, confidence)


def gaussian_tail_upper(x: float, sigma: float = 1.0) -> float:
    """Upper bound on P(X > x), X ~ N(0, sigma^2), x > 0 (Abramowitz-Stegun 7.1.13)."""
    y = x / (sigma * _SQRT2)
    return math.exp(-y * y) / (math.sqrt(math.pi) * (y + math.sqrt(y * y + 4.0 / math.pi)))


@dataclass(frozen=True)
class MomentBound:
    k: float
    value: float
    truncation_error: float
    terms: int

    @property
    def upper(self) -> float:
        return self.value + self.truncation_error


def inverse_moment(k: float = 0.6, sigma: float = 1.0, terms: int = 30) -> MomentBound:
    """E[p^(-k)([z_R])] = sum_i c_i^(1-k), truncated at |i| <= terms.

    The dropped tail is bounded with c_i <= P(X > i - 1/2) and the
    Abramowitz-Stegun tail inequality, summed until the terms vanish.
    """
    i = np.arange(-terms, terms + 1)
    value = float(np.sum(bin_probability(i, sigma) ** (1.0 - k)))
    err = 0.0
    j = terms + 1
    while True:
        term = 2.0 * gaussian_tail_upper(j - 0.5, sigma) ** (1.0 - k)
        err += term
        if term < 1e-300 or term < 1e-18 * err:
            break
        j += 1
    return MomentBound(k, value, err, terms)


def moment_tail_bound(ell: int, k: float = 0.6, sigma: float = 1.0) -> float:
    """Markov bound (2^(-9k) E[p^(-k)]^2)^l on P(tuple not in Z_l)."""
    m = inverse_moment(k, sigma).upper
    return (2.0 ** (-9.0 * k) * m * m) ** ell


def with_threshold(bundle: NoiseSetBundle, threshold: float) -> NoiseSetBundle:
    """Same bundle with a different Z threshold (only meaningful for deterministic bundles)."""
    return replace(bundle, z_log_threshold=threshold)


def format_noise_set(bundle: NoiseSetBundle) -> str:
    """Header lines (``# key: value``) then one tuple per line as
    ``re_1 im_1 ... re_l im_l``, in sorted order."""
    header = {
        "ell": bundle.ell,
        "sigma": repr(float(bundle.sigma)),
        "threshold_log2": repr(float(bundle.z_log_threshold)),
        "construction": bundle.construction,
        "sample_count": "n/a" if bundle.sample_count is None else bundle.sample_count,
        "size": bundle.z_size,
    }
    lines = [f"# {k}: {v}" for k, v in header.items()]
    lines += [" ".join(map(str, t)) for t in bundle.z_tuples.reshape(bundle.z_size, -1).tolist()]
    return "\n".join(lines) + "\n"


def parse_noise_set(text: str) -> NoiseSetBundle:
    header = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
        elif line.strip():
            rows.append([int(v) for v in line.split()])
    ell = int(header["ell"])
    tuples = np.array(rows, dtype=np.int64).reshape(-1, ell, 2)
    count = header.get("sample_count", "n/a")
    return NoiseSetBundle(
        ell,
        float(header["sigma"]),
        tuples,
        float(header["threshold_log2"]),
        header["construction"],
        None if count == "n/a" else int(count),
    )
