"""Acceptance criteria 1-12, one test each.

Each test records a ``CRITERION n: PASS|FAIL ...`` line that is printed in
the terminal summary, then asserts.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import CRITERIA
from qmfnet import bounds
from qmfnet.network import cutset_iid, diamond_network, line_network
from qmfnet.pipeline import SimulationConfig, prepare, run_frame
from qmfnet.polar import construct, polar_decode, polar_encode
from qmfnet.quantization import (
    build_zl_exact,
    build_zl_sampled,
    clopper_pearson,
    inverse_moment,
    residue,
    tail_probability_zl,
)
from qmfnet.scrambler import descramble, identity_scrambler, make_scrambler, scramble
from qmfnet.seeding import substream


def record(n, ok, detail, elapsed=None):
    tail = f" ({elapsed:.1f}s)" if elapsed is not None else ""
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}{tail}"
    CRITERIA.append(line)
    print(line)
    return ok


def test_criterion_01_residue_range():
    t = time.perf_counter()
    rng = substream(1, "acceptance-residue")
    z = rng.normal(scale=3.0, size=(2, 1_000_000, 2))
    r = residue(z[0], z[1])
    ok = bool(np.isin(r.real, (-1, 0, 1)).all() and np.isin(r.imag, (-1, 0, 1)).all())
    dt = time.perf_counter() - t
    assert record(1, ok and dt < 5, f"10^6 pairs, residue components in {{-1,0,1}}: {ok}", dt)


def test_criterion_02_z1_oracle():
    t = time.perf_counter()
    exact = build_zl_exact(1, 1.0)
    target = {tuple(x.ravel()) for x in exact.z_tuples}
    failures = 0
    for seed in range(200):
        sampled = build_zl_sampled(1, 1.0, substream(seed, "acceptance-z1"), sample_count=3550)
        failures += {tuple(x.ravel()) for x in sampled.z_tuples} != target
    dt = time.perf_counter() - t
    ok = exact.z_size == 29 and failures / 200 <= 0.5 and dt < 30
    assert record(2, ok, f"|Z_1| = {exact.z_size}, sampled mismatch {failures}/200", dt)


def test_criterion_03_tail_bound():
    t = time.perf_counter()
    parts = []
    ok = True
    for ell in (1, 2, 3):
        est = tail_probability_zl(build_zl_exact(ell, 1.0), 1_000_000, substream(ell, "acceptance-tail"), 0.99)
        ok &= est.upper <= 2.0 ** (-2 * ell)
        parts.append(f"l={ell}: {est.estimate:.2e} (99% upper {est.upper:.2e} vs {2.0 ** (-2 * ell):.2e})")
    dt = time.perf_counter() - t
    assert record(3, ok and dt < 60, "; ".join(parts), dt)


def test_criterion_04_moment_bound():
    t = time.perf_counter()
    m = inverse_moment(0.6, 1.0)
    dt = time.perf_counter() - t
    ok = m.upper <= 2.9 and dt < 1
    assert record(4, ok, f"E[p^-0.6] = {m.value:.6f} + truncation {m.truncation_error:.1e} <= 2.9", dt)


def test_criterion_05_box_bound():
    t = time.perf_counter()
    rng = substream(5, "acceptance-box")
    checked = worst = 0
    violations = 0
    attempts = 0
    while checked < 20:
        attempts += 1
        n_rx, n_tx = rng.integers(1, 3, 2)
        ell = int(rng.integers(1, 4))
        H = (rng.normal(size=(n_rx, n_tx)) + 1j * rng.normal(size=(n_rx, n_tx))) * rng.uniform(0.5, 3.0)
        sigma_sq = rng.uniform(0.5, 4.0)
        bound = bounds.box_bound_for(H, sigma_sq, ell)
        if bound.vacuous:
            continue
        shifts = rng.uniform(-1, 1, (ell, n_rx)) + 1j * rng.uniform(-1, 1, (ell, n_rx))
        est = bounds.box_empirical(H, shifts, sigma_sq, ell, 100_000, seed=attempts)
        violations += est.estimate > bound.value
        worst = max(worst, est.estimate / bound.value)
        checked += 1
    dt = time.perf_counter() - t
    ok = violations == 0 and dt < 120
    assert record(5, ok, f"20 non-vacuous instances, violations {violations}, max estimate/bound {worst:.3f}", dt)


def test_criterion_06_chernoff():
    t = time.perf_counter()
    q = np.linspace(0.0, 0.5, 10_002)[1:-1]
    gap = bounds.chernoff_exponent_gap(q)
    est = bounds.bernoulli_tail(1000, 0.01, 100_000, seed=6)
    b = math.exp(-3)
    se = math.sqrt(b * (1 - b) / est.trials)
    dt = time.perf_counter() - t
    ok = bool((gap <= 0).all()) and est.estimate <= b + 3 * se and dt < 30
    detail = f"max exponent gap {gap.max():.2e} <= 0; tail {est.estimate:.4f} <= e^-3 + 3SE = {b + 3 * se:.4f}"
    assert record(6, ok, detail, dt)


def test_criterion_07_parameter_arithmetic():
    t = time.perf_counter()
    bad = 0
    cases = 0
    short_fail = 0
    for c_bar in range(17, 201):
        for n in range(2, 13):
            cases += 1
            p = bounds.select_params(c_bar, n)
            bad += not p.entropy_check
            bad += p.feasible != (c_bar > 16 * n + 1)
            bad += p.feasible and not bounds.rate_gap_holds(p)
            short_fail += not bounds.select_params(c_bar, n, ell_rule="short").entropy_check
    dt = time.perf_counter() - t
    ok = bad == 0 and dt < 1
    CRITERIA.append(
        f"CRITERION 7 (info): l = 3 + ceil(log2 c_bar) misses h(8*2^-l) <= 1/c_bar on "
        f"{short_fail}/{cases} grid points; the default rule l = 3 + ceil(2 log2 c_bar) is used"
    )
    assert record(7, ok, f"{cases} (c_bar, |N|) points, {bad} violations", dt)


def _timing_factor():
    times = {}
    for m in range(8, 15):
        n = 2**m
        code = construct(n, 0.05, 0.5)
        words = np.zeros((32, n), dtype=np.uint8)
        best = math.inf
        for _ in range(3):
            s = time.perf_counter()
            polar_decode(code, words)
            best = min(best, time.perf_counter() - s)
        times[m] = best
    ms = np.array(sorted(times))
    slope = np.polyfit(ms, np.log2([times[m] for m in ms]), 1)[0]
    return 2.0**slope


def test_criterion_08_polar_codec():
    t = time.perf_counter()
    round_trip = True
    for m in range(1, 15):
        for rate in (0.25, 0.5, 0.75):
            code = construct(2**m, 0.05, rate)
            msg = substream(m, "acceptance-polar", int(rate * 4)).integers(0, 2, (4, code.k), dtype=np.uint8)
            round_trip &= np.array_equal(polar_decode(code, polar_encode(code, msg)), msg)
    code = construct(1024, 0.05, 0.5)
    rng = substream(8, "acceptance-linear")
    a, b = rng.integers(0, 2, (2, 1000, code.k), dtype=np.uint8)
    linear = np.array_equal(polar_encode(code, a ^ b), polar_encode(code, a) ^ polar_encode(code, b))
    factor = _timing_factor()

    code = construct(1024, 0.02, 0.5)
    rng = substream(8, "acceptance-bsc")
    msg = rng.integers(0, 2, (1000, code.k), dtype=np.uint8)
    flips = (rng.random((1000, 1024)) < 0.02).astype(np.uint8)
    errors = int((polar_decode(code, polar_encode(code, msg) ^ flips, 0.02) != msg).any(axis=1).sum())
    lo, hi = clopper_pearson(errors, 1000, 0.95)
    dt = time.perf_counter() - t
    ok = round_trip and linear and factor <= 2.6 and errors / 1000 < 0.5 and dt < 180
    detail = (
        f"round trip {round_trip}, linearity {linear}, time factor per doubling {factor:.2f}, "
        f"BSC(0.02) BLER {errors / 1000:.3f} CI95 [{lo:.3f}, {hi:.3f}] (< 0.05: {errors / 1000 < 0.05})"
    )
    assert record(8, ok, detail, dt)


def _burst_distances(state_for_seed, seeds, m):
    d = np.empty(len(seeds), dtype=int)
    for i, seed in enumerate(seeds):
        inv = np.argsort(state_for_seed(seed).permutation)
        p = seed % (m - 1)
        # where two adjacent channel positions land after descrambling
        d[i] = abs(int(inv[p]) - int(inv[p + 1]))
    return d


def _burst_chi_square(d, m, width=16):
    dist = np.arange(1, m)
    pmf = 2.0 * (m - dist) / (m * (m - 1))
    edges = np.arange(1, m + width, width)
    observed = np.histogram(d, bins=edges)[0]
    expected = np.histogram(dist, bins=edges, weights=pmf)[0] * len(d)
    return stats.chisquare(observed, expected).pvalue


def test_criterion_09_scrambler():
    t = time.perf_counter()
    m = 256
    st = make_scrambler(m, 9, 0)
    x = substream(9, "acceptance-scr").integers(0, 2, (1000, m), dtype=np.uint8)
    round_trip = np.array_equal(descramble(st, scramble(st, x)), x)
    seeds = range(2000)
    p = _burst_chi_square(_burst_distances(lambda s: make_scrambler(m, s, 0), seeds, m), m)
    p_identity = _burst_chi_square(_burst_distances(lambda s: identity_scrambler(m), seeds, m), m)
    dt = time.perf_counter() - t
    ok = round_trip and p > 0.05 and p_identity < 0.05
    detail = f"round trip {round_trip}; burst-dispersion chi-square p = {p:.3f} (identity: {p_identity:.1e})"
    assert record(9, ok, detail, dt)


def test_criterion_10_zero_noise_inversion():
    t = time.perf_counter()
    parts = []
    ok = True
    for name, net in (("line", line_network(2, 2)), ("diamond", diamond_network(2, 2, 2, 2))):
        for ell in (1, 2):
            cfg = SimulationConfig(net, n=64, ell=ell, r_i=1, seed=10, zero_noise=True,
                                   outer_rate=0.25, design_crossover=0.05)
            sim = prepare(cfg)
            traces = [run_frame(sim, f) for f in range(50)]
            wrong = sum(not np.array_equal(tr.decoded, tr.message) for tr in traces)
            ok &= wrong == 0
            parts.append(f"{name} l={ell}: {wrong}/50 wrong")
    dt = time.perf_counter() - t
    assert record(10, ok and dt < 60, "; ".join(parts), dt)


def test_criterion_11_end_to_end(diamond_campaign):
    t = time.perf_counter()
    _, low = diamond_campaign[2.0]
    _, high = diamond_campaign[4.0]
    low = low[:500]
    violations = sum(tr.chunks.completeness_violations for tr in low + high)
    fer_low = sum(tr.frame_error for tr in low) / len(low)
    fer_high = sum(tr.frame_error for tr in high) / len(high)
    ok = violations == 0 and fer_high < fer_low
    detail = f"completeness violations {violations}; FER |h|=2 {fer_low:.3f} -> |h|=4 {fer_high:.3f} (500 paired frames)"
    assert record(11, ok, detail, time.perf_counter() - t)


def _random_four_node(rng):
    g = rng.normal(size=4) + 1j * rng.normal(size=4)
    if rng.random() < 0.5:
        return "diamond", g
    return "line", g[:3]


def _build(kind, g):
    return diamond_network(*g) if kind == "diamond" else line_network(*g)


def test_criterion_12_cutset():
    t = time.perf_counter()
    line = cutset_iid(line_network(1.0, 2.0)).c_iid
    diamond = cutset_iid(diamond_network()).c_iid
    exact = abs(line - 1.0) <= 1e-9 and abs(diamond - math.log2(3)) <= 1e-9
    rng = substream(12, "acceptance-cut")
    drops = 0
    for _ in range(50):
        kind, g = _random_four_node(rng)
        which = int(rng.integers(len(g)))
        base = g.copy()
        base[which] = 0.0  # a zero-gain edge is an absent one
        drops += cutset_iid(_build(kind, g)).c_iid < cutset_iid(_build(kind, base)).c_iid - 1e-12
    dt = time.perf_counter() - t
    ok = exact and drops == 0 and dt < 10
    detail = f"line {line:.12f} (1), diamond {diamond:.12f} (log2 3); edge additions that decreased C: {drops}/50"
    assert record(12, ok, detail, dt)
