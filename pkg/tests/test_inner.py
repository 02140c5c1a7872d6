import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmfnet.inner import (
    HypothesisBudgetExceeded,
    MessageOutOfRange,
    Outcome,
    compute_alphabets,
    decode_chunk,
    encode_message,
    hypothesis_ceiling,
    make_instance,
    relay_forward,
    slack,
)
from qmfnet.network import diamond_network, line_network
from qmfnet.pipeline import SimulationConfig, prepare, transmit_chunks
from qmfnet.quantization import build_zl_exact, noiseless_bundle
from qmfnet.seeding import derive_key, substream


def test_encode_is_deterministic():
    inst = make_instance(diamond_network(), 4, 1.0, 1, 0)
    assert np.array_equal(encode_message(inst, 3), encode_message(inst, 3))
    assert encode_message(inst, 3).shape == (4,)


def test_codewords_differ():
    same = 0
    for k in range(1000):
        inst = make_instance(diamond_network(), 2, 1.0, 5, k)
        same += np.array_equal(encode_message(inst, 0), encode_message(inst, 1))
    assert same == 0


def test_codeword_power():
    inst = make_instance(diamond_network(), 100, 0.1, 9, 0)
    x = np.concatenate([encode_message(inst, u) for u in range(inst.message_count)])
    assert len(x) == 102_400
    assert 0.98 <= np.mean(np.abs(x) ** 2) <= 1.02


def test_message_range():
    inst = make_instance(diamond_network(), 2, 1.0, 0, 0)
    assert inst.message_count == 4
    with pytest.raises(MessageOutOfRange):
        encode_message(inst, 4)


def test_alphabets():
    net = diamond_network(2, 2, 2, 2)
    assert slack(8) == 4 and slack(1) == 2
    alph = compute_alphabets(net, 8)
    assert set(alph) == {"A", "B", "D"}
    assert alph["D"].m_i == math.ceil(4 * math.sqrt(16 * math.log(2)) * math.sqrt(0.5))
    assert all(a.s_i > a.m_i and a.delta_i >= 1 for a in alph.values())
    assert compute_alphabets(net, 1, overrides={"A": 7})["A"].m_i == 7


def test_relay_forward_examples():
    inst = make_instance(diamond_network(), 3, 1.0, 2, 0)
    out, clipped = relay_forward(inst, "A", np.zeros(3, complex))
    assert not clipped
    assert np.array_equal(out, relay_forward(inst, "A", np.zeros(3, complex))[0])
    s = inst.alphabets["A"].s_i
    _, clipped = relay_forward(inst, "A", np.array([s + 5, 0, 0], complex))
    assert clipped
    a, _ = relay_forward(inst, "A", np.array([0.2 + 1.1j, -0.4, 2.3]))
    b, _ = relay_forward(inst, "A", np.array([-0.3 + 0.9j, 0.1, 1.6]))
    assert np.array_equal(a, b)


def _noiseless_sim(net, ell, seed):
    cfg = SimulationConfig(net, n=ell, ell=ell, r_i=1, seed=seed, zero_noise=True, design_crossover=0.1)
    return prepare(cfg)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(["line", "diamond"]), st.integers(1, 2), st.integers(0, 10**6), st.floats(0.5, 8))
def test_noiseless_true_message_always_accepted(kind, ell, seed, g):
    net = line_network(g, g) if kind == "line" else diamond_network(g, g, g, g)
    sim = _noiseless_sim(net, ell, seed)
    msgs = substream(seed, "m").integers(0, 1 << ell, 32)
    batch = transmit_chunks(sim, derive_key(seed, "k"), msgs, None)
    for u, r, clip in zip(msgs, batch.results, batch.clipped):
        assert r.outcome is not Outcome.NO_CANDIDATE
        if not clip:
            assert int(u) in r.candidates


def test_noiseless_decodes_at_high_gain():
    sim = _noiseless_sim(diamond_network(8, 8, 8, 8), 2, 3)
    msgs = np.arange(64) % 4
    batch = transmit_chunks(sim, derive_key(3, "k"), msgs, None)
    assert all(r.outcome is Outcome.DECODED for r in batch.results)
    assert np.array_equal(batch.estimates, msgs)


def test_single_message_always_decodes():
    net = diamond_network(2, 2, 2, 2)
    bundle = build_zl_exact(1)
    inst = make_instance(net, 1, 0.0, 4, 0)
    assert inst.message_count == 1
    rng = substream(4, "obs")
    for _ in range(20):
        obs = rng.normal(size=1) * 3 + 1j * rng.normal(size=1) * 3
        res = decode_chunk(inst, net, bundle, obs)
        assert res.outcome in (Outcome.DECODED, Outcome.NO_CANDIDATE)
        assert res.estimate == 0


def test_decode_is_pure_and_counts_bounded():
    net = diamond_network(2, 2, 2, 2)
    bundle = build_zl_exact(1)
    inst = make_instance(net, 1, 1.0, 8, 3)
    obs = np.array([1.3 - 2.2j])
    a = decode_chunk(inst, net, bundle, obs)
    b = decode_chunk(inst, net, bundle, obs)
    assert (a.outcome, a.estimate, a.candidates) == (b.outcome, b.estimate, b.candidates)
    assert a.hypotheses_examined <= hypothesis_ceiling(inst, net, bundle)


def test_budget_guard():
    net = diamond_network()
    with pytest.raises(HypothesisBudgetExceeded):
        decode_chunk(make_instance(net, 2, 1.0, 0, 0), net, build_zl_exact(2), np.zeros(2), max_hypotheses=10**6)


def test_noiseless_bundle_hypotheses():
    net = line_network(1, 1)
    b = noiseless_bundle(2)
    inst = make_instance(net, 2, 1.0, 0, 0)
    res = decode_chunk(inst, net, b, np.zeros(2))
    assert res.hypotheses_examined == 4


def _chunk_error_rate(g, chunks=1000, seed=77):
    sim = prepare(SimulationConfig(diamond_network(g, g, g, g), n=64, ell=1, r_i=1, seed=seed, design_crossover=0.3))
    errors = 0
    for f in range(chunks // 64 + 1):
        msgs = substream(seed, "msg", f).integers(0, 2, 64)
        batch = transmit_chunks(sim, derive_key(seed, "f", f), msgs, substream(seed, "noise", f))
        errors += int(batch.errors.sum())
        assert batch.completeness_violations == 0
    return errors / (64 * (chunks // 64 + 1))


@pytest.mark.slow
def test_chunk_error_rate_falls_with_gain():
    base = _chunk_error_rate(2.0)
    doubled = _chunk_error_rate(4.0)
    print(f"chunk error rate |h|=2: {base:.3f}, |h|=4: {doubled:.3f}")
    assert base < 0.5
    assert doubled < base
