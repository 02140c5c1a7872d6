import json
import math

import numpy as np
import pytest

from conftest import benchmark_config
from qmfnet.bounds import chernoff_bound
from qmfnet.network import diamond_network, line_network
from qmfnet.pipeline import (
    CSV_COLUMNS,
    ConfigError,
    SimulationConfig,
    chunk_bits_to_messages,
    config_from_mapping,
    load_config,
    messages_to_chunk_bits,
    next_pow2,
    prepare,
    run_campaign,
    run_frame,
)
from qmfnet.quantization import clopper_pearson


def test_chunk_bit_round_trip():
    bits = np.random.default_rng(0).integers(0, 2, 60, dtype=np.uint8)
    msgs = chunk_bits_to_messages(bits, 3)
    assert msgs[0] == bits[0] * 4 + bits[1] * 2 + bits[2]
    assert np.array_equal(messages_to_chunk_bits(msgs, 3), bits)


def test_next_pow2():
    assert [next_pow2(x) for x in (1, 2, 3, 64, 65)] == [1, 2, 4, 64, 128]


def test_layout_padding():
    sim = prepare(SimulationConfig(line_network(2, 2), n=6, ell=2, r_i=1.5, seed=0, design_crossover=0.1))
    assert sim.bits_per_chunk == 3
    assert sim.outer_length == 16
    assert sim.n_chunks == 6
    assert sim.padding == 2
    assert "pad" in sim.layout()["padding_note"]


def test_zero_noise_frame_is_error_free():
    cfg = SimulationConfig(diamond_network(8, 8, 8, 8), n=64, ell=2, r_i=1, seed=5, zero_noise=True,
                           outer_rate=0.5, design_crossover=0.05)
    sim = prepare(cfg)
    for f in range(3):
        trace = run_frame(sim, f)
        assert not trace.frame_error
        assert trace.bit_flips_into_outer == 0
        assert np.array_equal(trace.decoded, trace.message)


def test_rate_zero_outer_code():
    sim = prepare(benchmark_config(frames=3, outer_rate=0.0))
    assert sim.k == 0
    assert not any(run_frame(sim, f).frame_error for f in range(3))


def test_zero_frames():
    report = run_campaign(benchmark_config(frames=0))
    assert report.rows == []
    assert report.csv_text.strip() == ",".join(CSV_COLUMNS)
    assert report.summary["fer"] == "n/a"
    assert report.summary["p_i_hat"] == "n/a"


def test_accounting_identity_and_failure_split():
    sim = prepare(benchmark_config(frames=20, seed=3))
    for f in range(20):
        t = run_frame(sim, f)
        row = t.row()
        assert sum(t.failure_counts().values()) == t.chunk_errors
        assert row["chunks"] == sim.n_chunks
        assert t.bit_flips_into_outer <= t.chunk_errors * sim.bits_per_chunk
        assert row["completeness_violations"] == 0
        assert set(row) == set(CSV_COLUMNS)


def test_csv_is_reproducible(tmp_path):
    cfg = benchmark_config(frames=6, seed=9)
    a = run_campaign(cfg, out_dir=tmp_path / "a")
    b = run_campaign(cfg, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "frames.csv").read_bytes() == (tmp_path / "b" / "frames.csv").read_bytes()
    assert a.csv_text == b.csv_text
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["frames"] == 6
    assert (tmp_path / "a" / "running_fer.png").exists()


@pytest.mark.slow
def test_parallel_matches_serial():
    cfg = benchmark_config(frames=6, seed=9)
    assert run_campaign(cfg, workers=2).csv_text == run_campaign(cfg, workers=1).csv_text


def test_calibrated_design():
    cfg = SimulationConfig(line_network(3, 3), n=16, ell=1, r_i=1, seed=1, calibration_chunks=300)
    sim = prepare(cfg)
    assert sim.design_source == "calibration"
    assert sim.design_crossover == pytest.approx(min(max(2 * sim.calibration["p_hat"], 1e-4), 0.49))


@pytest.mark.parametrize(
    "changes, match",
    [
        ({"n": 3, "ell": 2}, "multiple"),
        ({"r_i": -1}, "inner rate"),
        ({"ell": 0}, "ell"),
        ({"frames": -1}, "frames"),
        ({"outer_rate": 1.5}, "outer_rate"),
    ],
)
def test_config_errors(changes, match):
    cfg = dict(network=line_network(2, 2), n=4, ell=1, r_i=1, seed=0, design_crossover=0.1)
    cfg.update(changes)
    with pytest.raises(ConfigError, match=match):
        prepare(SimulationConfig(**cfg))


def test_infeasible_default_rate_is_rejected():
    with pytest.raises(ConfigError, match="inner rate"):
        prepare(SimulationConfig(line_network(2, 2), n=8, ell=1, seed=0))


def test_config_mapping_checks(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        config_from_mapping({"network": "x", "n": 1, "bogus": 2})
    with pytest.raises(ConfigError, match="missing"):
        config_from_mapping({"n": 1})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("network: [unclosed")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_shipped_config_loads():
    cfg = load_config("configs/diamond_sim.yaml")
    sim = prepare(cfg)
    assert sim.net.gains[("S", "A")] == 2
    assert cfg.output.endswith("diamond_results")


def test_scrambled_bits_are_balanced(diamond_campaign):
    _, traces = diamond_campaign[2.0]
    bits = np.concatenate([t.scrambled for t in traces])
    lo, hi = clopper_pearson(int(bits.sum()), len(bits), 0.999)
    assert lo <= 0.5 <= hi


def test_coding_beats_uncoded(diamond_campaign):
    _, traces = diamond_campaign[2.0]
    coded = sum(t.frame_error for t in traces)
    uncoded = sum(t.bit_flips_into_outer > 0 for t in traces)
    assert coded < uncoded


def test_chunk_errors_concentrate(diamond_campaign):
    sim, traces = diamond_campaign[2.0]
    errs = np.array([t.chunk_errors for t in traces])
    N = sim.n_chunks
    p_hat = errs.sum() / (N * len(errs))
    se = errs.std(ddof=1) / math.sqrt(len(errs))
    assert abs(errs.mean() - N * p_hat) <= 3 * se + 1e-12
    bound = chernoff_bound(N, p_hat)
    frac = np.mean(errs >= 2 * N * p_hat)
    assert frac <= bound + 3 * math.sqrt(bound * (1 - bound) / len(errs))
    assert sum(t.chunks.completeness_violations for t in traces) == 0
