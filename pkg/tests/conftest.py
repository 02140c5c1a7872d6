import pytest

from qmfnet.network import diamond_network
from qmfnet.pipeline import SimulationConfig, prepare, run_frame

# one line per acceptance criterion, printed in the terminal summary
CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":")) if s.split()[1].rstrip(":").isdigit() else 99):
            terminalreporter.write_line(line)


def benchmark_config(gain=2.0, frames=500, seed=2024, **kw):
    """Diamond benchmark: all gains ``gain``, l=1, r_i=1, n=64.

    The outer code is pinned (rate 1/16, design crossover 0.35) so both
    gain settings share one polar code.
    """
    opts = dict(ell=1, r_i=1, n=64, frames=frames, seed=seed, outer_rate=1 / 16, design_crossover=0.35)
    opts.update(kw)
    return SimulationConfig(diamond_network(gain, gain, gain, gain), **opts)


@pytest.fixture(scope="session")
def diamond_campaign():
    """Frame traces of the diamond benchmark at |h|=2 (1000 frames) and |h|=4
    (500 frames), same seed."""
    out = {}
    for gain, frames in ((2.0, 1000), (4.0, 500)):
        sim = prepare(benchmark_config(gain, frames))
        out[gain] = (sim, [run_frame(sim, f) for f in range(frames)])
    return out
