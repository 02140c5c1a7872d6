"""Concatenated polar and quantize-map-and-forward coding for layered Gaussian
relay networks."""

from .bounds import SchemeParams, select_params
from .network import LayeredNetwork, cutset_iid, diamond_network, line_network, load_network, read_network
from .pipeline import SimulationConfig, load_config, prepare, run_campaign, run_frame
from .polar import PolarCode, construct, polar_decode, polar_encode
from .quantization import NoiseSetBundle, build_zl_exact, build_zl_sampled

__all__ = [
    "LayeredNetwork",
    "NoiseSetBundle",
    "PolarCode",
    "SchemeParams",
    "SimulationConfig",
    "build_zl_exact",
    "build_zl_sampled",
    "construct",
    "cutset_iid",
    "diamond_network",
    "line_network",
    "load_config",
    "load_network",
    "polar_decode",
    "polar_encode",
    "prepare",
    "read_network",
    "run_campaign",
    "run_frame",
    "select_params",
]
