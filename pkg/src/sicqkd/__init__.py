"""Secure-key-rate and node simulator for memory-assisted MDI-QKD with SiC spin memories."""

__version__ = "0.1.0"

from .channel import (DetectorSpec, FiberSpec, NodeOptics, dark_click_prob,  # noqa: E402
                      db_to_efficiency, repetition_rate, transmittance)
from .config import ConfigError, RunConfig, parse_config, render_config  # noqa: E402
from .device import (CavityParams, CavityResponse, DefectOptics, cavity_response,  # noqa: E402
                     cooperativity, optical_enhancement, spontaneous_emission_factor)
from .params import DeviceParams, LinkConfig  # noqa: E402
from .protocols import (ProtocolConfig, RateCurve, RatePoint, Region,  # noqa: E402
                        apply_multiplexing, binary_entropy, classify_regions,
                        crossover_distance, ma_mdi_qber, ma_mdi_yield, rate_curve,
                        skr_bb84, skr_ma_mdi, skr_mdi)
from .montecarlo import TrialStats, compare_to_analytic, simulate_node  # noqa: E402
