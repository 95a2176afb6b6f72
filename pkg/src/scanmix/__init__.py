"""Simulator and exact-analysis toolkit for randomized systematic-scan
Glauber dynamics on the complete-graph Ising model."""

from .model import (
    IntermediateTrace,
    Mode,
    ModelParams,
    ScanOrder,
    SpinConfig,
    flipped,
    magnetization,
    make_params,
    restricted_scan_step,
    sample_scan_order,
    scan_apply,
    scan_step,
    single_site_update,
    update_prob_plus,
)
from .rng import RngStream, as_generator

__version__ = "0.1.0"
