"""Spectral-gap and majorization laboratory for multicore random circuits."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    CircuitConfig,
    Topology,
    build_topology,
    depth_per_layer,
    sample_circuit,
)
from .markov import build_total_operator, normalized_gap, subleading_eigenvalue  # noqa: E402
from .analysis import find_optimal_I, scan_gap, scan_idh  # noqa: E402

__all__ = [
    "CircuitConfig",
    "Topology",
    "build_topology",
    "depth_per_layer",
    "sample_circuit",
    "build_total_operator",
    "normalized_gap",
    "subleading_eigenvalue",
    "find_optimal_I",
    "scan_gap",
    "scan_idh",
]
