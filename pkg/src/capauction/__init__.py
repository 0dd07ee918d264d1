"""Capacity allocation in transport networks: ascending clock auction vs. convex combinatorial auction."""

from .aca import AcaConfig, AcaOutcome, run_auction
from .cca import CcaOutcome, run_cca
from .network import DemandCurve, Edge, Network, Route, Source, example_network, load_network
from .scenario import PRESETS, ScenarioConfig, generate_scenario

__version__ = "0.1.0"

__all__ = [
    "AcaConfig", "AcaOutcome", "CcaOutcome", "DemandCurve", "Edge", "Network", "PRESETS", "Route",
    "ScenarioConfig", "Source", "example_network", "generate_scenario", "load_network", "run_auction", "run_cca",
]
