"""Random planar network scenarios.

Random stream: ``numpy.random.default_rng(seed)`` (PCG64).  Draw order per
scenario: edge placement (restarting the whole graph on failure), source
nodes, capacities, transfer costs, source costs, then per consumer three step
quantities followed by three step prices.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import networkx as nx
import numpy as np

from .network import Consumer, DemandCurve, Edge, Network, Source, is_connected, k_cheapest_routes, network_to_dict, route_transfer_cost

GENERATOR_VERSION = "capauction-scenario/1"


@dataclass(frozen=True)
class ScenarioConfig:
    n_v: int
    n_e: int
    n_s: int
    cap_min: int = 10
    cap_max: int = 90
    ct_min: int = 3
    ct_max: int = 11
    cs_min: int = 20
    cs_max: int = 30
    demand_q_min: int = 10
    demand_q_max: int = 50
    demand_steps: int = 3
    demand_price_factor: float = 1.4
    routes_per_consumer: int = 10
    max_retries: int = 10_000

    def __post_init__(self):
        if self.n_e < self.n_v - 1:
            raise ValueError("n_e < n_v - 1: graph cannot be connected")
        if self.n_v >= 3 and self.n_e > 3 * self.n_v - 6:
            raise ValueError("n_e > 3 n_v - 6: graph cannot be planar")
        if self.n_e > self.n_v * (self.n_v - 1) // 2:
            raise ValueError("more edges than node pairs")
        if not 1 <= self.n_s < self.n_v:
            raise ValueError("need 1 <= n_s < n_v")


PRESETS = {
    "small": ScenarioConfig(6, 8, 1),
    "medium": ScenarioConfig(9, 12, 2),
    "large": ScenarioConfig(15, 20, 3),
    "xlarge": ScenarioConfig(20, 30, 4),
}


@dataclass(frozen=True)
class Skeleton:
    nodes: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...]  # (tail, head), edge ids are positions + 1
    sources: tuple[int, ...]
    attempts: int = 1


@dataclass(frozen=True)
class Scenario:
    network: Network
    seed: int
    label: str
    config: ScenarioConfig = field(repr=False)

    def to_dict(self) -> dict:
        doc = network_to_dict(self.network)
        doc["provenance"] = {"config": asdict(self.config), "seed": self.seed, "label": self.label,
                             "generator": GENERATOR_VERSION}
        return doc


class GenerationError(RuntimeError):
    pass


def is_planar(nodes, pairs) -> bool:
    g = nx.Graph()
    g.add_nodes_from(nodes)
    g.add_edges_from(pairs)
    return nx.check_planarity(g)[0]


def generate_graph(config: ScenarioConfig, rng: np.random.Generator) -> Skeleton:
    """Place edges one at a time on uniformly chosen unconnected pairs; retry until connected and planar."""
    nodes = tuple(range(1, config.n_v + 1))
    all_pairs = [(u, v) for u in nodes for v in nodes if u < v]
    for attempt in range(1, config.max_retries + 1):
        free = list(all_pairs)
        pairs = []
        for _ in range(config.n_e):
            u, v = free.pop(int(rng.integers(len(free))))
            pairs.append((u, v) if rng.random() < 0.5 else (v, u))
        probe = Network(nodes, tuple(Edge(i + 1, a, b, 0, 0, 0) for i, (a, b) in enumerate(pairs)), ())
        if is_connected(probe) and is_planar(nodes, pairs):
            sources = tuple(sorted(int(s) for s in rng.choice(np.array(nodes), size=config.n_s, replace=False)))
            return Skeleton(nodes, tuple(pairs), sources, attempt)
    raise GenerationError(f"no connected planar graph after {config.max_retries} attempts")


def _uniform_int(rng: np.random.Generator, lo: float, hi: float, size: int) -> np.ndarray:
    """Continuous uniform draw rounded to the closest integer."""
    return np.rint(rng.uniform(lo, hi, size))


def assign_parameters(skeleton: Skeleton, config: ScenarioConfig, rng: np.random.Generator) -> Network:
    n_e = len(skeleton.pairs)
    caps = _uniform_int(rng, config.cap_min, config.cap_max, n_e)
    costs = _uniform_int(rng, config.ct_min, config.ct_max, n_e)
    src_costs = _uniform_int(rng, config.cs_min, config.cs_max, len(skeleton.sources))
    edges = tuple(Edge(i + 1, a, b, float(caps[i]), float(caps[i]), float(costs[i]))
                  for i, (a, b) in enumerate(skeleton.pairs))
    sources = tuple(Source(n, float(c)) for n, c in zip(skeleton.sources, src_costs))
    consumers = tuple(Consumer(v, DemandCurve()) for v in skeleton.nodes if v not in skeleton.sources)
    return Network(skeleton.nodes, edges, sources, consumers)


def price_interval(network: Network, config: ScenarioConfig) -> tuple[int, int]:
    """Integer demand-price range from the transfer-only cost span of every consumer's cheapest routes."""
    costs = []
    for i in range(network.n_players):
        costs.extend(route_transfer_cost(network, r) for r in k_cheapest_routes(network, i, config.routes_per_consumer))
    lo = int(round(min(costs) + config.cs_min))
    hi = int(round(config.demand_price_factor * (max(costs) + config.cs_max)))
    return lo, hi


def assign_demands(network: Network, config: ScenarioConfig, rng: np.random.Generator) -> Network:
    lo, hi = price_interval(network, config)
    consumers = []
    for c in network.consumers:
        qty = rng.integers(config.demand_q_min, config.demand_q_max, size=config.demand_steps, endpoint=True)
        price = rng.integers(lo, hi, size=config.demand_steps, endpoint=True)
        steps = tuple(zip(sorted((float(p) for p in price), reverse=True), (float(q) for q in qty)))
        consumers.append(Consumer(c.node, DemandCurve(steps)))
    return network.with_consumers(consumers)


def generate_scenario(config: ScenarioConfig, seed: int, label: str = "") -> Scenario:
    rng = np.random.default_rng(seed)
    skeleton = generate_graph(config, rng)
    network = assign_demands(assign_parameters(skeleton, config, rng), config, rng)
    return Scenario(network, seed, label, config)
