"""Capacitated transport network, demand curves, routes and flow accounting.

Flow vectors use the product layout ``[q_1+ ... q_m+, q_1- ... q_m-]`` where
``m`` is the number of edges in declaration order.  The ``+`` entry of an edge
carries flow from ``edge.tail`` to ``edge.head``; the ``-`` entry carries it
backwards.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TOL = 1e-9


@dataclass(frozen=True)
class Edge:
    id: int
    tail: int
    head: int
    capacity_pos: float
    capacity_neg: float
    transfer_cost: float


@dataclass(frozen=True)
class Source:
    node: int
    unit_cost: float


@dataclass(frozen=True)
class DemandCurve:
    """Piecewise constant inverse demand: ``steps`` is a tuple of (price, quantity)."""

    steps: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        steps = tuple((float(p), float(q)) for p, q in self.steps)
        object.__setattr__(self, "steps", steps)

    @property
    def prices(self) -> np.ndarray:
        return np.array([p for p, _ in self.steps], dtype=float)

    @property
    def quantities(self) -> np.ndarray:
        return np.array([q for _, q in self.steps], dtype=float)

    @property
    def total(self) -> float:
        return float(sum(q for _, q in self.steps))

    def problems(self) -> list[str]:
        out = []
        for i, (p, q) in enumerate(self.steps):
            if q <= 0:
                out.append(f"step {i} has non-positive quantity {q}")
            if p < 0:
                out.append(f"step {i} has negative price {p}")
            if i and p > self.steps[i - 1][0]:
                out.append(f"step {i} price {p} exceeds previous step price")
        return out


@dataclass(frozen=True)
class Route:
    """Signed edge sequence leading from ``source`` to the node of consumer ``player``."""

    player: int
    source: int
    edges: tuple[tuple[int, int], ...]

    @property
    def key(self) -> tuple[int, ...]:
        return tuple(eid * sign for eid, sign in self.edges)

    def __str__(self) -> str:
        return "{" + ", ".join(str(k) for k in self.key) + "}"


@dataclass(frozen=True)
class Consumer:
    node: int
    demand: DemandCurve
    # Explicit route list; when empty the cheapest routes are computed on demand.
    routes: tuple[tuple[tuple[int, int], ...], ...] = ()


@dataclass(frozen=True)
class Utility:
    """Per-player outcome: consumption utility minus transfer, inlet and capacity costs."""

    u_c: float
    c_t: float
    c_i: float
    c_c: float
    consumption: float = 0.0

    @property
    def u(self) -> float:
        return self.u_c - self.c_t - self.c_i - self.c_c


@dataclass(frozen=True)
class Network:
    nodes: tuple[int, ...]
    edges: tuple[Edge, ...]
    sources: tuple[Source, ...]
    consumers: tuple[Consumer, ...] = ()
    _edge_pos: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "consumers", tuple(self.consumers))
        object.__setattr__(self, "_edge_pos", {e.id: i for i, e in enumerate(self.edges)})

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def n_players(self) -> int:
        return len(self.consumers)

    def edge_position(self, edge_id: int) -> int:
        return self._edge_pos[edge_id]

    def edge(self, edge_id: int) -> Edge:
        return self.edges[self._edge_pos[edge_id]]

    def product_index(self, edge_id: int, sign: int) -> int:
        pos = self._edge_pos[edge_id]
        return pos if sign > 0 else pos + self.m

    @property
    def capacities(self) -> np.ndarray:
        """Capacity bound of every product, in flow-vector layout."""
        return np.array([e.capacity_pos for e in self.edges] + [e.capacity_neg for e in self.edges], dtype=float)

    @property
    def product_costs(self) -> np.ndarray:
        tc = [e.transfer_cost for e in self.edges]
        return np.array(tc + tc, dtype=float)

    def product_labels(self) -> list[str]:
        return [f"e{e.id}+" for e in self.edges] + [f"e{e.id}-" for e in self.edges]

    def source_cost(self, node: int) -> float:
        for s in self.sources:
            if s.node == node:
                return s.unit_cost
        raise KeyError(f"node {node} is not a source")

    def with_consumers(self, consumers: Iterable[Consumer]) -> "Network":
        return Network(self.nodes, self.edges, self.sources, tuple(consumers))


def validate(network: Network) -> list[str]:
    """Return human-readable violations; an empty list means the network is valid."""
    out: list[str] = []
    nodes = set(network.nodes)
    if len(nodes) != len(network.nodes):
        out.append("duplicate node ids")
    ids = [e.id for e in network.edges]
    if len(set(ids)) != len(ids):
        out.append("duplicate edge ids")
    for e in network.edges:
        if e.tail not in nodes or e.head not in nodes:
            out.append(f"dangling edge {e.id}: {e.tail}->{e.head}")
        if e.tail == e.head:
            out.append(f"edge {e.id} is a self loop")
        if e.capacity_pos < 0 or e.capacity_neg < 0:
            out.append(f"edge {e.id} has negative capacity")
        if e.transfer_cost < 0:
            out.append(f"edge {e.id} has negative transfer cost")
    src_nodes = [s.node for s in network.sources]
    con_nodes = [c.node for c in network.consumers]
    for s in network.sources:
        if s.node not in nodes:
            out.append(f"source at unknown node {s.node}")
        if s.unit_cost < 0:
            out.append(f"source at node {s.node} has negative unit cost")
    for i, c in enumerate(network.consumers):
        if c.node not in nodes:
            out.append(f"consumer {i} at unknown node {c.node}")
        out.extend(f"consumer {i}: {p}" for p in c.demand.problems())
    if len(set(src_nodes)) != len(src_nodes):
        out.append("several sources share a node")
    if set(src_nodes) & set(con_nodes):
        out.append(f"source/consumer overlap at nodes {sorted(set(src_nodes) & set(con_nodes))}")
    if not network.sources:
        out.append("no sources")
    if not network.consumers:
        out.append("no consumers")
    if nodes and not is_connected(network):
        out.append("graph is disconnected")
    for i, c in enumerate(network.consumers):
        for r in c.routes:
            try:
                check_route(network, Route(i, _route_origin(network, c.node, r), tuple(r)))
            except ValueError as exc:
                out.append(f"consumer {i}: {exc}")
    return out


def is_connected(network: Network) -> bool:
    if not network.nodes:
        return True
    adj: dict[int, set[int]] = {v: set() for v in network.nodes}
    for e in network.edges:
        if e.tail in adj and e.head in adj:
            adj[e.tail].add(e.head)
            adj[e.head].add(e.tail)
    seen = {network.nodes[0]}
    todo = deque(seen)
    while todo:
        v = todo.popleft()
        for w in adj[v] - seen:
            seen.add(w)
            todo.append(w)
    return len(seen) == len(network.nodes)


def _route_origin(network: Network, consumer_node: int, edges: Sequence[tuple[int, int]]) -> int:
    node = consumer_node
    for eid, sign in reversed(edges):
        e = network.edge(eid)
        node = e.tail if sign > 0 else e.head
    return node


def check_route(network: Network, route: Route) -> None:
    """Raise ValueError unless the route walks from its source to its consumer."""
    if route.source not in {s.node for s in network.sources}:
        raise ValueError(f"route {route} does not start at a source")
    seen_edges = set()
    node = route.source
    visited = {node}
    for eid, sign in route.edges:
        if eid not in network._edge_pos:
            raise ValueError(f"route {route} uses unknown edge {eid}")
        if eid in seen_edges:
            raise ValueError(f"route {route} repeats edge {eid}")
        seen_edges.add(eid)
        e = network.edge(eid)
        start, end = (e.tail, e.head) if sign > 0 else (e.head, e.tail)
        if start != node:
            raise ValueError(f"route {route} is broken at edge {eid}")
        node = end
        if node in visited:
            raise ValueError(f"route {route} revisits node {node}")
        visited.add(node)
    if node != network.consumers[route.player].node:
        raise ValueError(f"route {route} does not end at consumer {route.player}")


def route_unit_cost(network: Network, route: Route) -> float:
    return network.source_cost(route.source) + route_transfer_cost(network, route)


def route_transfer_cost(network: Network, route: Route) -> float:
    return float(sum(network.edge(eid).transfer_cost for eid, _ in route.edges))


def route_flow_vector(network: Network, route: Route, quantity: float = 1.0) -> np.ndarray:
    out = np.zeros(2 * network.m)
    for eid, sign in route.edges:
        out[network.product_index(eid, sign)] += quantity
    return out


def consumption_utility(demand: DemandCurve, quantity: float) -> float:
    """Area under the inverse demand curve from 0 to ``quantity``."""
    left = max(float(quantity), 0.0)
    total = 0.0
    for price, q in demand.steps:
        take = min(q, left)
        total += price * take
        left -= take
        if left <= 0:
            break
    return total


def reduce_demand(demand: DemandCurve, quantity: float) -> DemandCurve:
    """Remove ``quantity`` from the highest-priced steps first."""
    left = max(float(quantity), 0.0)
    steps = []
    for price, q in demand.steps:
        if left > 0:
            take = min(q, left)
            q -= take
            left -= take
        if q > TOL:
            steps.append((price, q))
    return DemandCurve(tuple(steps))


def nodal_balance_matrix(network: Network, player: int, n_steps: int | None = None) -> np.ndarray:
    """Balance rows for ``x = (f_aac, f_cau, I, Y)``: inlet + inflow - outflow - consumption.

    One row per node in ``network.nodes`` order; ``I`` follows ``network.sources``
    order and ``Y`` has one entry per demand step of ``player``.
    """
    m = network.m
    if n_steps is None:
        n_steps = len(network.consumers[player].demand.steps)
    n_s = len(network.sources)
    row = {v: i for i, v in enumerate(network.nodes)}
    flows = np.zeros((len(network.nodes), 2 * m))
    for j, e in enumerate(network.edges):
        flows[row[e.head], j] += 1.0
        flows[row[e.tail], j] -= 1.0
        flows[row[e.tail], j + m] += 1.0
        flows[row[e.head], j + m] -= 1.0
    inlet = np.zeros((len(network.nodes), n_s))
    for k, s in enumerate(network.sources):
        inlet[row[s.node], k] = 1.0
    cons = np.zeros((len(network.nodes), n_steps))
    cons[row[network.consumers[player].node], :] = -1.0
    return np.hstack([flows, flows, inlet, cons])


def _adjacency(network: Network) -> dict[int, list[tuple[int, int, int, float]]]:
    """node -> [(neighbour, edge id, sign, cost)] in both traversal directions."""
    adj: dict[int, list] = {v: [] for v in network.nodes}
    for e in network.edges:
        adj[e.tail].append((e.head, e.id, 1, e.transfer_cost))
        adj[e.head].append((e.tail, e.id, -1, e.transfer_cost))
    return adj


_SUPER = object()


def _spur_search(adj, sources, start, target, banned_nodes, banned_arcs):
    """Cheapest path from ``start`` (a node or the virtual super source) to ``target``.

    Returns ``(cost, nodes, arcs)`` or ``None``.  Arcs are ``(edge id, sign)``; the
    virtual arc out of the super source is ``("S", node)``.
    """
    dist = {}
    heap = []
    counter = 0
    if start is _SUPER:
        for node, cost in sources.items():
            if node in banned_nodes or ("S", node) in banned_arcs:
                continue
            heapq.heappush(heap, (cost, counter, node, (node,), (("S", node),)))
            counter += 1
    else:
        heapq.heappush(heap, (0.0, counter, start, (start,), ()))
    while heap:
        cost, _, node, path, arcs = heapq.heappop(heap)
        if node in dist:
            continue
        dist[node] = cost
        if node == target:
            return cost, path, arcs
        for nxt, eid, sign, c in adj[node]:
            if nxt in dist or nxt in banned_nodes or (eid, sign) in banned_arcs or nxt in path:
                continue
            counter += 1
            heapq.heappush(heap, (cost + c, counter, nxt, path + (nxt,), arcs + ((eid, sign),)))
    return None


def k_cheapest_routes(network: Network, consumer: int, k: int) -> list[Route]:
    """Up to ``k`` loopless source-to-consumer routes, cheapest first.

    Yen's algorithm on the graph extended by a virtual super source joined to
    every source node at its unit cost.  Enumeration continues through the
    whole cost tier of the k-th route so ties are ordered by signed edge id
    sequence independently of search order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    target = network.consumers[consumer].node
    sources = {s.node: s.unit_cost for s in network.sources}
    adj = _adjacency(network)

    first = _spur_search(adj, sources, _SUPER, target, set(), set())
    if first is None:
        return []
    # paths carry the super source as element 0 of both node and arc tuples
    accepted = [(first[0], (_SUPER,) + first[1], first[2])]
    seen = {first[2]}
    candidates: list = []
    counter = 0

    def arc_cost(arc):
        if arc[0] == "S":
            return sources[arc[1]]
        return network.edge(arc[0]).transfer_cost

    while True:
        _, last_nodes, last_arcs = accepted[-1]
        for i in range(len(last_nodes) - 1):
            spur = last_nodes[i]
            root_nodes = last_nodes[: i + 1]
            root_arcs = last_arcs[:i]
            banned_arcs = {arcs[i] for _, nodes, arcs in accepted if nodes[: i + 1] == root_nodes}
            banned_nodes = set(root_nodes[:-1]) - {_SUPER}
            found = _spur_search(adj, sources, spur, target, banned_nodes, banned_arcs)
            if found is None:
                continue
            _, spur_nodes, spur_arcs = found
            arcs = root_arcs + spur_arcs
            if arcs in seen:
                continue
            seen.add(arcs)
            nodes = (_SUPER,) + spur_nodes if spur is _SUPER else root_nodes[:-1] + spur_nodes
            cost = sum(arc_cost(a) for a in arcs)
            key = tuple(a[0] * a[1] for a in arcs[1:])
            heapq.heappush(candidates, (round(cost, 9), key, counter, cost, nodes, arcs))
            counter += 1
        if not candidates:
            break
        if len(accepted) >= k and candidates[0][0] > round(accepted[k - 1][0], 9) + TOL:
            break
        c = heapq.heappop(candidates)
        accepted.append((c[3], c[4], c[5]))

    routes = []
    for cost, _, arcs in accepted:
        routes.append((round(cost, 9), Route(consumer, arcs[0][1], tuple(arcs[1:]))))
    routes.sort(key=lambda t: (t[0], t[1].key))
    return [r for _, r in routes[:k]]


def consumer_routes(network: Network, consumer: int, k: int = 10) -> list[Route]:
    """Explicit routes declared on the consumer, otherwise the k cheapest ones."""
    c = network.consumers[consumer]
    if c.routes:
        return [Route(consumer, _route_origin(network, c.node, r), tuple(r)) for r in c.routes]
    return k_cheapest_routes(network, consumer, k)


# -- JSON -------------------------------------------------------------------


def network_to_dict(network: Network) -> dict:
    edges = []
    for e in network.edges:
        d = {"id": e.id, "from": e.tail, "to": e.head}
        if e.capacity_pos == e.capacity_neg:
            d["capacity"] = e.capacity_pos
        else:
            d["capacity_pos"] = e.capacity_pos
            d["capacity_neg"] = e.capacity_neg
        d["transfer_cost"] = e.transfer_cost
        edges.append(d)
    consumers = []
    for c in network.consumers:
        d = {"node": c.node, "demand": [[p, q] for p, q in c.demand.steps]}
        if c.routes:
            d["routes"] = [[eid * sign for eid, sign in r] for r in c.routes]
        consumers.append(d)
    return {
        "nodes": list(network.nodes),
        "edges": edges,
        "sources": [{"node": s.node, "unit_cost": s.unit_cost} for s in network.sources],
        "consumers": consumers,
    }


class SchemaError(ValueError):
    """Raised for malformed network documents; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _num(doc, key, path):
    if key not in doc:
        raise SchemaError(f"{path}.{key}", "missing")
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{path}.{key}", f"expected a number, got {v!r}")
    return v


def network_from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict):
        raise SchemaError("$", "expected an object")
    for key in ("nodes", "edges", "sources", "consumers"):
        if not isinstance(doc.get(key), list):
            raise SchemaError(f"$.{key}", "missing or not a list")
    edges = []
    for i, e in enumerate(doc["edges"]):
        path = f"$.edges[{i}]"
        if not isinstance(e, dict):
            raise SchemaError(path, "expected an object")
        if "capacity" in e:
            cp = cn = _num(e, "capacity", path)
        else:
            cp, cn = _num(e, "capacity_pos", path), _num(e, "capacity_neg", path)
        edges.append(Edge(int(_num(e, "id", path)), int(_num(e, "from", path)), int(_num(e, "to", path)),
                          float(cp), float(cn), float(_num(e, "transfer_cost", path))))
    sources = []
    for i, s in enumerate(doc["sources"]):
        path = f"$.sources[{i}]"
        sources.append(Source(int(_num(s, "node", path)), float(_num(s, "unit_cost", path))))
    consumers = []
    for i, c in enumerate(doc["consumers"]):
        path = f"$.consumers[{i}]"
        steps = c.get("demand")
        if not isinstance(steps, list) or not all(isinstance(s, list) and len(s) == 2 for s in steps):
            raise SchemaError(f"{path}.demand", "expected a list of [price, quantity] pairs")
        routes = []
        for j, r in enumerate(c.get("routes", [])):
            if not isinstance(r, list) or not all(isinstance(x, int) and x != 0 for x in r):
                raise SchemaError(f"{path}.routes[{j}]", "expected a list of non-zero signed edge ids")
            routes.append(tuple((abs(x), 1 if x > 0 else -1) for x in r))
        consumers.append(Consumer(int(_num(c, "node", path)), DemandCurve(tuple(tuple(s) for s in steps)), tuple(routes)))
    return Network(tuple(int(v) for v in doc["nodes"]), tuple(edges), tuple(sources), tuple(consumers))


def load_network(path: str | Path) -> Network:
    with open(path) as fh:
        return network_from_dict(json.load(fh))


def example_network_path() -> Path:
    return Path(__file__).parent / "data" / "example_network.json"


def example_network() -> Network:
    """Four-node, six-edge worked example with one source and three consumers."""
    return load_network(example_network_path())
