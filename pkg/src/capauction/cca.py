"""Convex combinatorial auction: truthful route bids, LP clearing, VCG payments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import LinearProgram, LpError, solve
from .network import (
    Network,
    Route,
    Utility,
    consumer_routes,
    consumption_utility,
    route_flow_vector,
    route_transfer_cost,
    route_unit_cost,
)

# Relative slack on the primary optimum when minimising held capacity.  HiGHS's
# own feasibility tolerance absorbs rounding, so none is needed by default.
LEX_SLACK = 0.0


@dataclass(frozen=True)
class RouteBid:
    player: int
    route_index: int  # 1-based j
    bid_index: int  # 1-based k
    quantity: float
    price: float
    route: Route


@dataclass(frozen=True)
class ClearingResult:
    bids: tuple[RouteBid, ...]
    acceptance: np.ndarray
    allocated: np.ndarray  # (players, 2m)
    objective: float

    def accepted_value(self, player: int) -> float:
        return float(sum(x * b.price for x, b in zip(self.acceptance, self.bids) if b.player == player))


def generate_bids(network: Network, consumer: int, routes: list[Route]) -> list[RouteBid]:
    """One bid per (route, demand step) while the step price covers the route's unit cost."""
    demand = network.consumers[consumer].demand
    bids = []
    for j, route in enumerate(routes, start=1):
        cost = route_unit_cost(network, route)
        cumulative = 0.0
        for k, (price, q) in enumerate(demand.steps, start=1):
            if price < cost:
                break
            cumulative += q
            value = consumption_utility(demand, cumulative) - cumulative * cost
            bids.append(RouteBid(consumer, j, k, cumulative, value, route))
    return bids


def all_bids(network: Network, k_routes: int = 10) -> list[RouteBid]:
    out = []
    for i in range(network.n_players):
        out.extend(generate_bids(network, i, consumer_routes(network, i, k_routes)))
    return out


def _load_columns(network: Network, bids) -> np.ndarray:
    """(m, n_bids) signed edge load of each fully accepted bid."""
    load = np.zeros((network.m, len(bids)))
    for b, bid in enumerate(bids):
        for eid, sign in bid.route.edges:
            load[network.edge_position(eid), b] += sign * bid.quantity
    return load


def build_clearing_lp(network: Network, bids, n_players: int | None = None) -> LinearProgram:
    """Acceptance ratios in [0, 1] maximising total nominal bid value.

    Constraint rows: netted positive-direction load per edge, netted negative
    load per edge, then one convexity row per player.
    """
    if n_players is None:
        n_players = network.n_players
    n = len(bids)
    load = _load_columns(network, bids)
    convex = np.zeros((n_players, n))
    for b, bid in enumerate(bids):
        convex[bid.player, b] = 1.0
    caps_pos = np.array([e.capacity_pos for e in network.edges])
    caps_neg = np.array([e.capacity_neg for e in network.edges])
    return LinearProgram(
        objective=np.array([b.price for b in bids], dtype=float),
        lower=np.zeros(n),
        upper=np.ones(n),
        ub_matrix=np.vstack([load, -load, convex]),
        ub_rhs=np.concatenate([caps_pos, caps_neg, np.ones(n_players)]),
        names=tuple(f"x_{b.player + 1}_{b.route_index}_{b.bid_index}" for b in bids),
    )


def _optimum(network: Network, bids, n_players: int):
    lp = build_clearing_lp(network, bids, n_players)
    sol = solve(lp)
    if not sol.optimal:
        raise LpError(f"clearing LP is {sol.status.value}")
    return lp, sol


def clear(network: Network, bids) -> ClearingResult:
    """Clear the auction; among value-maximising acceptances hold the least capacity."""
    bids = tuple(bids)
    n_players = network.n_players
    if not bids:
        return ClearingResult(bids, np.zeros(0), np.zeros((n_players, 2 * network.m)), 0.0)
    lp, sol = _optimum(network, bids, n_players)
    best = sol.objective_value
    held = np.array([b.quantity * len(b.route.edges) for b in bids])
    second = LinearProgram(
        objective=-held,
        lower=lp.lower,
        upper=lp.upper,
        ub_matrix=np.vstack([lp.ub_matrix, -lp.objective]),
        ub_rhs=np.append(lp.ub_rhs, -(best - LEX_SLACK * max(1.0, abs(best)))),
    )
    sol2 = solve(second)
    x = sol2.values if sol2.optimal else sol.values
    allocated = np.zeros((n_players, 2 * network.m))
    for xb, bid in zip(x, bids):
        if xb > 0:
            allocated[bid.player] += route_flow_vector(network, bid.route, xb * bid.quantity)
    return ClearingResult(bids, x, allocated, float(lp.objective @ x))


def vcg_payments(network: Network, bids, base: ClearingResult) -> np.ndarray:
    """Externality each player imposes on the accepted nominal value of the others."""
    bids = tuple(bids)
    n_players = network.n_players
    out = np.zeros(n_players)
    for i in range(n_players):
        others = tuple(b for b in bids if b.player != i)
        if len(others) == len(bids):
            continue
        without = _optimum(network, others, n_players)[1].objective_value if others else 0.0
        with_i = sum(base.accepted_value(j) for j in range(n_players) if j != i)
        pay = without - with_i
        if abs(pay) < 1e-7:
            pay = 0.0
        out[i] = pay
    return out


def evaluate_cca(network: Network, result: ClearingResult, payments) -> list[Utility]:
    per = [dict(q=0.0, ct=0.0, ci=0.0) for _ in range(network.n_players)]
    for x, bid in zip(result.acceptance, result.bids):
        if x <= 0:
            continue
        qty = x * bid.quantity
        acc = per[bid.player]
        acc["q"] += qty
        acc["ct"] += qty * route_transfer_cost(network, bid.route)
        acc["ci"] += qty * network.source_cost(bid.route.source)
    out = []
    for i, acc in enumerate(per):
        demand = network.consumers[i].demand
        out.append(Utility(consumption_utility(demand, acc["q"]), acc["ct"], acc["ci"], float(payments[i]), acc["q"]))
    return out


@dataclass(frozen=True)
class CcaOutcome:
    bids: tuple[RouteBid, ...]
    clearing: ClearingResult
    payments: np.ndarray
    utilities: tuple[Utility, ...]


def run_cca(network: Network, k_routes: int = 10) -> CcaOutcome:
    bids = tuple(all_bids(network, k_routes))
    result = clear(network, bids)
    pay = vcg_payments(network, bids, result)
    return CcaOutcome(bids, result, pay, tuple(evaluate_cca(network, result, pay)))


def bid_tables(network: Network, bids) -> list[dict]:
    """Per player: route list plus quantity and price matrices (routes x steps, 0 = no bid)."""
    tables = []
    for i in range(network.n_players):
        mine = [b for b in bids if b.player == i]
        n_routes = max((b.route_index for b in mine), default=0)
        routes = {b.route_index: b.route for b in mine}
        n_steps = len(network.consumers[i].demand.steps)
        qty = [[0.0] * n_steps for _ in range(n_routes)]
        price = [[0.0] * n_steps for _ in range(n_routes)]
        for b in mine:
            qty[b.route_index - 1][b.bid_index - 1] = b.quantity
            price[b.route_index - 1][b.bid_index - 1] = b.price
        tables.append({
            "player": i + 1,
            "routes": {j: list(r.key) for j, r in sorted(routes.items())},
            "quantities": qty,
            "prices": price,
        })
    return tables
