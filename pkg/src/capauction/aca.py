"""Multi-round simultaneous ascending clock auction with myopic LP bidders.

Each bidder, at every step, solves its *optimal potential flows* problem: the
flow plan maximising its utility if it won every capacity it bids on at the
current prices.  The bid on an active product is the planned flow on that
product's capacity under auction.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lp import LinearProgram, LpError, solve
from .network import DemandCurve, Network, Utility, consumption_utility, nodal_balance_matrix, reduce_demand

BID_TOL = 1e-7
# Tie-break weights; genuine objective differences here are multiples of 0.5 per unit.
EPS_BID = 1e-6
EPS_ROUTE = 1e-9


@dataclass(frozen=True)
class AcaConfig:
    rounds: int = 3
    price_step: float = 1.0
    start_price: float = 0.0
    max_steps: int = 100_000

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.price_step <= 0:
            raise ValueError("price_step must be positive")


@dataclass(frozen=True)
class AcaState:
    """Snapshot of the auction.  Vectors follow the flow-vector product layout."""

    prices: np.ndarray
    cua: np.ndarray
    round_cua: np.ndarray
    active: np.ndarray
    aac: np.ndarray  # (players, 2m) paid-for capacity not yet bound to flows
    pb: np.ndarray  # (players, 2m) previous bids
    retired: np.ndarray  # (players, 2m) capacity bound to fixed flows
    allocated: np.ndarray  # (players, 2m) everything won so far
    demand: tuple[DemandCurve, ...]
    payments: np.ndarray
    inlets: np.ndarray  # (players, n_sources) inlets of retired flows
    consumed: np.ndarray
    closing_price: np.ndarray  # highest price any product closed at
    round_index: int = 0
    step_index: int = 0
    round_had_bids: tuple[bool, ...] = ()

    @property
    def first_step(self) -> bool:
        return self.step_index == 0


@dataclass(frozen=True)
class PotentialFlows:
    f_aac: np.ndarray
    f_cau: np.ndarray
    inlets: np.ndarray
    consumption: np.ndarray


@dataclass(frozen=True)
class StepResult:
    state: AcaState
    closed: list[int]
    allocations: np.ndarray  # (players, 2m) allocated in this step


@dataclass(frozen=True)
class AcaOutcome:
    allocated: np.ndarray
    payments: np.ndarray
    flows: np.ndarray
    inlets: np.ndarray
    utilities: tuple[Utility, ...]
    final_prices: np.ndarray
    round_had_bids: tuple[bool, ...]
    steps: int = 0

    @property
    def ended_by_round_2(self) -> bool:
        """No bids were placed in any round after the second."""
        return not any(self.round_had_bids[2:])


def initial_state(network: Network, config: AcaConfig = AcaConfig()) -> AcaState:
    n, m2 = network.n_players, 2 * network.m
    cua = network.capacities
    z = np.zeros((n, m2))
    state = AcaState(
        prices=np.zeros(m2), cua=cua.copy(), round_cua=cua.copy(), active=np.zeros(m2, bool),
        aac=z.copy(), pb=z.copy(), retired=z.copy(), allocated=z.copy(),
        demand=tuple(c.demand for c in network.consumers),
        payments=np.zeros(n), inlets=np.zeros((n, len(network.sources))), consumed=np.zeros(n),
        closing_price=np.full(m2, config.start_price),
    )
    return open_round(state, config)


def open_round(state: AcaState, config: AcaConfig) -> AcaState:
    active = state.cua > BID_TOL
    return dataclasses.replace(
        state,
        prices=np.full(len(state.cua), float(config.start_price)),
        active=active,
        round_cua=state.cua.copy(),
        pb=np.tile(state.cua, (len(state.demand), 1)),
        step_index=0,
    )


def _flows_lp(network: Network, player: int, demand: DemandCurve, aac, cau_upper, prices, bid_weight) -> LinearProgram:
    m2 = 2 * network.m
    n_s = len(network.sources)
    n_y = len(demand.steps)
    costs = network.product_costs
    c_route = costs * (1.0 + EPS_ROUTE)
    objective = np.concatenate([
        -c_route,
        -c_route - prices + bid_weight,
        -np.array([s.unit_cost for s in network.sources], dtype=float),
        demand.prices,
    ])
    lower = np.zeros(2 * m2 + n_s + n_y)
    upper = np.concatenate([aac, cau_upper, np.full(n_s, np.inf), demand.quantities])
    a_eq = nodal_balance_matrix(network, player, n_y)
    return LinearProgram(objective, lower, upper, a_eq, np.zeros(a_eq.shape[0]))


def _solve_flows(network, player, demand, aac, cau_upper, prices, bid_weight) -> PotentialFlows:
    m2 = 2 * network.m
    n_s = len(network.sources)
    if not demand.steps:
        return PotentialFlows(np.zeros(m2), np.zeros(m2), np.zeros(n_s), np.zeros(0))
    lp = _flows_lp(network, player, demand, aac, cau_upper, prices, bid_weight)
    sol = solve(lp)
    if not sol.optimal:
        raise LpError(f"optimal-flows LP of player {player} is {sol.status.value}")
    x = sol.values
    return PotentialFlows(x[:m2], x[m2:2 * m2], x[2 * m2:2 * m2 + n_s], x[2 * m2 + n_s:])


def optimal_potential_flows(player: int, network: Network, state: AcaState) -> PotentialFlows:
    """Utility-maximising flows if every bid on an active product were won at current prices.

    Ties: in the first step of a round the bidder takes the smallest plan; later
    it keeps its previous bid until holding it is strictly unprofitable.
    """
    cau_upper = np.where(state.active, np.minimum(state.cua, state.pb[player]), 0.0)
    prices = np.where(state.active, state.prices, 0.0)
    weight = -EPS_BID if state.first_step else EPS_BID
    return _solve_flows(network, player, state.demand[player], state.aac[player], cau_upper, prices, weight)


def submit_bids(player: int, state: AcaState, flows: PotentialFlows) -> np.ndarray:
    return np.where(state.active, flows.f_cau, 0.0)


def auction_step(state: AcaState, bids: np.ndarray, config: AcaConfig = AcaConfig()) -> StepResult:
    """Apply one simultaneous set of bids: close undersold products, raise prices of the rest."""
    bids = np.asarray(bids, dtype=float)
    if np.any(bids > state.pb + BID_TOL):
        p, j = np.argwhere(bids > state.pb + BID_TOL)[0]
        raise ValueError(f"player {p} bid {bids[p, j]} on product {j} above previous bid {state.pb[p, j]}")
    if np.any(bids[:, ~state.active] > BID_TOL):
        raise ValueError("bid on an inactive product")
    bids = np.where(state.active, bids, 0.0)
    total = bids.sum(axis=0)
    closing = state.active & (total <= state.cua + BID_TOL)
    won = np.where(closing, bids, 0.0)
    prices = state.prices.copy()
    prices[state.active & ~closing] += config.price_step
    had = state.round_had_bids
    if state.first_step:
        had = had + (bool(np.any(total > BID_TOL)),)
    new = dataclasses.replace(
        state,
        prices=prices,
        cua=np.maximum(state.cua - won.sum(axis=0), 0.0),
        active=state.active & ~closing,
        aac=state.aac + won,
        allocated=state.allocated + won,
        payments=state.payments + won @ state.prices,
        pb=bids,
        closing_price=np.where(closing, np.maximum(state.closing_price, state.prices), state.closing_price),
        step_index=state.step_index + 1,
        round_had_bids=had,
    )
    return StepResult(new, [int(j) for j in np.flatnonzero(closing)], won)


def final_flows(player: int, network: Network, state: AcaState) -> PotentialFlows:
    """Best use of owned capacity alone (nothing under auction)."""
    m2 = 2 * network.m
    return _solve_flows(network, player, state.demand[player], state.aac[player], np.zeros(m2), np.zeros(m2), 0.0)


def finalize_round(network: Network, state: AcaState, config: AcaConfig = AcaConfig()) -> AcaState:
    """Bind owned capacity to flows, shrink demand, and open the next round."""
    if np.any(state.active):
        raise ValueError("round still has active products")
    aac, retired = state.aac.copy(), state.retired.copy()
    inlets, consumed = state.inlets.copy(), state.consumed.copy()
    demand = list(state.demand)
    m2 = 2 * network.m
    for i in range(network.n_players):
        f = final_flows(i, network, state)
        used = f.f_aac.copy()
        aac[i] = np.maximum(aac[i] - used, 0.0)
        retired[i] += used
        inlets[i] += f.inlets
        got = float(f.consumption.sum())
        consumed[i] += got
        demand[i] = reduce_demand(demand[i], got)
    state = dataclasses.replace(state, aac=aac, retired=retired, inlets=inlets, consumed=consumed,
                                demand=tuple(demand), round_index=state.round_index + 1)
    return open_round(state, config)


def evaluate(network: Network, state: AcaState) -> tuple[Utility, ...]:
    costs = network.product_costs
    src = np.array([s.unit_cost for s in network.sources], dtype=float)
    out = []
    for i, c in enumerate(network.consumers):
        out.append(Utility(
            u_c=consumption_utility(c.demand, state.consumed[i]),
            c_t=float(state.retired[i] @ costs),
            c_i=float(state.inlets[i] @ src),
            c_c=float(state.payments[i]),
            consumption=float(state.consumed[i]),
        ))
    return tuple(out)


TraceSink = Callable[[dict], None]


def run_round(network: Network, state: AcaState, config: AcaConfig = AcaConfig(),
              trace: TraceSink | None = None) -> AcaState:
    n = network.n_players
    steps = 0
    while np.any(state.active):
        if steps >= config.max_steps:
            raise RuntimeError(f"round {state.round_index + 1} did not terminate in {config.max_steps} steps")
        bids = np.zeros((n, 2 * network.m))
        for i in range(n):
            # a zero bid cap on every active product forces a zero bid
            if np.any(state.active & (state.pb[i] > BID_TOL)) and state.demand[i].steps:
                bids[i] = submit_bids(i, state, optimal_potential_flows(i, network, state))
        result = auction_step(state, bids, config)
        if trace is not None:
            trace({
                "round": state.round_index + 1,
                "step": state.step_index + 1,
                "prices": state.prices.tolist(),
                "active": [int(j) for j in np.flatnonzero(state.active)],
                "bids": bids.tolist(),
                "closed": result.closed,
                "allocated": result.allocations.tolist(),
            })
        state = result.state
        steps += 1
    return state


def run_auction(network: Network, config: AcaConfig = AcaConfig(), trace: TraceSink | None = None) -> AcaOutcome:
    state = initial_state(network, config)
    steps = 0
    for _ in range(config.rounds):
        before = state.step_index
        state = run_round(network, state, config, trace)
        steps += state.step_index - before
        state = finalize_round(network, state, config)
    return AcaOutcome(
        allocated=state.allocated,
        payments=state.payments,
        flows=state.retired,
        inlets=state.inlets,
        utilities=evaluate(network, state),
        final_prices=state.closing_price,
        round_had_bids=state.round_had_bids,
        steps=steps,
    )
