"""Acceptance criteria, each checked at its stated tolerance.

Every test prints and records one ``CRITERION n: PASS|FAIL`` line (shown again in
the pytest terminal summary) before asserting.
"""

from __future__ import annotations

import subprocess
import sys
import time

import numpy as np
import pytest

from capauction.aca import run_auction
from capauction.cca import all_bids, bid_tables, clear, run_cca
from capauction.metrics import RunMetrics, aggregate, mechanism_metrics
from capauction.network import nodal_balance_matrix
from capauction.scenario import PRESETS, generate_scenario

import conftest
from oracles import grid_search, tiny_instance


def record(n: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def close(a, b, tol) -> bool:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= tol))


# ----------------------------------------------------------------------------- worked example


def test_criterion_1_cca_worked_example(example_net):
    t0 = time.perf_counter()
    out = run_cca(example_net)
    elapsed = time.perf_counter() - t0
    acc = {(b.player + 1, b.route_index, b.bid_index): x for b, x in zip(out.bids, out.clearing.acceptance)}
    want_x = {(1, 1, 1): 1 / 2, (1, 1, 2): 1 / 2, (2, 1, 1): 2 / 3, (2, 1, 2): 1 / 3,
              (3, 1, 2): 70 / 85, (3, 3, 2): 15 / 85}
    x_ok = all(abs(acc.get(k, 0.0) - v) <= 1e-6 for k, v in want_x.items()) and \
        all(abs(x) <= 1e-6 for k, x in acc.items() if k not in want_x)
    ac_cca = np.zeros((3, 12))
    ac_cca[0, 6] = 70
    ac_cca[1, 7] = 55
    ac_cca[2, 7], ac_cca[2, 8], ac_cca[2, 11] = 15, 70, 15
    alloc_ok = close(out.clearing.allocated, ac_cca, 1e-9)
    pay_ok = close(out.payments, [127.5, 80, 115], 1e-6)
    util = [u.u for u in out.utilities]
    util_ok = close(util, [762.5, 625, 1330], 1e-6)
    ok = x_ok and alloc_ok and pay_ok and util_ok and elapsed < 1.0
    got_x = {k: round(float(v), 6) for k, v in acc.items() if v > 1e-9}
    # diagnostic only: the same bids cleared with edges 1 and 2 at capacity 70
    tight = run_cca(conftest.with_capacities(example_net, {1: 70.0, 2: 70.0}))
    record(1, ok, f"acceptance={got_x} alloc_ok={alloc_ok} payments={np.round(out.payments, 6).tolist()} "
                  f"utilities={np.round(util, 6).tolist()} objective={out.clearing.objective:.6g} "
                  f"runtime={elapsed:.3f}s | edges 1,2 at 70: payments={np.round(tight.payments, 6).tolist()} "
                  f"utilities={[round(u.u, 6) for u in tight.utilities]}")


def test_criterion_2_bid_tables(example_net):
    t0 = time.perf_counter()
    tables = bid_tables(example_net, all_bids(example_net))
    elapsed = time.perf_counter() - t0
    quantities = [
        [[50, 90, 0], [50, 90, 0], [50, 90, 0], [50, 0, 0], [50, 0, 0]],
        [[40, 85, 120], [40, 85, 0], [40, 0, 0], [40, 0, 0]],
        [[50, 85, 130], [50, 85, 0], [50, 85, 130], [50, 85, 0]],
    ]
    # 1263 and 1008 as printed are roundings of the exact values 1262.5 and 1007.5
    prices = [
        [[750, 1030, 0], [600, 760, 0], [425, 445, 0], [325, 0, 0], [200, 0, 0]],
        [[600, 915, 950], [400, 490, 0], [140, 0, 0], [280, 0, 0]],
        [[950, 1475, 1565], [825, 1262.5, 0], [850, 1305, 1305], [675, 1007.5, 0]],
    ]
    q_ok = [t["quantities"] for t in tables] == quantities
    p_ok = [t["prices"] for t in tables] == prices
    record(2, q_ok and p_ok and elapsed < 1.0,
           f"quantities_match={q_ok} prices_match={p_ok} runtime={elapsed:.3f}s")


def test_criterion_3_aca_worked_example(example_net):
    t0 = time.perf_counter()
    out = run_auction(example_net)
    elapsed = time.perf_counter() - t0
    ac_aca = [
        [0, 0, 0, 10, 0, 0, 80, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 0, 0, 60, 0, 10, 0, 0],
        [0, 0, 0, 0, 0, 0, 0, 15, 70, 0, 0, 15],
    ]
    alloc_ok = close(out.allocated, ac_aca, 1e-9)
    price_ok = close(out.final_prices, [0, 0, 0, 0, 0, 0, 3, 8, 0, 0, 0, 0], 1e-9)
    pay_ok = close(out.payments, [240, 340, 120], 1e-6)
    util = [u.u for u in out.utilities]
    util_ok = close(util, [720, 400, 1325], 1e-6)
    ok = alloc_ok and price_ok and pay_ok and util_ok and elapsed < 1.0
    record(3, ok, f"alloc_ok={alloc_ok} prices_ok={price_ok} payments={out.payments.tolist()} "
                  f"(total {out.payments.sum():g}) utilities={util} runtime={elapsed:.3f}s")


def test_criterion_4_worked_example_ratios(example_net):
    a = run_auction(example_net)
    c = run_cca(example_net)
    ma = mechanism_metrics(example_net, a.utilities, a.allocated, a.flows)
    mc = mechanism_metrics(example_net, c.utilities, c.clearing.allocated, c.clearing.allocated)
    checks = {
        "r_ANC_ACA": (ma.r_anc, 0.321),
        "r_UNC_ACA": (ma.r_unc, 0.2963),
        "r_ANC_CCA": (mc.r_anc, 0.2778),
        "r_UNC_CCA": (mc.r_unc, 0.2778),
    }
    ok = all(abs(got - want) <= 1e-3 for got, want in checks.values())
    record(4, ok, " ".join(f"{k}={got:.4f}(target {want})" for k, (got, want) in checks.items()))


# ----------------------------------------------------------------------------- random scenarios


def _cca_balance_residual(network, out) -> float:
    worst = 0.0
    for p in range(network.n_players):
        flows = np.zeros(2 * network.m)
        inlets = np.zeros(len(network.sources))
        total = 0.0
        for x, b in zip(out.clearing.acceptance, out.bids):
            if b.player != p or x <= 0:
                continue
            q = x * b.quantity
            for eid, sign in b.route.edges:
                flows[network.product_index(eid, sign)] += q
            inlets[[s.node for s in network.sources].index(b.route.source)] += q
            total += q
        a = nodal_balance_matrix(network, p, 1)
        res = a @ np.concatenate([flows, np.zeros(2 * network.m), inlets, [total]])
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


def _invariant_problems(network, aca, trace, cca) -> list[str]:
    bad = []
    # ACA: bids never rise within a round, flows balance, utility identity
    last = {}
    for r in trace:
        bids = np.array(r["bids"])
        if r["round"] in last and np.any(bids > last[r["round"]] + 1e-7):
            bad.append(f"ACA bid increased in round {r['round']} step {r['step']}")
        last[r["round"]] = bids
    for i, u in enumerate(aca.utilities):
        a = nodal_balance_matrix(network, i, 1)
        res = a @ np.concatenate([aca.flows[i], np.zeros(2 * network.m), aca.inlets[i], [u.consumption]])
        if np.max(np.abs(res)) > 1e-8:
            bad.append(f"ACA nodal balance residual {np.max(np.abs(res)):.3g} for player {i}")
    # CCA: convexity, netted capacity, payments, balance
    x = cca.clearing.acceptance
    for p in range(network.n_players):
        s = sum(xb for xb, b in zip(x, cca.bids) if b.player == p)
        if s > 1 + 1e-9:
            bad.append(f"CCA convexity violated for player {p}: {s}")
    if np.any(x < -1e-9) or np.any(x > 1 + 1e-9):
        bad.append("CCA acceptance outside [0, 1]")
    load = np.zeros(network.m)
    for xb, b in zip(x, cca.bids):
        for eid, sign in b.route.edges:
            load[network.edge_position(eid)] += sign * xb * b.quantity
    if np.any(load > np.array([e.capacity_pos for e in network.edges]) + 1e-7) or \
            np.any(-load > np.array([e.capacity_neg for e in network.edges]) + 1e-7):
        bad.append("CCA netted capacity exceeded")
    if np.any(cca.payments < 0):
        bad.append(f"negative VCG payment {cca.payments.min():.3g}")
    residual = _cca_balance_residual(network, cca)
    if residual > 1e-8:
        bad.append(f"CCA nodal balance residual {residual:.3g}")
    mc = mechanism_metrics(network, cca.utilities, cca.clearing.allocated, cca.clearing.allocated)
    if mc.r_unc != mc.r_anc:
        bad.append("r_UNC_CCA differs from r_ANC_CCA")
    for u in tuple(aca.utilities) + tuple(cca.utilities):
        if abs(u.u - (u.u_c - u.c_t - u.c_i - u.c_c)) > 1e-9:
            bad.append("utility identity violated")
    return bad


def _evaluate(preset: str, seed: int):
    net = generate_scenario(PRESETS[preset], seed).network
    trace = []
    aca = run_auction(net, trace=trace.append)
    cca = run_cca(net)
    metrics = RunMetrics(
        seed, seed,
        mechanism_metrics(net, aca.utilities, aca.allocated, aca.flows),
        mechanism_metrics(net, cca.utilities, cca.clearing.allocated, cca.clearing.allocated),
        aca.ended_by_round_2,
    )
    return metrics, _invariant_problems(net, aca, trace, cca)


SMALL_SEEDS = range(300)
OTHER_PRESETS = {"medium": range(40), "large": range(20), "xlarge": range(12)}


@pytest.fixture(scope="module")
def small_campaign():
    t0 = time.perf_counter()
    results = [_evaluate("small", s) for s in SMALL_SEEDS]
    return results, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_5_statistical_directions(small_campaign):
    results, elapsed = small_campaign
    runs = [m for m, _ in results]
    stats = aggregate(runs)
    a, c = stats.aca, stats.cca
    checks = {
        "mean U_T_CCA > mean U_T_ACA": c["total_utility"].mean > a["total_utility"].mean,
        "mean income ACA > CCA": a["income"].mean > c["income"].mean,
        "mean r_ANC_ACA > r_ANC_CCA": a["r_anc"].mean > c["r_anc"].mean,
        "mean r_UNC_CCA > r_UNC_ACA": c["r_unc"].mean > a["r_unc"].mean,
        "mean UF_CCA < UF_ACA": c["unfairness"].mean < a["unfairness"].mean,
        "fraction U_T_ACA<0 > 0": stats.frac_aca_negative > 0,
    }
    ok = all(checks.values()) and elapsed < 600
    failed = [k for k, v in checks.items() if not v]
    record(5, ok, f"n={stats.count} U_T ACA/CCA={a['total_utility'].mean:.1f}/{c['total_utility'].mean:.1f} "
                  f"income={a['income'].mean:.1f}/{c['income'].mean:.1f} "
                  f"r_ANC={a['r_anc'].mean:.4f}/{c['r_anc'].mean:.4f} r_UNC={a['r_unc'].mean:.4f}/{c['r_unc'].mean:.4f} "
                  f"UF={a['unfairness'].mean:.1f}/{c['unfairness'].mean:.1f} "
                  f"frac_neg={stats.frac_aca_negative:.3f} failed={failed} runtime={elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_6_invariants(small_campaign):
    results, _ = small_campaign
    problems = [(("small", s), p) for s, (_, p) in zip(SMALL_SEEDS, results) if p]
    count = len(results)
    for preset, seeds in OTHER_PRESETS.items():
        for s in seeds:
            _, p = _evaluate(preset, s)
            count += 1
            if p:
                problems.append(((preset, s), p))
    ok = count >= 200 and not problems
    record(6, ok, f"scenarios={count} violations={len(problems)} first={problems[:3]}")


def test_criterion_7_clearing_oracle():
    rng = np.random.default_rng(20240607)
    t0 = time.perf_counter()
    worst_gap = 0.0
    failures = []
    n = 60
    for k in range(n):
        net, bids = tiny_instance(rng)
        lp_value = clear(net, bids).objective
        grid_value = grid_search(net, bids, 0.05)
        bound = 0.05 * sum(b.price for b in bids)  # one grid step on every acceptance ratio
        if not (grid_value - 1e-7 <= lp_value <= grid_value + bound + 1e-7):
            failures.append((k, lp_value, grid_value, bound))
        worst_gap = max(worst_gap, (lp_value - grid_value) / bound)
    elapsed = time.perf_counter() - t0
    record(7, not failures and elapsed < 60,
           f"instances={n} failures={failures[:3]} worst gap/bound={worst_gap:.3f} runtime={elapsed:.1f}s")


@pytest.mark.slow
def test_criterion_8_determinism(tmp_path):
    outs = []
    for workers in (1, 2):
        out = tmp_path / f"w{workers}"
        cmd = [sys.executable, "-m", "capauction", "campaign", "--preset", "small", "--count", "50",
               "--seed", "7", "--out", str(out), "--workers", str(workers)]
        res = subprocess.run(cmd, capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    same = names == sorted(p.name for p in outs[1].iterdir()) and all(
        (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    record(8, same, f"files={names} identical_across_workers_1_2={same}")
