"""Command-line entry point: worked example, single scenarios, Monte Carlo campaigns."""

from __future__ import annotations

import argparse
import dataclasses
import json
import multiprocessing
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aca import AcaConfig, run_auction
from .cca import bid_tables, run_cca
from .metrics import RunMetrics, aggregate, histogram, mechanism_metrics, write_csv
from .network import Network, SchemaError, example_network, network_from_dict, validate
from .scenario import PRESETS, GenerationError, ScenarioConfig, generate_scenario

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
MECHANISMS = ("aca", "cca")
CHECK_TOL = 1e-6

# Frozen outputs of the bundled example under the implemented rules (hand-checked).
EXPECTED_EXAMPLE = {
    "aca": {
        "allocated": [
            [0, 0, 0, 10, 0, 0, 80, 0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, 0, 0, 60, 0, 10, 0, 0],
            [0, 0, 0, 0, 0, 0, 0, 15, 70, 0, 0, 15],
        ],
        "final_prices": [0, 0, 0, 0, 0, 0, 3, 8, 0, 0, 0, 0],
        "payments": [240, 420, 120],
        "utilities": [720, 320, 1325],
        "r_anc": 260 / 810,
        "r_unc": 240 / 810,
    },
    "cca": {
        "allocated": [
            [0, 0, 0, 0, 0, 0, 80, 0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, 0, 0, 60, 0, 0, 0, 0],
            [0, 0, 0, 0, 0, 0, 0, 15, 70, 0, 0, 15],
        ],
        "payments": [117.5, 40, 110],
        "utilities": [842.5, 700, 1335],
        "r_anc": 240 / 810,
        "r_unc": 240 / 810,
    },
}


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


def tidy(x):
    """JSON-friendly copy with solver noise below 1e-9 rounded away."""
    if isinstance(x, dict):
        return {k: tidy(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [tidy(v) for v in x]
    if isinstance(x, np.ndarray):
        return tidy(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        r = round(float(x), 9)
        return 0.0 if r == 0 else r
    if isinstance(x, np.integer):
        return int(x)
    return x


def aca_report(network: Network, outcome) -> dict:
    mm = mechanism_metrics(network, outcome.utilities, outcome.allocated, outcome.flows)
    return {
        "allocated": outcome.allocated,
        "flows": outcome.flows,
        "final_prices": outcome.final_prices,
        "payments": outcome.payments,
        "utilities": [u.u for u in outcome.utilities],
        "round_had_bids": list(outcome.round_had_bids),
        "steps": outcome.steps,
        "total_utility": mm.total_utility,
        "income": mm.income,
        "r_anc": mm.r_anc,
        "r_unc": mm.r_unc,
        "unfairness": mm.unfairness,
    }


def cca_report(network: Network, outcome) -> dict:
    alloc = outcome.clearing.allocated
    mm = mechanism_metrics(network, outcome.utilities, alloc, alloc)
    return {
        "acceptance": {f"x_{b.player + 1}_{b.route_index}_{b.bid_index}": x
                       for b, x in zip(outcome.bids, outcome.clearing.acceptance) if x > 0},
        "allocated": alloc,
        "objective": outcome.clearing.objective,
        "payments": outcome.payments,
        "utilities": [u.u for u in outcome.utilities],
        "total_utility": mm.total_utility,
        "income": mm.income,
        "r_anc": mm.r_anc,
        "r_unc": mm.r_unc,
        "unfairness": mm.unfairness,
    }


def run_mechanisms(network: Network, mechanisms, trace=None, with_bids: bool = False) -> dict:
    report = {"products": network.product_labels()}
    if "aca" in mechanisms:
        report["aca"] = aca_report(network, run_auction(network, AcaConfig(), trace))
    if "cca" in mechanisms:
        outcome = run_cca(network)
        report["cca"] = cca_report(network, outcome)
        if with_bids:
            report["cca"]["bid_tables"] = bid_tables(network, outcome.bids)
    return report


def regression_failures(report: dict, expected: dict = EXPECTED_EXAMPLE) -> list[str]:
    out = []
    for mech, values in expected.items():
        got = report.get(mech)
        if got is None:
            out.append(f"{mech}: missing from report")
            continue
        for key, want in values.items():
            have = np.asarray(got[key], dtype=float)
            want = np.asarray(want, dtype=float)
            if have.shape != want.shape or not np.allclose(have, want, rtol=0, atol=CHECK_TOL):
                out.append(f"{mech}.{key}: expected {want.tolist()}, got {tidy(have.tolist())}")
    return out


def _matrix_text(rows, labels) -> str:
    width = max(6, *(len(s) for s in labels))
    head = "      " + "".join(f"{s:>{width}}" for s in labels)
    body = [f"P{i + 1:<5}" + "".join(f"{v:>{width}.4g}" for v in row) for i, row in enumerate(rows)]
    return "\n".join([head] + body)


def _vector_text(values) -> str:
    return "[" + ", ".join(f"{v:.6g}" for v in values) + "]"


def format_report(report: dict) -> str:
    labels = report["products"]
    lines = []
    if "aca" in report:
        a = report["aca"]
        lines += ["ACA", "allocated capacity:", _matrix_text(a["allocated"], labels),
                  f"final prices: {_vector_text(a['final_prices'])}",
                  f"payments: {_vector_text(a['payments'])}",
                  f"utilities: {_vector_text(a['utilities'])}",
                  f"rounds with bids: {a['round_had_bids']}  steps: {a['steps']}",
                  f"r_ANC = {a['r_anc']:.4f}  r_UNC = {a['r_unc']:.4f}  unfairness = {a['unfairness']:.6g}", ""]
    if "cca" in report:
        c = report["cca"]
        acc = ", ".join(f"{k}={v:.6g}" for k, v in c["acceptance"].items())
        lines += ["CCA", f"accepted: {acc}", "allocated capacity:", _matrix_text(c["allocated"], labels),
                  f"clearing objective: {c['objective']:.6g}",
                  f"payments: {_vector_text(c['payments'])}",
                  f"utilities: {_vector_text(c['utilities'])}",
                  f"r_ANC = {c['r_anc']:.4f}  r_UNC = {c['r_unc']:.4f}  unfairness = {c['unfairness']:.6g}", ""]
        if "bid_tables" in c:
            lines.append(format_bid_tables(c["bid_tables"]))
    return "\n".join(lines).rstrip() + "\n"


def format_bid_tables(tables) -> str:
    lines = []
    for t in tables:
        lines.append(f"Player {t['player']} routes:")
        for j, key in t["routes"].items():
            lines.append(f"  r{j}: {{{', '.join(str(k) for k in key)}}}")
        for name in ("quantities", "prices"):
            lines.append(f"  {name} (routes x steps):")
            for j, row in enumerate(t[name], start=1):
                lines.append(f"    r{j}: " + " ".join(f"{v:>8.6g}" for v in row))
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------- commands


def cmd_example(args) -> int:
    try:
        network = example_network()
    except (OSError, ValueError) as exc:
        print(f"error: bundled example fixture unusable: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = run_mechanisms(network, MECHANISMS, with_bids=args.bids)
    failures = regression_failures(report)
    if args.json:
        json.dump(tidy({**report, "regression_failures": failures}), sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        sys.stdout.write(format_report(tidy(report)))
        for f in failures:
            print(f"REGRESSION {f}")
        print("regression check:", "FAILED" if failures else "ok")
    return EXIT_FAIL if failures else EXIT_OK


def load_scenario(path: str) -> Network:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        network = network_from_dict(doc)
    except SchemaError as exc:
        raise InputError(f"{path}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    problems = validate(network)
    if problems:
        raise InputError(f"{path}: invalid network: " + "; ".join(problems))
    return network


def _mechanisms(choice: str) -> tuple[str, ...]:
    return MECHANISMS if choice == "both" else (choice,)


def cmd_run(args) -> int:
    network = load_scenario(args.scenario)
    mechs = _mechanisms(args.mechanism)
    sink = None
    trace_fh = None
    if args.trace is not None and "aca" in mechs:
        trace_fh = sys.stdout if args.trace == "-" else open(args.trace, "w")

        def sink(record):
            trace_fh.write(json.dumps(tidy(record)) + "\n")

    try:
        report = run_mechanisms(network, mechs, trace=sink, with_bids=args.bids)
    finally:
        if trace_fh is not None and trace_fh is not sys.stdout:
            trace_fh.close()
    if args.json:
        json.dump(tidy(report), sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        sys.stdout.write(format_report(tidy(report)))
    return EXIT_OK


@dataclass(frozen=True)
class CampaignSpec:
    config: ScenarioConfig
    count: int
    seed: int
    mechanisms: tuple[str, ...]
    out: str
    workers: int = 1
    preset: str | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not self.mechanisms:
            raise ValueError("at least one mechanism is required")
        if set(self.mechanisms) - set(MECHANISMS):
            raise ValueError(f"unknown mechanism in {self.mechanisms}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def describe(self) -> dict:
        """Everything that determines results; excludes the output location and worker count."""
        return {"preset": self.preset, "config": dataclasses.asdict(self.config), "count": self.count,
                "seed": self.seed, "mechanisms": list(self.mechanisms)}


DEFAULT_SPEC = {"preset": "small", "count": 1000, "seed": 0, "mechanisms": ["aca", "cca"],
                "out": "campaign_out", "workers": 1}


def resolve_spec(args) -> CampaignSpec:
    """Merge preset defaults < config file < command-line flags."""
    merged = dict(DEFAULT_SPEC)
    file_doc = {}
    if args.config:
        try:
            file_doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise InputError(f"{args.config}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        if not isinstance(file_doc, dict):
            raise InputError(f"{args.config}: expected a JSON object")
        unknown = set(file_doc) - {"preset", "config", "count", "seed", "mechanisms", "out", "workers"}
        if unknown:
            raise InputError(f"{args.config}: unknown keys {sorted(unknown)}")
        merged.update(file_doc)
    flags = {"preset": args.preset, "count": args.count, "seed": args.seed, "out": args.out,
             "workers": args.workers,
             "mechanisms": None if args.mechanism is None else list(_mechanisms(args.mechanism))}
    merged.update({k: v for k, v in flags.items() if v is not None})
    if args.preset is not None:
        merged.pop("config", None)  # an explicit preset flag beats a config-file scenario block

    preset = merged.get("preset")
    try:
        if "config" in merged and merged["config"] is not None:
            cfg_doc = merged["config"]
            if not isinstance(cfg_doc, dict):
                raise InputError("config: expected an object of scenario parameters")
            base = dataclasses.asdict(PRESETS[preset]) if preset in PRESETS else {}
            base.update(cfg_doc)
            config = ScenarioConfig(**base)
            preset = None
        else:
            if preset not in PRESETS:
                raise InputError(f"preset: unknown preset {preset!r}; choose from {sorted(PRESETS)}")
            config = PRESETS[preset]
        return CampaignSpec(config, int(merged["count"]), int(merged["seed"]),
                            tuple(merged["mechanisms"]), str(merged["out"]), int(merged["workers"]), preset)
    except (TypeError, ValueError) as exc:
        raise InputError(f"campaign spec: {exc}") from exc


def evaluate_network(network: Network, mechanisms, index: int = 0, seed: int = 0) -> RunMetrics:
    aca = cca = ended = None
    if "aca" in mechanisms:
        out = run_auction(network)
        aca = mechanism_metrics(network, out.utilities, out.allocated, out.flows)
        ended = out.ended_by_round_2
    if "cca" in mechanisms:
        out = run_cca(network)
        alloc = out.clearing.allocated
        cca = mechanism_metrics(network, out.utilities, alloc, alloc)
    return RunMetrics(index, seed, aca, cca, ended)


def _campaign_job(job):
    index, seed, config, mechanisms = job
    try:
        scenario = generate_scenario(config, seed, label=f"run{index}")
    except GenerationError as exc:
        return index, f"scenario {index} (seed {seed}): {exc}"
    return index, evaluate_network(scenario.network, mechanisms, index, seed)


def run_campaign(spec: CampaignSpec) -> list[RunMetrics]:
    jobs = [(i, spec.seed + i, spec.config, spec.mechanisms) for i in range(spec.count)]
    if spec.workers == 1:
        results = map(_campaign_job, jobs)
        return _collect(results)
    with multiprocessing.get_context("spawn").Pool(spec.workers) as pool:
        # imap keeps submission order while idle workers pull the next job
        return _collect(pool.imap(_campaign_job, jobs, chunksize=1))


def _collect(results) -> list[RunMetrics]:
    runs = []
    for index, res in results:
        if isinstance(res, str):
            raise GenerationError(res)
        runs.append(res)
    return runs


def _histogram_csv(hist: dict) -> str:
    edges, counts = hist["bin_edges"], hist["counts"]
    rows = ["bin_left,bin_right,count"]
    rows += [f"{edges[i]!r},{edges[i + 1]!r},{counts[i]}" for i in range(len(counts))]
    return "\n".join(rows) + "\n"


def write_campaign(spec: CampaignSpec, runs: list[RunMetrics]) -> dict:
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "runs.csv", "w", newline="") as fh:
        write_csv(runs, fh)
    stats = aggregate(runs)
    summary = {"spec": spec.describe(), "stats": stats.to_dict()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    series = {}
    if runs[0].aca is not None:
        series["U_T_ACA"] = [r.aca.total_utility for r in runs]
    if runs[0].cca is not None:
        series["U_T_CCA"] = [r.cca.total_utility for r in runs]
    if len(series) == 2:
        series["U_T_CCA_minus_ACA"] = [c - a for a, c in zip(series["U_T_ACA"], series["U_T_CCA"])]
    for name, values in series.items():
        (out / f"hist_{name}.csv").write_text(_histogram_csv(histogram(values)))
    return summary


def cmd_campaign(args) -> int:
    spec = resolve_spec(args)
    try:
        Path(spec.out).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"output directory {spec.out}: {exc.strerror or exc}") from exc
    try:
        runs = run_campaign(spec)
    except GenerationError as exc:
        raise InputError(str(exc)) from exc
    try:
        summary = write_campaign(spec, runs)
    except OSError as exc:
        raise InputError(f"output directory {spec.out}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.json:
        json.dump(summary, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        stats = summary["stats"]
        print(f"{stats['count']} scenarios written to {spec.out}")
        for mech in MECHANISMS:
            block = stats.get(mech)
            if block:
                parts = [f"{k} {v['mean']:.6g} (sd {v['std']:.4g})" for k, v in block.items()]
                print(f"{mech.upper()}: " + "; ".join(parts))
        if stats["fraction_aca_total_utility_negative"] is not None:
            print(f"fraction U_T_ACA < 0: {stats['fraction_aca_total_utility_negative']:.4f}")
            print(f"fraction ACA ended by round 2: {stats['fraction_aca_ended_by_round_2']:.4f}")
        if stats["fraction_aca_total_utility_above_cca"] is not None:
            print(f"fraction U_T_ACA > U_T_CCA: {stats['fraction_aca_total_utility_above_cca']:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capauction", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("example", help="run both mechanisms on the bundled four-node example")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.add_argument("--bids", action="store_true", help="include the CCA bid tables")
    p.set_defaults(func=cmd_example)

    p = sub.add_parser("run", help="run mechanisms on one network JSON file")
    p.add_argument("scenario")
    p.add_argument("--mechanism", choices=("aca", "cca", "both"), default="both")
    p.add_argument("--trace", nargs="?", const="-", metavar="FILE",
                   help="ACA step trace as JSON lines (stdout when no file is given)")
    p.add_argument("--bids", action="store_true", help="print the CCA bid tables")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("campaign", help="Monte Carlo comparison on random planar networks")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--mechanism", choices=("aca", "cca", "both"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)
    p.add_argument("--config", help="JSON campaign spec; command-line flags take precedence")
    p.add_argument("--json", action="store_true", help="print the summary as JSON")
    p.set_defaults(func=cmd_campaign)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
