"""Run the Monte Carlo comparison for every network size and print a summary table.

    python3 scripts/run_presets.py --count 1000 --seed 0 --out results --workers 4
"""

import argparse
import json
from pathlib import Path

from capauction.cli import CampaignSpec, run_campaign, write_campaign
from capauction.scenario import PRESETS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--presets", nargs="+", default=list(PRESETS), choices=list(PRESETS))
    args = ap.parse_args()

    header = f"{'preset':8} {'U_T ACA':>10} {'U_T CCA':>10} {'inc ACA':>9} {'inc CCA':>9} " \
             f"{'rANC ACA':>9} {'rANC CCA':>9} {'rUNC ACA':>9} {'UF ACA':>8} {'UF CCA':>8} {'neg':>6} {'by r2':>6}"
    rows = [header]
    for name in args.presets:
        spec = CampaignSpec(PRESETS[name], args.count, args.seed, ("aca", "cca"),
                            str(Path(args.out) / name), args.workers, name)
        stats = write_campaign(spec, run_campaign(spec))["stats"]
        a, c = stats["aca"], stats["cca"]
        rows.append(f"{name:8} {a['total_utility']['mean']:10.1f} {c['total_utility']['mean']:10.1f} "
                    f"{a['income']['mean']:9.1f} {c['income']['mean']:9.1f} {a['r_anc']['mean']:9.4f} "
                    f"{c['r_anc']['mean']:9.4f} {a['r_unc']['mean']:9.4f} {a['unfairness']['mean']:8.1f} "
                    f"{c['unfairness']['mean']:8.1f} {stats['fraction_aca_total_utility_negative']:6.3f} "
                    f"{stats['fraction_aca_ended_by_round_2']:6.3f}")
        print(rows[-1], flush=True)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    (Path(args.out) / "table.txt").write_text("\n".join(rows) + "\n")
    print("\n".join(rows))


if __name__ == "__main__":
    main()
