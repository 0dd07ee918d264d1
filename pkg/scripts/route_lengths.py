"""Mean number of edges on each consumer's cheapest route, per network size."""

import argparse

import numpy as np

from capauction.network import k_cheapest_routes
from capauction.scenario import PRESETS, generate_scenario

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--count", type=int, default=300)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

for name, cfg in PRESETS.items():
    lengths = []
    for s in range(args.seed, args.seed + args.count):
        net = generate_scenario(cfg, s).network
        lengths += [len(k_cheapest_routes(net, i, 1)[0].edges) for i in range(net.n_players)]
    lengths = np.array(lengths)
    print(f"{name:8} mean {lengths.mean():.3f}  sd {lengths.std(ddof=1):.3f}  n={len(lengths)}")
