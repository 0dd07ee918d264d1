"""Both mechanisms on the bundled four-node network, plus a capacity sensitivity check.

The second block re-clears the CCA with edges 1 and 2 limited to 70 units,
which changes the optimal acceptance pattern and the VCG payments.
"""

import dataclasses

from capauction.cli import format_report, run_mechanisms, tidy
from capauction.network import Network, example_network

net = example_network()
print(format_report(tidy(run_mechanisms(net, ("aca", "cca")))))

edges = tuple(dataclasses.replace(e, capacity_pos=70.0, capacity_neg=70.0) if e.id in (1, 2) else e
              for e in net.edges)
tight = Network(net.nodes, edges, net.sources, net.consumers)
print("-- edges 1 and 2 at capacity 70 --")
print(format_report(tidy(run_mechanisms(tight, ("cca",)))))
