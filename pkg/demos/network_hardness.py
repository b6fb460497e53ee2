"""Network externalities: buyers form an independent set.

A buyer's neighbours get the good for free, so no two neighbours both buy.
With values fixed at 1, revenue is the number of buyers and can never exceed
the largest independent set of the graph.
"""
import numpy as np

from socialgoods import NetworkBased
from socialgoods import equilibrium as eq
from socialgoods import oracle

rng = np.random.Generator(np.random.Philox(key=4))
print(f"{'n':>3} {'edges':>5} {'buyers':>6} {'max IS':>6} {'seq = tree':>10}")
for _ in range(8):
    n = int(rng.integers(4, 11))
    edges = tuple((a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < 0.35)
    g = NetworkBased(n, edges)
    prices = [float(x) for x in rng.uniform(0.0, 1.3, n)]
    greedy = eq.solve_network_sim_greedy(g, prices)
    size, _ = oracle.max_independent_set(g)
    order = tuple(int(x) for x in rng.permutation(n))
    same = eq.solve_network_seq_fixed_values(g, prices, order) == oracle.subgame_perfect_network(
        g, prices, [1.0] * n, order)
    print(f"{n:3d} {len(edges):5d} {len(greedy.support):6d} {size:6d} {str(same):>10}")
