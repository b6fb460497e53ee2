"""Two buyers, one public good: what each pricing scheme earns.

Every buyer enjoys the good in full once anyone buys it, so each one would
rather let the other pay. Sequential arrival makes the free-riding explicit;
simultaneous arrival can leave a whole continuum of equilibria.
"""
from socialgoods import Anonymous, Full, Scenario, Sequential, Simultaneous, Uniform
from socialgoods import equilibrium as eq
from socialgoods import oracle
from socialgoods import pricing as pr

U = Uniform()
seq = Scenario((U, U), Full(), Sequential((0, 1)))
sim = Scenario((U, U), Full(), Simultaneous())

print("Myerson revenue (one private item):", round(oracle.myerson_revenue([U, U]).value, 6))
best = oracle.grid_optimal_thresholds(seq, resolution=200)
print("best sequential revenue over thresholds:", round(best.revenue, 6), "+/-", round(best.error, 4))

for name in ("seq_full_prices", "halve_anonymous", "iid_nondiscriminatory"):
    s = seq if name == "seq_full_prices" else sim
    sched, tag = pr.build_scheme(name, s)
    if s.sequential:
        rev = eq.solve(s, sched).revenue
        print(f"{name:24s} revenue {rev:.6f}  guarantee 1/{tag.factor:g} of {tag.benchmark}")
    else:
        worst, top = eq.pessimistic_optimistic(s, sched)
        print(f"{name:24s} worst {worst:.6f} best {top:.6f}  guarantee 1/{tag.factor:g} of {tag.benchmark}")

# price 1/2 each: every profile with T1 * T2 = 1/2 is an equilibrium
scan = eq.scan_sim_equilibria(sim, Anonymous(0.5))
print("\nprice 0.5 to both, simultaneous arrival")
print("  reported equilibria:", [tuple(round(t, 4) for t in e.thresholds) for e in scan.equilibria])
print("  continua:", len(scan.continua))
print(f"  revenue ranges over [{scan.worst.revenue:.4f}, {scan.best.revenue:.4f}]")
