"""Availability externalities: does reacting to who bought earlier pay off?

Three uniform buyers arrive in order. A non-owner keeps half the value once
one copy is around and 80% once two are. Prices that depend on the full
purchase history beat prices that see only how many copies were sold, but
only just.
"""
from socialgoods import Adaptive, AvailabilityBased, Scenario, Sequential, Uniform
from socialgoods import equilibrium as eq
from socialgoods import oracle
from socialgoods import pricing as pr

U = Uniform()
w = (0.0, 0.5, 0.8)
s = Scenario((U, U, U), AvailabilityBased(w), Sequential((0, 1, 2)))

full = oracle.optimal_adaptive_availability([U, U, U], w)
counts = oracle.optimal_adaptive_availability([U, U, U], w, restricted=True)
print(f"history-dependent prices  {full.revenue:.10f}")
print(f"count-dependent prices    {counts.revenue:.10f}")
print(f"difference                {full.revenue - counts.revenue:.3e}")

print("\nhistory prices (agent, earlier buyers) -> price")
for (i, S), p in sorted(full.prices.table.items(), key=lambda kv: (kv[0][0], sorted(kv[0][1]))):
    print(f"  {i}  {sorted(S)!s:8s} {p:.6f}")

rep = eq.solve(s, Adaptive(full.prices.table))
print("\nsequential solver on those prices:", round(rep.revenue, 10))

print("\nsimple schemes for comparison")
bound = oracle.availability_upper_bound([U, U, U], w)
for label, p in [("grad2", pr.availability_grad2([U, U, U], w))] + [
        (f"grad1 k={k}", pr.availability_grad1([U, U, U], w, k)[0]) for k in (1, 2, 3)]:
    print(f"  {label:10s} {eq.solve(s, p).revenue:.6f}")
print(f"  upper bound {bound.value:.6f}")
