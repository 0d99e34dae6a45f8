"""
Participation loss budgets
==========================

"""
from bosonic_twin.lossbudget import FIXTURES, LossChannel, compute_budget, dominant_channel, load_budget, seam_relevance_q

for name in FIXTURES:
    b = load_budget(name)
    (top, share), *_ = dominant_channel(b)
    print(f"{name:<24} Q_i >= {b.total.value:.3g}  (one-figure sum {b.total_from_displayed.rounded():.0e})"
          f"  dominated by {top} ({share:.0%})")

# what the package conductor costs: swap 6061 for 5N aluminum
b6061 = load_budget("table1_6061")
swapped = [LossChannel(c.name, c.kind, c.p, 3000 if c.name == "Package conductor" else c.q, c.y_seam, c.g_seam, c.bound)
           for c in b6061.channels]
print("6061 with a 5N conductor:", f"{compute_budget(swapped).total.value:.3g}")

# a seam matters only once Q approaches g/y
for g in (1e4, 1e7):
    print(f"seam with g = {g:.0e}: relevant near Q = {seam_relevance_q(1.1e-4, g):.2g}")
