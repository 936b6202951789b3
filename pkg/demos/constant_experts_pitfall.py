"""Why the experts have to adapt: constant predictors stay vacuous.

Take two experts that ignore the input entirely (always +1, always -1)
and labels that are balanced coin flips independent of the input. The
gate can route however it wants within its epsilon budget; no routing
scheme beats chance, because neither expert knows anything. The
certificate machinery agrees: the empirical risk is provably pinned near
e^-eps / 2 from below, and the complexity-free certificate sits at
roughly e^eps / 2 or worse. Tightening epsilon toward zero makes both
sides converge to exactly 1/2.

The lesson is that the epsilon constraint only restricts the *gate*.
All the fitting capacity lives in the experts, and the bounds charge
for it through the per-expert KL and Rademacher terms. Constant experts
are free of charge and worth what they cost.
"""

import math

from moecert import RandomSource, nonadaptive_vacuousness_demo

m = 20_000
print(f"two constant experts, balanced labels, m={m}")
print(f"  {'epsilon':>8} {'risk':>8} {'provable floor':>15} {'certificate':>12}")
for k, eps in enumerate((0.0, 0.25, 0.5, 1.0, 2.0)):
    demo = nonadaptive_vacuousness_demo(eps, m, RandomSource(500 + k))
    print(
        f"  {eps:>8.2f} {demo.empirical_risk:>8.4f} "
        f"{demo.empirical_risk_lower:>15.4f} {demo.bound_value:>12.4f}"
    )
    assert demo.empirical_risk >= demo.empirical_risk_lower - 1e-12

print()
print("for comparison, e^-eps/2 and e^eps/2 at the same budgets:")
for eps in (0.0, 0.25, 0.5, 1.0, 2.0):
    print(f"  {eps:>8.2f} {math.exp(-eps) / 2:>8.4f} {'':>15} {math.exp(eps) / 2:>12.4f}")
