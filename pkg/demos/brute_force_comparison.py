# Brute-force the comparison inequality behind the certificates on small
# enumerable worlds: random gate tables, random losses, random samples.
# The minimum over reference inputs on the right side is what makes the
# statement nontrivial; slack below zero anywhere would be a bug.

import math

from moecert import RandomSource, check_lemma_delta, random_instance

rng = RandomSource(99)
trials = 2000

for eps in (0.0, 0.5, 1.0, 3.0):
    worst = {"linear": math.inf, "catoni": math.inf, "kl": math.inf}
    applicable = {"linear": 0, "catoni": 0, "kl": 0}
    for _ in range(trials):
        inst = random_instance(rng, eps)
        lam = float(rng.uniform(0.6, 5.0))
        for kind in worst:
            res = check_lemma_delta(inst, eps, kind, lam=lam)
            if not res.holds:
                raise SystemExit(f"violation: eps={eps} kind={kind}")
            if res.applicable:
                applicable[kind] += 1
                worst[kind] = min(worst[kind], res.rhs - res.lhs)
    print(f"eps={eps:g}")
    for kind in ("linear", "catoni", "kl"):
        if applicable[kind] == 0:
            # The kl form needs e^eps R_S <= e^-eps R; with losses uniform
            # in [0, 1] that region empties out as eps grows.
            print(f"  {kind:<7} no applicable instances at this budget")
            continue
        print(
            f"  {kind:<7} min slack {worst[kind]:+.3e} "
            f"over {applicable[kind]}/{trials} applicable instances"
        )
