"""How much can an epsilon-constrained gate react to its input?

The gate promises that no expert's routing probability changes by more
than a factor e^eps between any two inputs. Two ways to see it: random
stochastic tables built with the confinement, and an actual trained
gating network probed on fresh points it never saw.
"""

import numpy as np

from moecert import (
    LdpConfig,
    RandomSource,
    TrainConfig,
    gate_log_ratio_span,
    gate_table_ldp_span,
    make_ldp_gate_table,
    make_toy_dataset,
    train_once,
)

rng = RandomSource(2024)

print("random constrained tables (40 instances, 8 experts):")
print(f"  {'epsilon':>8}  {'worst span':>11}  {'limit':>8}")
for eps in (0.0, 0.25, 0.5, 1.0, 2.0, 4.0):
    spans = [
        gate_table_ldp_span(make_ldp_gate_table(40, 8, eps, rng))
        for _ in range(50)
    ]
    print(f"  {eps:>8.2f}  {max(spans):>11.6f}  {eps:>8.2f}")

print()
print("unconstrained tables for contrast:")
wild = max(
    gate_table_ldp_span(make_ldp_gate_table(40, 8, 0.0, rng, unconstrained=True))
    for _ in range(50)
)
print(f"  worst span {wild:.3f} (no finite guarantee)")

# Now a real gate. Train small mixtures at two budgets and measure the
# span over many more points than training ever touched.
print()
print("trained gates probed on 5000 fresh points:")
data = make_toy_dataset(m=160, d=3, seed=1, separation=3.0)
probe = np.vstack([
    rng.normal(0.0, s, size=(2500, 3)) for s in (1.0, 5.0)
])
config = dict(epochs=40, n_experts=6, hidden=8, batch_size=32, runs=1)
for eps in (0.5, 2.0):
    cfg = TrainConfig(ldp=LdpConfig.constrained(eps), **config)
    model, train_risk, _ = train_once(cfg, data, data, seed=7)
    span = gate_log_ratio_span(model, np.vstack([probe, data.features]))
    print(f"  eps={eps:<4g} span={span:.6f}  (train risk {train_risk:.3f})")

cfg = TrainConfig(ldp=LdpConfig.unconstrained(), **config)
model, train_risk, _ = train_once(cfg, data, data, seed=7)
span = gate_log_ratio_span(model, np.vstack([probe, data.features]))
print(f"  unconstrained span={span:.3f}  (train risk {train_risk:.3f})")
