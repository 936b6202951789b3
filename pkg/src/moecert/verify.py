"""Executable checks of the mathematical claims on small finite instances.

Everything here runs on explicit tables (at most a dozen instances, a
handful of experts), where true risks are exact weighted sums and every
quantifier can be enumerated. The checks cover: the comparison inequality
Delta(e^eps R_S, e^-eps R) <= E_{i ~ g(x')} Delta(R_S_i, R_i) for convex
Delta decreasing in the first and increasing in the second argument; the
4*beta*b log-ratio guarantee for softmax gates of bounded scaled logits;
and the demonstration that constant (non-adaptive) experts force both the
empirical risk and the resulting certificate to stay large no matter how
expressive the gate is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import BoundInputs, rademacher_ldp_bound
from .numerics import RandomSource, binary_kl, log_softmax_with_bias, softmax_with_bias

__all__ = [
    "FiniteInstance",
    "LemmaCheck",
    "NonadaptiveDemo",
    "make_ldp_gate_table",
    "gate_table_ldp_span",
    "random_instance",
    "true_risk",
    "sample_risk",
    "monte_carlo_risk",
    "check_lemma_delta",
    "check_softmax_ldp",
    "nonadaptive_vacuousness_demo",
]


@dataclass
class FiniteInstance:
    """A fully enumerable world: instances, experts, gate, losses, D, and S."""

    gate_table: np.ndarray         # (K, n), rows sum to 1
    per_expert_losses: np.ndarray  # (K, n), values in [0, 1]
    data_weights: np.ndarray       # (K,), the distribution D
    sample_multiset: np.ndarray    # indices into 0..K-1, the sample S

    def __post_init__(self):
        self.gate_table = np.asarray(self.gate_table, dtype=np.float64)
        self.per_expert_losses = np.asarray(self.per_expert_losses, dtype=np.float64)
        self.data_weights = np.asarray(self.data_weights, dtype=np.float64)
        self.sample_multiset = np.asarray(self.sample_multiset, dtype=np.intp)
        K, n = self.gate_table.shape
        if self.per_expert_losses.shape != (K, n):
            raise ValueError("loss table shape does not match gate table")
        if np.any(self.gate_table < 0) or np.any(np.abs(self.gate_table.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("gate table rows must be probability vectors")
        if np.any(self.per_expert_losses < 0) or np.any(self.per_expert_losses > 1):
            raise ValueError("losses must lie in [0, 1]")
        if (
            self.data_weights.shape != (K,)
            or np.any(self.data_weights < 0)
            or abs(float(self.data_weights.sum()) - 1.0) > 1e-9
        ):
            raise ValueError("data_weights must be a probability vector over instances")
        if self.sample_multiset.size < 1:
            raise ValueError("sample must be nonempty")
        if np.any(self.sample_multiset < 0) or np.any(self.sample_multiset >= K):
            raise ValueError("sample indices out of range")

    @property
    def instance_count(self) -> int:
        return self.gate_table.shape[0]

    @property
    def expert_count(self) -> int:
        return self.gate_table.shape[1]


def make_ldp_gate_table(
    instance_count: int,
    expert_count: int,
    epsilon: float,
    rng: RandomSource,
    unconstrained: bool = False,
) -> np.ndarray:
    """Random row-stochastic table with the log-ratio guarantee built in.

    Rows are softmax(logits + bias) with per-instance logits confined to
    [-eps/4, +eps/4] and one shared bias vector, so every probability
    ratio across instances is at most e^eps. The unconstrained flag skips
    the confinement and yields arbitrary stochastic rows.
    """
    if instance_count < 1 or expert_count < 1:
        raise ValueError("need at least one instance and one expert")
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    if unconstrained:
        logits = rng.normal(0.0, 2.0, size=(instance_count, expert_count))
    else:
        logits = rng.uniform(-epsilon / 4.0, epsilon / 4.0, size=(instance_count, expert_count))
    bias = rng.normal(0.0, 1.0, size=expert_count)
    return softmax_with_bias(logits, bias)


def gate_table_ldp_span(table) -> float:
    """Worst log-ratio max_{i, x, x'} ln(g_i(x)/g_i(x')) of a stochastic table."""
    t = np.asarray(table, dtype=np.float64)
    if np.any(t <= 0):
        raise ValueError("table entries must be strictly positive for ratio checks")
    log_t = np.log(t)
    return float(np.max(log_t.max(axis=0) - log_t.min(axis=0)))


def random_instance(
    rng: RandomSource,
    epsilon: float,
    instance_count: int | None = None,
    expert_count: int | None = None,
    sample_size: int | None = None,
) -> FiniteInstance:
    """Random enumerable world with an epsilon-respecting gate."""
    K = int(instance_count if instance_count is not None else rng.integers(2, 13))
    n = int(expert_count if expert_count is not None else rng.integers(1, 7))
    s = int(sample_size if sample_size is not None else rng.integers(3, 41))
    weights = rng.uniform(0.05, 1.0, size=K)
    return FiniteInstance(
        gate_table=make_ldp_gate_table(K, n, epsilon, rng),
        per_expert_losses=rng.uniform(0.0, 1.0, size=(K, n)),
        data_weights=weights / weights.sum(),
        sample_multiset=rng.integers(0, K, size=s),
    )


def true_risk(instance: FiniteInstance) -> float:
    """Exact mixture risk under D: sum_x D(x) sum_i g_i(x) loss_i(x)."""
    per_instance = np.sum(instance.gate_table * instance.per_expert_losses, axis=1)
    return float(instance.data_weights @ per_instance)


def sample_risk(instance: FiniteInstance) -> float:
    """Exact mixture risk on the sample multiset S."""
    rows = instance.sample_multiset
    per_instance = np.sum(instance.gate_table[rows] * instance.per_expert_losses[rows], axis=1)
    return float(per_instance.mean())


def monte_carlo_risk(instance: FiniteInstance, draws: int, rng: RandomSource) -> float:
    """Sampled estimate of true_risk: x ~ D, i ~ g(x), average loss_i(x)."""
    if draws < 1:
        raise ValueError("need at least one draw")
    d_cdf = np.cumsum(instance.data_weights)
    d_cdf[-1] = max(d_cdf[-1], 1.0)
    xs = np.searchsorted(d_cdf, rng.uniform(size=draws), side="right")
    xs = np.minimum(xs, instance.instance_count - 1)
    g_cdf = np.cumsum(instance.gate_table, axis=1)
    us = rng.uniform(size=draws)
    experts = np.sum(us[:, None] > g_cdf[xs], axis=1)
    experts = np.minimum(experts, instance.expert_count - 1)
    return float(instance.per_expert_losses[xs, experts].mean())


def _per_expert_risks(instance: FiniteInstance) -> tuple[np.ndarray, np.ndarray]:
    true_i = instance.data_weights @ instance.per_expert_losses
    sample_i = instance.per_expert_losses[instance.sample_multiset].mean(axis=0)
    return sample_i, true_i


@dataclass
class LemmaCheck:
    lhs: float
    rhs: float
    holds: bool
    applicable: bool


def check_lemma_delta(
    instance: FiniteInstance,
    epsilon: float,
    delta_kind: str,
    lam: float = 1.0,
) -> LemmaCheck:
    """Brute-force the comparison inequality on one instance.

    delta_kind selects Delta: "linear" is b - a, "catoni" is
    b - (2 lam/(2 lam - 1)) a, and "kl" is the binary KL divergence. The
    right side is evaluated at every x' and the minimum (the hardest
    reference input) is reported. The kl case only makes sense on the
    monotone region e^eps R_S <= e^-eps R (and e^eps R_S <= 1); outside it
    the check is marked inapplicable, mirroring the low-risk branch of the
    KL-inversion theorem.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be nonnegative, got {epsilon}")
    r_sample = sample_risk(instance)
    r_true = true_risk(instance)
    a = math.exp(epsilon) * r_sample
    b = math.exp(-epsilon) * r_true
    sample_i, true_i = _per_expert_risks(instance)

    if delta_kind == "linear":
        delta = lambda p, q: q - p
    elif delta_kind == "catoni":
        if not lam > 0.5:
            raise ValueError(f"lambda must exceed 1/2, got {lam}")
        c = 2.0 * lam / (2.0 * lam - 1.0)
        delta = lambda p, q: q - c * p
    elif delta_kind == "kl":
        if a > min(b, 1.0):
            return LemmaCheck(lhs=math.nan, rhs=math.nan, holds=True, applicable=False)
        delta = binary_kl
    else:
        raise ValueError(f"unknown delta kind {delta_kind!r}")

    lhs = float(delta(a, b))
    per_expert = np.array([delta(float(p), float(q)) for p, q in zip(sample_i, true_i)])
    rhs = float(np.min(instance.gate_table @ per_expert))
    return LemmaCheck(lhs=lhs, rhs=rhs, holds=lhs <= rhs + 1e-12, applicable=True)


def check_softmax_ldp(f_table, beta: float, biases, b: float | None = None) -> float:
    """Log-ratio span of the gate softmax(beta * f + bias); must be <= 4 beta b.

    f_table holds f(x) per row with |f| <= b (b defaults to the observed
    max-abs). Exceeding the guarantee raises, since it would falsify the
    underlying claim; the returned span lets callers measure tightness.
    """
    F = np.asarray(f_table, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] < 1:
        raise ValueError("f_table must be a nonempty (instances, experts) matrix")
    if beta < 0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    cap = float(np.max(np.abs(F))) if b is None else float(b)
    if np.any(np.abs(F) > cap + 1e-15):
        raise ValueError(f"f_table exceeds the stated magnitude cap {cap}")
    biases = np.asarray(biases, dtype=np.float64)
    log_g = log_softmax_with_bias(beta * F, biases)
    span = float(np.max(log_g.max(axis=0) - log_g.min(axis=0)))
    limit = 4.0 * beta * cap
    if span > limit + 1e-12:
        raise RuntimeError(f"log-ratio span {span} exceeds the guarantee {limit}")
    return span


@dataclass
class NonadaptiveDemo:
    empirical_risk_lower: float
    bound_value: float
    empirical_risk: float


def nonadaptive_vacuousness_demo(
    epsilon: float,
    m: int,
    rng: RandomSource,
    delta: float = 0.05,
    instance_count: int = 10,
) -> NonadaptiveDemo:
    """Constant experts cannot beat chance, and the certificate shows it.

    Two constant experts (always +1, always -1) face balanced labels drawn
    independently of the input, routed by a random epsilon-respecting
    gate. Whatever the gate does, the empirical risk is at least
    e^-eps (1/m) sum_j max_x' g_{-y_j}(x'), which concentrates near 1/2,
    and the complexity-free Rademacher certificate is then at least about
    e^eps / 2: driving the risk down requires experts that adapt.
    """
    if m < 2:
        raise ValueError("need at least two examples")
    table = make_ldp_gate_table(instance_count, 2, epsilon, rng)  # column 0: +1, column 1: -1
    xs = np.asarray(rng.integers(0, instance_count, size=m))
    labels = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)  # balanced, independent of xs

    # Expert disagreeing with y_j: column 1 when y_j = +1, column 0 when y_j = -1.
    wrong_col = np.where(labels > 0, 1, 0)
    risk = float(table[xs, wrong_col].mean())
    col_max = table.max(axis=0)
    lower = math.exp(-epsilon) * float(col_max[wrong_col].mean())

    inputs = BoundInputs(
        m=m, n=2, delta=delta, epsilon=epsilon, empirical_risk=risk,
        per_expert_kl=np.zeros(2), gate_at_xprime=table[0],
        per_expert_rademacher=np.zeros(2),
    )
    return NonadaptiveDemo(
        empirical_risk_lower=lower,
        bound_value=rademacher_ldp_bound(inputs),
        empirical_risk=risk,
    )
