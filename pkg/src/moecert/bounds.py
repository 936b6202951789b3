"""Risk certificates for privacy-gated mixtures of linear experts.

Three high-probability upper bounds on the true risk are computed from a
trained model and its training sample: a Catoni-style PAC-Bayes bound, a
Seeger-style PAC-Bayes bound obtained by inverting the binary KL, and a
Rademacher-complexity bound. All three share the same structure: the
empirical risk is inflated by exp(eps), the per-expert complexity terms
are averaged under the routing distribution at a reference input x' (free
to choose, so it is optimized), and the union bound over experts
contributes log(n).

The PAC-Bayes instantiation is the unit-variance Gaussian pair: posterior
Q_i centered at the trained weight vector w_i, prior P_i at the origin.
Under it the probit training loss equals the expected 0-1 loss of the
randomized linear classifier exactly, and KL(Q_i || P_i) = ||w_i||^2 / 2,
so the certificates apply verbatim to the risk being trained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import MoEModel, gate, mixture_risk
from .numerics import kl_inverse_upper

__all__ = [
    "BoundInputs",
    "BoundReport",
    "gaussian_kl",
    "select_xprime",
    "catoni_base",
    "catoni_ldp_bound",
    "seeger_ldp_bound",
    "rademacher_base",
    "rademacher_ldp_bound",
    "linear_expert_rademacher",
    "naive_pacbayes_comparison",
    "epsilon_grid_bound",
    "certificate",
]

DEFAULT_LAMBDA_GRID = (0.6, 0.8, 1.0, 2.0, 5.0)


@dataclass
class BoundInputs:
    """Everything a bound evaluation reads, echoed in reports for auditability."""

    m: int
    n: int
    delta: float
    epsilon: float
    empirical_risk: float
    per_expert_kl: np.ndarray
    gate_at_xprime: np.ndarray
    lam: float | None = None
    per_expert_rademacher: np.ndarray | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be positive, got {self.m}")
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not (self.epsilon >= 0.0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be a nonnegative real, got {self.epsilon}")
        if not (0.0 <= self.empirical_risk <= 1.0):
            raise ValueError(f"empirical risk must lie in [0, 1], got {self.empirical_risk}")
        if self.lam is not None and not self.lam > 0.5:
            raise ValueError(f"lambda must exceed 1/2, got {self.lam}")
        self.per_expert_kl = np.asarray(self.per_expert_kl, dtype=np.float64)
        if self.per_expert_kl.shape != (self.n,) or np.any(self.per_expert_kl < 0):
            raise ValueError("per_expert_kl must be a nonnegative vector of length n")
        self.gate_at_xprime = np.asarray(self.gate_at_xprime, dtype=np.float64)
        if (
            self.gate_at_xprime.shape != (self.n,)
            or np.any(self.gate_at_xprime < 0)
            or abs(float(self.gate_at_xprime.sum()) - 1.0) > 1e-9
        ):
            raise ValueError("gate_at_xprime must be a probability vector of length n")
        if self.per_expert_rademacher is not None:
            self.per_expert_rademacher = np.asarray(self.per_expert_rademacher, dtype=np.float64)
            if self.per_expert_rademacher.shape != (self.n,) or np.any(self.per_expert_rademacher < 0):
                raise ValueError("per_expert_rademacher must be a nonnegative vector of length n")

    @property
    def weighted_kl(self) -> float:
        return float(self.gate_at_xprime @ self.per_expert_kl)

    @property
    def weighted_rademacher(self) -> float:
        if self.per_expert_rademacher is None:
            raise ValueError("per-expert Rademacher complexities were not provided")
        return float(self.gate_at_xprime @ self.per_expert_rademacher)

    def _need_lam(self) -> float:
        if self.lam is None:
            raise ValueError("this bound needs lambda > 1/2")
        return self.lam


def gaussian_kl(w) -> float:
    """KL between unit-variance Gaussians centered at w and at the origin: ||w||^2/2."""
    wv = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(wv)):
        raise ValueError("weight vector must be finite")
    return 0.5 * float(np.sum(wv * wv))


def select_xprime(model: MoEModel, eval_points, penalty) -> tuple[int, float]:
    """Reference input minimizing the gate-weighted penalty.

    The certificates hold for every x', so picking the argmin over any
    candidate set is sound; ties break to the lowest index.
    """
    pts = np.atleast_2d(np.asarray(eval_points, dtype=np.float64))
    if pts.shape[0] == 0:
        raise ValueError("need at least one candidate input")
    pen = np.asarray(penalty, dtype=np.float64)
    if pen.shape != (model.n,) or np.any(pen < 0):
        raise ValueError("penalty must be a nonnegative vector of length n")
    weighted = gate(model, pts) @ pen
    idx = int(np.argmin(weighted))
    return idx, float(weighted[idx])


def catoni_base(inputs: BoundInputs, i: int) -> float:
    """Single-expert Catoni form: (2L/(2L-1)) (R_S + (L/m)(KL_i + ln(1/delta)))."""
    lam = inputs._need_lam()
    if not (0 <= i < inputs.n):
        raise ValueError(f"expert index {i} out of range")
    kl_i = float(inputs.per_expert_kl[i])
    return (2.0 * lam / (2.0 * lam - 1.0)) * (
        inputs.empirical_risk + (lam / inputs.m) * (kl_i + math.log(1.0 / inputs.delta))
    )


def catoni_ldp_bound(inputs: BoundInputs) -> float:
    """(2L e^eps/(2L-1)) (e^eps R_S + (L/m)(sum_i g_i(x') KL_i + ln(n/delta)))."""
    lam = inputs._need_lam()
    e = math.exp(inputs.epsilon)
    return (2.0 * lam * e / (2.0 * lam - 1.0)) * (
        e * inputs.empirical_risk
        + (lam / inputs.m) * (inputs.weighted_kl + math.log(inputs.n / inputs.delta))
    )


def seeger_ldp_bound(inputs: BoundInputs) -> float:
    """KL-inversion form: min(1, e^eps kl_inverse_upper(e^eps R_S, B)).

    B = (sum_i g_i(x') KL_i + ln(2 n sqrt(m)/delta)) / m. Since the
    inversion never falls below its first argument, the returned value
    also covers the low-risk branch R < e^{2 eps} R_S. When e^eps R_S
    already exceeds 1 the bound is vacuous and 1 is returned.
    """
    if inputs.m < 8:
        raise ValueError(f"this bound requires m >= 8, got {inputs.m}")
    e = math.exp(inputs.epsilon)
    q = e * inputs.empirical_risk
    if q > 1.0:
        return 1.0
    budget = (inputs.weighted_kl + math.log(2.0 * inputs.n * math.sqrt(inputs.m) / inputs.delta)) / inputs.m
    return min(1.0, e * kl_inverse_upper(q, budget))


def rademacher_base(inputs: BoundInputs, i: int) -> float:
    """Single-class form: R_S + 2 Rad_i + sqrt(2 ln(2/delta)/m)."""
    if not (0 <= i < inputs.n):
        raise ValueError(f"expert index {i} out of range")
    if inputs.per_expert_rademacher is None:
        raise ValueError("per-expert Rademacher complexities were not provided")
    rad_i = float(inputs.per_expert_rademacher[i])
    return inputs.empirical_risk + 2.0 * rad_i + math.sqrt(2.0 * math.log(2.0 / inputs.delta) / inputs.m)


def rademacher_ldp_bound(inputs: BoundInputs) -> float:
    """e^eps (e^eps R_S + 2 sum_i g_i(x') Rad_i + sqrt(2 ln(2n/delta)/m))."""
    e = math.exp(inputs.epsilon)
    return e * (
        e * inputs.empirical_risk
        + 2.0 * inputs.weighted_rademacher
        + math.sqrt(2.0 * math.log(2.0 * inputs.n / inputs.delta) / inputs.m)
    )


def linear_expert_rademacher(weight_norm_cap: float, m: int) -> float:
    """Complexity of the probit loss over norm-capped linear experts: cap/sqrt(2 pi m).

    Valid because the loss is (1/sqrt(2 pi))-Lipschitz in the margin and
    margins use unit-normalized inputs.
    """
    if weight_norm_cap <= 0:
        raise ValueError(f"weight_norm_cap must be positive, got {weight_norm_cap}")
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    return weight_norm_cap / math.sqrt(2.0 * math.pi * m)


def naive_pacbayes_comparison(inputs: BoundInputs, gating_kl: float) -> float:
    """Generic PAC-Bayes applied to the whole architecture, for contrast.

    Uses the Catoni form with complexity gating_kl + sum_i KL_i (the sum,
    not the weighted average) and no ln(n) or e^eps factors.
    """
    lam = inputs._need_lam()
    if gating_kl < 0:
        raise ValueError(f"gating_kl must be nonnegative, got {gating_kl}")
    total_kl = gating_kl + float(inputs.per_expert_kl.sum())
    return (2.0 * lam / (2.0 * lam - 1.0)) * (
        inputs.empirical_risk + (lam / inputs.m) * (total_kl + math.log(1.0 / inputs.delta))
    )


@dataclass
class BoundReport:
    """All certificate values for one model, raw (vacuous values kept verbatim)."""

    inputs: BoundInputs
    catoni_ldp: float
    seeger_ldp: float | None
    rademacher_ldp: float
    naive_comparison: float
    chosen_xprime_index: int
    catoni_grid: list[tuple[float, float]] = field(default_factory=list)
    catoni_delta_each: float | None = None
    rademacher_cap: float | None = None
    rademacher_cap_source: str = "user"
    notes: list[str] = field(default_factory=list)

    def values(self) -> dict[str, float]:
        out = {"catoni_ldp": self.catoni_ldp, "rademacher_ldp": self.rademacher_ldp}
        if self.seeger_ldp is not None:
            out["seeger_ldp"] = self.seeger_ldp
        return out

    def vacuous(self) -> dict[str, bool]:
        return {name: value > 1.0 for name, value in self.values().items()}

    def headline(self) -> float:
        """Best certificate, clamped at 1 (a 0-1 risk cannot exceed 1)."""
        return min(min(self.values().values()), 1.0)

    def to_record(self) -> dict:
        return {
            "catoni_ldp": self.catoni_ldp,
            "seeger_ldp": self.seeger_ldp,
            "rademacher_ldp": self.rademacher_ldp,
            "naive_comparison": self.naive_comparison,
            "headline": self.headline(),
            "vacuous": self.vacuous(),
            "chosen_xprime_index": self.chosen_xprime_index,
            "catoni_grid": [[lam, value] for lam, value in self.catoni_grid],
            "catoni_delta_each": self.catoni_delta_each,
            "rademacher_cap": self.rademacher_cap,
            "rademacher_cap_source": self.rademacher_cap_source,
            "notes": list(self.notes),
            "inputs": {
                "m": self.inputs.m,
                "n": self.inputs.n,
                "delta": self.inputs.delta,
                "epsilon": self.inputs.epsilon,
                "lambda": self.inputs.lam,
                "empirical_risk": self.inputs.empirical_risk,
                "per_expert_kl": self.inputs.per_expert_kl.tolist(),
                "gate_at_xprime": self.inputs.gate_at_xprime.tolist(),
                "per_expert_rademacher": (
                    None
                    if self.inputs.per_expert_rademacher is None
                    else self.inputs.per_expert_rademacher.tolist()
                ),
            },
        }


def epsilon_grid_bound(reports: list[BoundReport], delta: float) -> BoundReport:
    """Best report over an epsilon grid whose members each used delta/k.

    The union bound charges delta/k per grid point, so every constituent
    must have been evaluated at that confidence; mismatches are rejected.
    """
    if not reports:
        raise ValueError("need at least one report")
    share = delta / len(reports)
    for r in reports:
        if abs(r.inputs.delta - share) > 1e-12:
            raise ValueError(
                f"grid member used delta={r.inputs.delta}, expected {share} for a {len(reports)}-point grid"
            )
    best = min(range(len(reports)), key=lambda k: (reports[k].headline(), k))
    return reports[best]


def certificate(
    model: MoEModel,
    X,
    y,
    delta: float = 0.05,
    lam_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID,
    rademacher_cap: float | None = None,
    epsilon: float | None = None,
) -> BoundReport:
    """Full certificate for a trained model on its training sample.

    The model's own epsilon is used when it is constrained; otherwise an
    explicit epsilon the gate is trusted to satisfy must be supplied.
    Lambda is chosen over a small grid with each member on delta/len(grid)
    (union bound); Seeger and Rademacher each use the full delta. The
    default Rademacher cap, max_i ||w_i|| of the trained model, is
    data-dependent and flagged as such in the report.
    """
    if model.ldp.is_constrained:
        eps = float(model.ldp.epsilon)
        if epsilon is not None and abs(epsilon - eps) > 1e-12:
            raise ValueError("model already carries a different epsilon")
    else:
        if epsilon is None:
            raise ValueError("unconstrained model: supply the epsilon its gate is assumed to satisfy")
        eps = float(epsilon)
    if not lam_grid:
        raise ValueError("lambda grid must be nonempty")

    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    m = X.shape[0]
    risk = mixture_risk(model, X, y)
    kls = 0.5 * np.sum(model.experts.weights**2, axis=1)

    notes: list[str] = []
    if rademacher_cap is None:
        cap = float(np.max(np.linalg.norm(model.experts.weights, axis=1)))
        cap_source = "posthoc-max-norm"
        notes.append(
            "rademacher cap taken from the trained weights; a cap fixed before "
            "seeing the data is required for the strict reading of the theorem"
        )
    else:
        cap = float(rademacher_cap)
        cap_source = "user"
    rad = np.full(model.n, linear_expert_rademacher(cap, m)) if cap > 0 else np.zeros(model.n)

    idx, _ = select_xprime(model, X, kls)
    gate_x = gate(model, X[idx])

    delta_each = delta / len(lam_grid)
    grid: list[tuple[float, float]] = []
    for lam in lam_grid:
        inp = BoundInputs(
            m=m, n=model.n, delta=delta_each, epsilon=eps, empirical_risk=risk,
            per_expert_kl=kls, gate_at_xprime=gate_x, lam=lam,
        )
        grid.append((lam, catoni_ldp_bound(inp)))
    best_lam, best_catoni = min(grid, key=lambda t: t[1])

    inputs = BoundInputs(
        m=m, n=model.n, delta=delta, epsilon=eps, empirical_risk=risk,
        per_expert_kl=kls, gate_at_xprime=gate_x, lam=best_lam,
        per_expert_rademacher=rad,
    )
    if m >= 8:
        seeger = seeger_ldp_bound(inputs)
    else:
        seeger = None
        notes.append("sample too small for the KL-inversion bound (needs m >= 8)")

    g = model.gating
    gating_kl = 0.5 * sum(
        float(np.sum(t**2)) for t in (g.W1, g.b1, g.W2, g.b2, g.W3, g.b3)
    )
    return BoundReport(
        inputs=inputs,
        catoni_ldp=best_catoni,
        seeger_ldp=seeger,
        rademacher_ldp=rademacher_ldp_bound(inputs),
        naive_comparison=naive_pacbayes_comparison(inputs, gating_kl),
        chosen_xprime_index=idx,
        catoni_grid=grid,
        catoni_delta_each=delta_each,
        rademacher_cap=cap,
        rademacher_cap_source=cap_source,
        notes=notes,
    )
