"""Exact gradients of the empirical risk by hand-rolled backpropagation.

The risk R(theta) = (1/m) sum_j sum_i g_i(x_j) Phi(y_j <w_i, x_j> / ||x_j||)
is differentiated with respect to every parameter: expert weights, the
three gate layers, and the routing bias. Two gate paths exist. In
unconstrained mode the logits are W3 f0(x). In constrained mode they are
scaled by s(x) = eps / (4 ||f0(x)|| ||W3||_F), so the backward pass must
route gradients through both the numerator and the two norms in the
denominator (quotient rule); W3 therefore receives a rank-one correction
proportional to itself, and f0 one proportional to itself.

Convention at kinks and degenerate points: relu'(0) = 0, and wherever the
projection's denominator vanishes (zero hidden vector or zero W3) the
forward value is 0 and the gradient through the projection is taken as 0,
matching the continuous extension used in the forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MoEModel, _check_input
from .numerics import gaussian_pdf, probit, softmax_with_bias

__all__ = [
    "ParamGradients",
    "ForwardCache",
    "forward_cache",
    "loss_and_gradients",
    "finite_difference_gradients",
    "finite_difference_check",
    "max_relative_error",
]


@dataclass
class ParamGradients:
    """Partial derivatives of the empirical risk, one array per parameter."""

    expert_weights: np.ndarray  # (n, d)
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "expert_weights": self.expert_weights,
            "W1": self.W1,
            "b1": self.b1,
            "W2": self.W2,
            "b2": self.b2,
            "W3": self.W3,
            "b3": self.b3,
        }


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass, kept for the backward pass."""

    X: np.ndarray
    y: np.ndarray
    Z1: np.ndarray      # pre-relu first layer
    A1: np.ndarray      # relu output
    Z2: np.ndarray      # pre-tanh second layer
    F0: np.ndarray      # hidden vectors
    U: np.ndarray       # F0 @ W3.T before any scaling
    scale: np.ndarray   # per-point projection scale; zeros when unconstrained rows degenerate
    norms: np.ndarray   # ||f0(x_j)||
    fro: float          # ||W3||_F
    logits: np.ndarray
    G: np.ndarray       # routing probabilities
    margins: np.ndarray  # y_j <w_i, x_j> / ||x_j||
    losses: np.ndarray   # Phi(margins)
    per_point: np.ndarray
    risk: float


def forward_cache(model: MoEModel, X, y) -> ForwardCache:
    """Run the forward pass on a batch and retain everything backward needs."""
    X, _ = _check_input(np.atleast_2d(X), model.d)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise ValueError(f"labels of shape {y.shape} do not match {X.shape[0]} inputs")
    if X.shape[0] == 0:
        raise ValueError("cannot differentiate the risk of an empty batch")
    g = model.gating

    Z1 = X @ g.W1.T + g.b1
    A1 = np.maximum(Z1, 0.0)
    Z2 = A1 @ g.W2.T + g.b2
    F0 = np.tanh(Z2)
    U = F0 @ g.W3.T

    norms = np.linalg.norm(F0, axis=1)
    fro = float(np.linalg.norm(g.W3))
    if model.ldp.is_constrained:
        denom = 4.0 * norms * fro
        scale = np.zeros_like(norms)
        nonzero = denom > 0.0
        scale[nonzero] = model.ldp.epsilon / denom[nonzero]
        logits = scale[:, None] * U
    else:
        scale = np.ones_like(norms)
        logits = U

    G = softmax_with_bias(logits, g.b3)

    x_norms = np.linalg.norm(X, axis=1)
    safe = np.where(x_norms > 0.0, x_norms, 1.0)
    margins = (y / safe)[:, None] * (X @ model.experts.weights.T)
    margins[x_norms == 0.0] = 0.0
    losses = probit(margins)

    per_point = np.sum(G * losses, axis=1)
    return ForwardCache(
        X=X, y=y, Z1=Z1, A1=A1, Z2=Z2, F0=F0, U=U,
        scale=scale, norms=norms, fro=fro, logits=logits, G=G,
        margins=margins, losses=losses, per_point=per_point,
        risk=float(per_point.mean()),
    )


def loss_and_gradients(model: MoEModel, X, y) -> tuple[float, ParamGradients]:
    """Empirical risk on the batch and its exact gradient for every parameter."""
    c = forward_cache(model, X, y)
    g = model.gating
    m = c.X.shape[0]

    # Softmax backward: d per_point_j / d logit_ji = G_ji (loss_ji - per_point_j).
    d_logits = (c.G * (c.losses - c.per_point[:, None])) / m
    db3 = d_logits.sum(axis=0)

    # Expert path: d loss / d margin = -pdf(margin); d margin / d w_i = y x / ||x||.
    x_norms = np.linalg.norm(c.X, axis=1)
    safe = np.where(x_norms > 0.0, x_norms, 1.0)
    coeff = (c.G * (-gaussian_pdf(c.margins))) / m
    coeff = coeff * np.where(x_norms > 0.0, 1.0, 0.0)[:, None]
    Xn = (c.y / safe)[:, None] * c.X
    d_experts = coeff.T @ Xn

    if model.ldp.is_constrained:
        # logits_j = s_j U_j with s_j = eps / (4 ||f0_j|| fro); differentiate the
        # numerator and both norms. Degenerate rows have s_j = 0 and stay 0.
        s = c.scale
        dot = np.sum(d_logits * c.U, axis=1)
        dW3 = (s[:, None] * d_logits).T @ c.F0
        dF0 = s[:, None] * (d_logits @ g.W3)
        if c.fro > 0.0:
            dW3 = dW3 - (float(np.sum(s * dot)) / c.fro**2) * g.W3
        norm_sq = np.where(c.norms > 0.0, c.norms**2, 1.0)
        dF0 = dF0 - ((s * dot) / norm_sq)[:, None] * c.F0
    else:
        dW3 = d_logits.T @ c.F0
        dF0 = d_logits @ g.W3

    dZ2 = dF0 * (1.0 - c.F0**2)
    dW2 = dZ2.T @ c.A1
    db2 = dZ2.sum(axis=0)
    dA1 = dZ2 @ g.W2
    dZ1 = dA1 * (c.Z1 > 0.0)
    dW1 = dZ1.T @ c.X
    db1 = dZ1.sum(axis=0)

    return c.risk, ParamGradients(
        expert_weights=d_experts, W1=dW1, b1=db1, W2=dW2, b2=db2, W3=dW3, b3=db3,
    )


def _risk_of(model: MoEModel, X, y) -> float:
    return forward_cache(model, X, y).risk


def finite_difference_gradients(model: MoEModel, X, y, step: float = 1e-6) -> ParamGradients:
    """Central-difference gradient of the risk, one coordinate at a time.

    O(P) forward passes; intended for verification on small models only.
    """
    g = model.gating
    arrays = {
        "expert_weights": model.experts.weights,
        "W1": g.W1, "b1": g.b1, "W2": g.W2, "b2": g.b2, "W3": g.W3, "b3": g.b3,
    }
    out = {}
    for name, arr in arrays.items():
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            hi = _risk_of(model, X, y)
            flat[k] = orig - step
            lo = _risk_of(model, X, y)
            flat[k] = orig
            gflat[k] = (hi - lo) / (2.0 * step)
        out[name] = grad
    return ParamGradients(**out)


def finite_difference_check(
    model: MoEModel,
    X,
    y,
    num_coords: int | None = None,
    rng=None,
    step: float = 1e-5,
) -> float:
    """Worst disagreement between analytic and central-difference gradients.

    Samples num_coords parameter coordinates (all of them when None),
    perturbs each by +-step, and compares. The error is relative,
    |a - fd| / max(|a|, |fd|), falling back to the absolute difference when
    both magnitudes are below 1e-6: the difference quotient carries
    cancellation noise of about loss * eps_machine / step (~1e-11 at the
    default step), so relative comparisons below that scale measure noise,
    not gradients.
    """
    if step <= 0.0:
        raise ValueError(f"step must be positive, got {step}")
    _, analytic = loss_and_gradients(model, X, y)
    a_dict = analytic.as_dict()
    arrays = {
        "expert_weights": model.experts.weights,
        "W1": model.gating.W1, "b1": model.gating.b1,
        "W2": model.gating.W2, "b2": model.gating.b2,
        "W3": model.gating.W3, "b3": model.gating.b3,
    }
    coords = [(name, k) for name, arr in arrays.items() for k in range(arr.size)]
    if num_coords is not None and num_coords < len(coords):
        if rng is None:
            raise ValueError("sampling coordinates requires an rng")
        picks = rng.permutation(len(coords))[:num_coords]
        coords = [coords[int(p)] for p in picks]

    worst = 0.0
    for name, k in coords:
        flat = arrays[name].reshape(-1)
        orig = flat[k]
        flat[k] = orig + step
        hi = _risk_of(model, X, y)
        flat[k] = orig - step
        lo = _risk_of(model, X, y)
        flat[k] = orig
        fd = (hi - lo) / (2.0 * step)
        a = float(a_dict[name].reshape(-1)[k])
        scale = max(abs(a), abs(fd))
        err = abs(a - fd) if scale < 1e-6 else abs(a - fd) / scale
        worst = max(worst, err)
    return worst


def max_relative_error(analytic: ParamGradients, numeric: ParamGradients) -> float:
    """max |a - b| / max(1, |a|, |b|) over all coordinates of all parameters."""
    worst = 0.0
    a_dict = analytic.as_dict()
    b_dict = numeric.as_dict()
    for name, a in a_dict.items():
        b = b_dict[name]
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst
