"""Mixture of linear experts routed by a privacy-constrained gating network.

The model pairs a bank of n linear experts (rows w_i of a weight matrix)
with a two-hidden-layer MLP gate. The gate's pre-bias logits are either
used raw (unconstrained mode) or rescaled into the box [-eps/4, +eps/4]
(constrained mode), which caps how much the routing distribution may react
to the input: for any two inputs x, x' and every expert i,
g_i(x) <= exp(eps) * g_i(x'). Prediction is stochastic one-out-of-n
routing: draw i ~ g(x), output <w_i, x>.

The training loss is the gate-weighted Gaussian upper-tail of the
normalized margin, Phi(y <w_i, x> / ||x||), which equals the expected 0-1
error of the linear classifier w_i under a unit-variance Gaussian
perturbation of its weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import (
    RandomSource,
    log_softmax_with_bias,
    probit,
    sample_categorical,
    softmax_with_bias,
)

__all__ = [
    "LdpConfig",
    "ExpertBank",
    "GatingParams",
    "MoEModel",
    "gating_hidden",
    "ldp_project",
    "gate",
    "gate_log_ratio_span",
    "expert_margin_loss",
    "margin_loss_matrix",
    "mixture_risk",
    "empirical_risk",
    "predict_stochastic",
    "save_model",
    "load_model",
]

MODEL_FORMAT_TAG = "moecert-model-v1"


def _as_float_matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass
class LdpConfig:
    """Gate constraint mode: epsilon=None means unconstrained logits.

    When constrained, epsilon >= 0 bounds the log-ratio of routing
    probabilities across inputs; epsilon = 0 makes the gate ignore its
    input entirely.
    """

    epsilon: float | None = None

    def __post_init__(self):
        if self.epsilon is not None:
            eps = float(self.epsilon)
            if not np.isfinite(eps) or eps < 0.0:
                raise ValueError(f"epsilon must be a nonnegative real, got {self.epsilon}")
            self.epsilon = eps

    @classmethod
    def unconstrained(cls) -> "LdpConfig":
        return cls(epsilon=None)

    @classmethod
    def constrained(cls, epsilon: float) -> "LdpConfig":
        return cls(epsilon=float(epsilon))

    @property
    def is_constrained(self) -> bool:
        return self.epsilon is not None

    def tag(self) -> str:
        return "none" if self.epsilon is None else f"eps{self.epsilon:g}"


@dataclass
class ExpertBank:
    """n linear experts; row i of `weights` is the weight vector of expert i."""

    weights: np.ndarray  # (n, d)

    def __post_init__(self):
        self.weights = _as_float_matrix(self.weights, "expert weights")
        if self.weights.ndim != 2 or min(self.weights.shape) < 1:
            raise ValueError(f"expert weights must be a nonempty (n, d) matrix, got shape {self.weights.shape}")

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]


@dataclass
class GatingParams:
    """Two-hidden-layer MLP gate parameters.

    W1: (h, d), W2: (h, h), W3: (n, h) with biases to match; h is the
    hidden width (64 in the reference recipe, configurable here).
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2", "W3", "b3"):
            setattr(self, name, _as_float_matrix(getattr(self, name), name))
        h, d = self.W1.shape
        n = self.W3.shape[0]
        if self.b1.shape != (h,):
            raise ValueError(f"b1 shape {self.b1.shape} does not match hidden width {h}")
        if self.W2.shape != (h, h):
            raise ValueError(f"W2 shape {self.W2.shape} does not match hidden width {h}")
        if self.b2.shape != (h,):
            raise ValueError(f"b2 shape {self.b2.shape} does not match hidden width {h}")
        if self.W3.shape != (n, h):
            raise ValueError(f"W3 shape {self.W3.shape} does not match hidden width {h}")
        if self.b3.shape != (n,):
            raise ValueError(f"b3 shape {self.b3.shape} does not match output width {n}")

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def n(self) -> int:
        return self.W3.shape[0]


@dataclass
class MoEModel:
    experts: ExpertBank
    gating: GatingParams
    ldp: LdpConfig

    def __post_init__(self):
        if self.experts.n != self.gating.n:
            raise ValueError(
                f"expert count {self.experts.n} does not match gate output width {self.gating.n}"
            )
        if self.experts.d != self.gating.d:
            raise ValueError(
                f"expert input dim {self.experts.d} does not match gate input dim {self.gating.d}"
            )

    @property
    def n(self) -> int:
        return self.experts.n

    @property
    def d(self) -> int:
        return self.experts.d


def _check_input(x, d: int) -> tuple[np.ndarray, bool]:
    """Coerce x to float64 and report whether it was a single vector."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("input must be finite")
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ValueError(f"input of shape {np.shape(x)} does not match dimension {d}")
    return arr, single


def gating_hidden(gating: GatingParams, x):
    """Hidden representation tanh(W2 relu(W1 x + b1) + b2); entries in [-1, 1].

    Accepts a single input vector or a matrix of row vectors.
    """
    X, single = _check_input(x, gating.d)
    A1 = np.maximum(X @ gating.W1.T + gating.b1, 0.0)
    F0 = np.tanh(A1 @ gating.W2.T + gating.b2)
    return F0[0] if single else F0


def ldp_project(gating: GatingParams, ldp: LdpConfig, f0):
    """Map the hidden vector to gate logits, boxing them when constrained.

    Constrained mode rescales W3 f0 by eps / (4 ||f0|| ||W3||_F), so by
    Cauchy-Schwarz every component lands in [-eps/4, +eps/4]; the Frobenius
    norm (rather than per-row norms) preserves the proportions between
    components. A zero hidden vector or an all-zero W3 maps to the zero
    logit vector, the continuous limit of the formula. Unconstrained mode
    returns W3 f0 unchanged.
    """
    F0 = np.asarray(f0, dtype=np.float64)
    if not np.all(np.isfinite(F0)):
        raise ValueError("hidden vector must be finite")
    single = F0.ndim == 1
    if single:
        F0 = F0[None, :]
    if F0.shape[1] != gating.hidden:
        raise ValueError(f"hidden vector of shape {np.shape(f0)} does not match width {gating.hidden}")
    U = F0 @ gating.W3.T
    if ldp.is_constrained:
        fro = np.linalg.norm(gating.W3)
        norms = np.linalg.norm(F0, axis=1)
        denom = 4.0 * norms * fro
        scale = np.zeros_like(norms)
        nonzero = denom > 0.0
        scale[nonzero] = ldp.epsilon / denom[nonzero]
        F = scale[:, None] * U
    else:
        F = U
    return F[0] if single else F


def gate(model: MoEModel, x):
    """Routing distribution g(x) = softmax(logits(x) + b3); rows sum to 1."""
    f0 = gating_hidden(model.gating, x)
    logits = ldp_project(model.gating, model.ldp, f0)
    return softmax_with_bias(logits, model.gating.b3)


def gate_log_ratio_span(model: MoEModel, points) -> float:
    """Worst log-ratio max_i, x, x' [ln g_i(x) - ln g_i(x')] over the given inputs.

    A constrained gate must keep this at or below its epsilon; the span is
    computed from log-softmax so tiny probabilities do not lose precision.
    """
    X, _ = _check_input(np.atleast_2d(points), model.d)
    f0 = gating_hidden(model.gating, X)
    logits = ldp_project(model.gating, model.ldp, f0)
    log_g = log_softmax_with_bias(logits, model.gating.b3)
    return float(np.max(log_g.max(axis=0) - log_g.min(axis=0)))


def expert_margin_loss(experts: ExpertBank, i: int, x, y) -> float:
    """Gaussian-tail loss of expert i on (x, y): Phi(y <w_i, x> / ||x||).

    A zero-norm input has no margin direction; its normalized margin is
    defined as 0, giving loss 1/2.
    """
    if not (0 <= i < experts.n):
        raise ValueError(f"expert index {i} out of range [0, {experts.n})")
    if y not in (-1, 1):
        raise ValueError(f"label must be -1 or +1, got {y}")
    xv = np.asarray(x, dtype=np.float64)
    if xv.shape != (experts.d,):
        raise ValueError(f"input of shape {xv.shape} does not match dimension {experts.d}")
    norm = np.linalg.norm(xv)
    if norm == 0.0:
        return 0.5
    return float(probit(y * float(experts.weights[i] @ xv) / norm))


def margin_loss_matrix(experts: ExpertBank, X, y) -> np.ndarray:
    """(m, n) matrix of Phi(y_j <w_i, x_j> / ||x_j||); zero-norm rows give 1/2."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    margins = (y / safe)[:, None] * (X @ experts.weights.T)
    margins[norms == 0.0] = 0.0
    return probit(margins)


def mixture_risk(model: MoEModel, X, y, weights=None) -> float:
    """Gate-weighted average loss sum_j w_j sum_i g_i(x_j) loss_i(x_j, y_j).

    With uniform weights this is the exact (non-sampled) empirical risk of
    the stochastic predictor; with arbitrary point masses it is the exact
    risk under that finite-support distribution. Always lies in [0, 1].
    """
    X, _ = _check_input(np.atleast_2d(X), model.d)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise ValueError(f"labels of shape {y.shape} do not match {X.shape[0]} inputs")
    if X.shape[0] == 0:
        raise ValueError("risk of an empty sample is undefined")
    G = gate(model, X)
    L = margin_loss_matrix(model.experts, X, y)
    per_point = np.sum(G * L, axis=1)
    if weights is None:
        return float(per_point.mean())
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != per_point.shape or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be a probability vector over the points")
    return float(per_point @ w)


def empirical_risk(model: MoEModel, data) -> float:
    """Exact empirical risk on a dataset (anything with .features and .labels)."""
    return mixture_risk(model, data.features, data.labels)


def predict_stochastic(model: MoEModel, x, rng: RandomSource) -> float:
    """One-out-of-n prediction: draw I ~ g(x), return <w_I, x>."""
    xv = np.asarray(x, dtype=np.float64)
    if xv.shape != (model.d,):
        raise ValueError(f"input of shape {xv.shape} does not match dimension {model.d}")
    g = gate(model, xv)
    i = sample_categorical(g, rng)
    return float(model.experts.weights[i] @ xv)


def save_model(model: MoEModel, path) -> None:
    """Write the model to an .npz archive (versioned, row-major float64 tensors)."""
    g = model.gating
    np.savez(
        path,
        format_tag=np.array(MODEL_FORMAT_TAG),
        d=np.int64(model.d),
        n=np.int64(model.n),
        hidden=np.int64(g.hidden),
        ldp_mode=np.array("constrained" if model.ldp.is_constrained else "unconstrained"),
        epsilon=np.float64(model.ldp.epsilon if model.ldp.is_constrained else np.nan),
        expert_weights=model.experts.weights,
        W1=g.W1,
        b1=g.b1,
        W2=g.W2,
        b2=g.b2,
        W3=g.W3,
        b3=g.b3,
    )


def load_model(path) -> MoEModel:
    """Read a model written by save_model; rejects unknown format tags."""
    with np.load(path, allow_pickle=False) as z:
        tag = str(z["format_tag"])
        if tag != MODEL_FORMAT_TAG:
            raise ValueError(f"unrecognized model format tag {tag!r}")
        mode = str(z["ldp_mode"])
        if mode == "constrained":
            ldp = LdpConfig.constrained(float(z["epsilon"]))
        elif mode == "unconstrained":
            ldp = LdpConfig.unconstrained()
        else:
            raise ValueError(f"unrecognized ldp mode {mode!r}")
        experts = ExpertBank(z["expert_weights"])
        gating = GatingParams(z["W1"], z["b1"], z["W2"], z["b2"], z["W3"], z["b3"])
    return MoEModel(experts=experts, gating=gating, ldp=ldp)
