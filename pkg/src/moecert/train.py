"""Seeded SGD training and multi-run experiment aggregation.

One experiment is `runs` independent train/test cycles on a fixed 75/25
split: each run reinitializes the weights from its own seed, performs
plain minibatch SGD (fixed learning rate, fixed epoch count, per-epoch
reshuffling, no schedule, no early stopping), and reports the exact
empirical risk on both splits. Aggregates use the population standard
deviation sqrt((1/N) sum (R_k - mean)^2). Runs whose loss turns non-finite
are recorded as failed rather than silently dropped.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SplitSpec, split
from .grad import loss_and_gradients
from .model import ExpertBank, GatingParams, LdpConfig, MoEModel, empirical_risk
from .numerics import RandomSource

__all__ = [
    "TrainConfig",
    "RunRecord",
    "RunSummary",
    "TrainingDiverged",
    "init_model",
    "train_once",
    "run_experiment",
]

log = logging.getLogger("moecert.train")


class TrainingDiverged(RuntimeError):
    """Raised when the minibatch loss becomes non-finite during a run."""

    def __init__(self, epoch: int, param_norms: dict[str, float]):
        self.epoch = epoch
        self.param_norms = param_norms
        norms = ", ".join(f"{k}={v:.3g}" for k, v in param_norms.items())
        super().__init__(f"non-finite loss at epoch {epoch} (parameter norms: {norms})")


@dataclass
class TrainConfig:
    """Hyperparameters of one experiment; defaults follow the reference recipe."""

    ldp: LdpConfig = field(default_factory=LdpConfig.unconstrained)
    learning_rate: float = 0.1
    epochs: int = 1000
    batch_size: int | str = 64  # positive integer or "full"
    runs: int = 10
    base_seed: int = 0
    init_scale: float = 1.0
    n_experts: int = 100
    hidden: int = 64
    train_fraction: float = 0.75
    resplit_per_run: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative, got {self.epochs}")
        if self.batch_size != "full" and (not isinstance(self.batch_size, int) or self.batch_size < 1):
            raise ValueError(f'batch_size must be a positive integer or "full", got {self.batch_size!r}')
        if self.runs < 1:
            raise ValueError(f"runs must be positive, got {self.runs}")
        if self.init_scale < 0:
            raise ValueError(f"init_scale must be nonnegative, got {self.init_scale}")
        if self.n_experts < 1 or self.hidden < 1:
            raise ValueError("n_experts and hidden must be positive")


@dataclass
class RunRecord:
    seed: int
    train_risk: float
    test_risk: float
    status: str = "ok"  # "ok" or "diverged"
    message: str = ""


@dataclass
class RunSummary:
    records: list[RunRecord]
    mean_train: float
    std_train: float
    mean_test: float
    std_test: float

    @property
    def ok_records(self) -> list[RunRecord]:
        return [r for r in self.records if r.status == "ok"]

    def to_record(self) -> dict:
        """Flat dict form used for line-oriented serialization."""
        return {
            "mean_train": self.mean_train,
            "std_train": self.std_train,
            "mean_test": self.mean_test,
            "std_test": self.std_test,
            "runs": [
                {
                    "seed": r.seed,
                    "train_risk": r.train_risk,
                    "test_risk": r.test_risk,
                    "status": r.status,
                    "message": r.message,
                }
                for r in self.records
            ],
        }


def _uniform(rng: RandomSource, shape: tuple[int, ...], fan_in: int, scale: float) -> np.ndarray:
    bound = scale / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_model(
    d: int,
    n: int,
    ldp: LdpConfig,
    rng: RandomSource,
    init_scale: float = 1.0,
    hidden: int = 64,
) -> MoEModel:
    """Fresh model: weights uniform in [-init_scale/sqrt(fan_in), +...], biases zero.

    Draw order is fixed (experts, W1, W2, W3) so a seed pins the model bitwise.
    """
    if d < 1 or n < 1 or hidden < 1:
        raise ValueError("d, n, and hidden must all be positive")
    experts = ExpertBank(_uniform(rng, (n, d), d, init_scale))
    gating = GatingParams(
        W1=_uniform(rng, (hidden, d), d, init_scale),
        b1=np.zeros(hidden),
        W2=_uniform(rng, (hidden, hidden), hidden, init_scale),
        b2=np.zeros(hidden),
        W3=_uniform(rng, (n, hidden), hidden, init_scale),
        b3=np.zeros(n),
    )
    return MoEModel(experts=experts, gating=gating, ldp=ldp)


def _param_norms(model: MoEModel) -> dict[str, float]:
    g = model.gating
    return {
        "experts": float(np.linalg.norm(model.experts.weights)),
        "W1": float(np.linalg.norm(g.W1)),
        "W2": float(np.linalg.norm(g.W2)),
        "W3": float(np.linalg.norm(g.W3)),
        "b3": float(np.linalg.norm(g.b3)),
    }


def train_once(
    config: TrainConfig,
    train_data: Dataset,
    test_data: Dataset,
    seed: int,
) -> tuple[MoEModel, float, float]:
    """One SGD run from a fresh seed; returns the model and both exact risks."""
    if train_data.d != test_data.d:
        raise ValueError("train and test dimensions differ")
    rng = RandomSource(seed)
    model = init_model(
        train_data.d, config.n_experts, config.ldp, rng,
        init_scale=config.init_scale, hidden=config.hidden,
    )
    m = train_data.m
    batch = m if config.batch_size == "full" else min(config.batch_size, m)
    X, y = train_data.features, train_data.labels
    g = model.gating

    for epoch in range(config.epochs):
        order = rng.permutation(m)
        last_loss = math.nan
        for start in range(0, m, batch):
            idx = order[start:start + batch]
            loss, grads = loss_and_gradients(model, X[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, _param_norms(model))
            lr = config.learning_rate
            model.experts.weights -= lr * grads.expert_weights
            g.W1 -= lr * grads.W1
            g.b1 -= lr * grads.b1
            g.W2 -= lr * grads.W2
            g.b2 -= lr * grads.b2
            g.W3 -= lr * grads.W3
            g.b3 -= lr * grads.b3
            last_loss = loss
        log.debug("seed=%d epoch=%d batch_loss=%.6f", seed, epoch, last_loss)

    return model, empirical_risk(model, train_data), empirical_risk(model, test_data)


def run_experiment(
    config: TrainConfig,
    data: Dataset,
    keep_models: bool = False,
) -> RunSummary | tuple[RunSummary, list[MoEModel | None]]:
    """Full protocol: fixed split, `runs` reinitialized SGD runs, aggregation.

    Run k uses seed base_seed + k; the split is fixed from base_seed alone
    unless resplit_per_run is set. Population std over successful runs.
    """
    if data.m < 8:
        raise ValueError(f"need at least 8 examples, got {data.m}")
    records: list[RunRecord] = []
    models: list[MoEModel | None] = []
    fixed_split = split(data, SplitSpec(config.train_fraction, seed=config.base_seed))
    for k in range(config.runs):
        seed = config.base_seed + k
        if config.resplit_per_run:
            train_data, test_data = split(data, SplitSpec(config.train_fraction, seed=seed))
        else:
            train_data, test_data = fixed_split
        try:
            model, train_risk, test_risk = train_once(config, train_data, test_data, seed)
        except TrainingDiverged as exc:
            log.warning("run seed=%d diverged: %s", seed, exc)
            records.append(RunRecord(seed=seed, train_risk=math.nan, test_risk=math.nan,
                                     status="diverged", message=str(exc)))
            models.append(None)
            continue
        log.info("run seed=%d train_risk=%.6f test_risk=%.6f", seed, train_risk, test_risk)
        records.append(RunRecord(seed=seed, train_risk=train_risk, test_risk=test_risk))
        models.append(model)

    ok = [r for r in records if r.status == "ok"]
    if not ok:
        raise RuntimeError("every run diverged; no risks to aggregate")
    train_risks = np.array([r.train_risk for r in ok])
    test_risks = np.array([r.test_risk for r in ok])
    summary = RunSummary(
        records=records,
        mean_train=float(train_risks.mean()),
        std_train=float(train_risks.std()),  # population form, ddof=0
        mean_test=float(test_risks.mean()),
        std_test=float(test_risks.std()),
    )
    if keep_models:
        return summary, models
    return summary
