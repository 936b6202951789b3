"""Mixtures of linear experts with a privacy-constrained gating network.

The package trains mixtures routed by one-out-of-n stochastic gating,
where the gate's dependence on the input is capped by a local differential
privacy parameter epsilon, and computes PAC-Bayes and Rademacher
certificates on the resulting risk. Small-instance brute-force checks of
the underlying inequalities live in `verify`; the `moecert` console script
exposes training, certification, verification, and reporting.
"""

from .bounds import (
    BoundInputs,
    BoundReport,
    catoni_base,
    catoni_ldp_bound,
    certificate,
    epsilon_grid_bound,
    gaussian_kl,
    linear_expert_rademacher,
    naive_pacbayes_comparison,
    rademacher_base,
    rademacher_ldp_bound,
    seeger_ldp_bound,
    select_xprime,
)
from .data import (
    Dataset,
    SplitSpec,
    load_csv,
    load_dataset,
    load_heart,
    load_mnist_pair,
    make_toy_dataset,
    save_dataset,
    split,
    standardize,
)
from .grad import (
    ParamGradients,
    finite_difference_check,
    finite_difference_gradients,
    loss_and_gradients,
)
from .model import (
    ExpertBank,
    GatingParams,
    LdpConfig,
    MoEModel,
    empirical_risk,
    expert_margin_loss,
    gate,
    gate_log_ratio_span,
    gating_hidden,
    ldp_project,
    load_model,
    mixture_risk,
    predict_stochastic,
    save_model,
)
from .numerics import (
    RandomSource,
    binary_kl,
    kl_inverse_upper,
    probit,
    sample_categorical,
    softmax_with_bias,
)
from .train import (
    RunRecord,
    RunSummary,
    TrainConfig,
    TrainingDiverged,
    init_model,
    run_experiment,
    train_once,
)
from .verify import (
    FiniteInstance,
    check_lemma_delta,
    check_softmax_ldp,
    gate_table_ldp_span,
    make_ldp_gate_table,
    nonadaptive_vacuousness_demo,
    random_instance,
)

__version__ = "0.1.0"

__all__ = [
    "BoundInputs", "BoundReport", "catoni_base", "catoni_ldp_bound", "certificate",
    "epsilon_grid_bound", "gaussian_kl", "linear_expert_rademacher",
    "naive_pacbayes_comparison", "rademacher_base", "rademacher_ldp_bound",
    "seeger_ldp_bound", "select_xprime",
    "Dataset", "SplitSpec", "load_csv", "load_dataset", "load_heart",
    "load_mnist_pair", "make_toy_dataset", "save_dataset", "split", "standardize",
    "ParamGradients", "finite_difference_check", "finite_difference_gradients",
    "loss_and_gradients",
    "ExpertBank", "GatingParams", "LdpConfig", "MoEModel", "empirical_risk",
    "expert_margin_loss", "gate", "gate_log_ratio_span", "gating_hidden",
    "ldp_project", "load_model", "mixture_risk", "predict_stochastic", "save_model",
    "RandomSource", "binary_kl", "kl_inverse_upper", "probit", "sample_categorical",
    "softmax_with_bias",
    "RunRecord", "RunSummary", "TrainConfig", "TrainingDiverged", "init_model",
    "run_experiment", "train_once",
    "FiniteInstance", "check_lemma_delta", "check_softmax_ldp", "gate_table_ldp_span",
    "make_ldp_gate_table", "nonadaptive_vacuousness_demo", "random_instance",
    "__version__",
]
