"""Feature-gap epistemic uncertainty engine (C++ core)."""

from ._core import (
    FeatureGapsError,
    ablation,
    auroc,
    evaluate,
    extract_directions,
    feature_gap_reconstruction,
    fit_logistic,
    generate_planted,
    layer_score,
    logistic_loss_and_gradient,
    principal_direction,
    proof_intermediates,
    prr,
    read_tensors,
    rejection_curve,
    score,
    select_layers,
    softmax,
    spectral_norm,
    toy_optimal_prompt,
    train_ensemble,
    uncertainty_breakdown,
    verify_artifacts,
    verify_bound,
    write_tensors,
)

__all__ = [
    "FeatureGapsError",
    "ablation",
    "auroc",
    "evaluate",
    "extract_directions",
    "feature_gap_reconstruction",
    "fit_logistic",
    "generate_planted",
    "layer_score",
    "logistic_loss_and_gradient",
    "principal_direction",
    "proof_intermediates",
    "prr",
    "read_tensors",
    "rejection_curve",
    "score",
    "select_layers",
    "softmax",
    "spectral_norm",
    "toy_optimal_prompt",
    "train_ensemble",
    "uncertainty_breakdown",
    "verify_artifacts",
    "verify_bound",
    "write_tensors",
]
