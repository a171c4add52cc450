"""Toy seed generator: autodiff core, model, synthetic data and training."""
from sclab.seedgen.model import (
    Completion,
    SeedGenConfig,
    SeedGenParams,
    SeedSet,
    attend_constraints,
    complete,
    encode_partial,
    generate_seeds,
    predict_normals,
    upsample,
)

__all__ = [
    "Completion", "SeedGenConfig", "SeedGenParams", "SeedSet", "attend_constraints", "complete",
    "encode_partial", "generate_seeds", "predict_normals", "upsample",
]
