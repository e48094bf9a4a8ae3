"""Numerical checks of when fusing two recognisers improves recall quality."""
from .fusion import (
    Case2Check,
    FusionModel,
    condition_case1,
    condition_case2,
    fuse_attention,
    fuse_linear,
    recall_quality,
    recall_quality_rows,
)
from .montecarlo import (
    SamplerError,
    SamplerParams,
    TheoryReport,
    WitnessNotFound,
    estimate_statistics,
    find_witness,
    replay_witness,
    sample_pair,
    save_witness,
)

__all__ = [
    "Case2Check", "FusionModel", "SamplerError", "SamplerParams", "TheoryReport", "WitnessNotFound",
    "condition_case1", "condition_case2", "estimate_statistics", "find_witness", "fuse_attention",
    "fuse_linear", "recall_quality", "recall_quality_rows", "replay_witness", "sample_pair", "save_witness",
]
