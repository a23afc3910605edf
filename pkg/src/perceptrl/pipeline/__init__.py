"""Dataset construction pipelines: cleaning and key-information distillation."""

from .cleaning import (
    CleaningConfig,
    PipelineRecord,
    QualityMetrics,
    QualityWeights,
    RawRecord,
    build_formal_description,
    clean_dataset,
    clean_record,
    make_raw_corpus,
    quality_score,
)
from .clients import (
    CandidateSample,
    ClientError,
    Detection,
    ExternalClients,
)
from .distill import (
    DistillConfig,
    DistillItem,
    DistilledRecord,
    DistillSummary,
    distill,
    extract_keyinfo,
    select_best,
    topk_by_logprob,
    verify_candidates,
)

__all__ = [
    "CleaningConfig",
    "PipelineRecord",
    "QualityMetrics",
    "QualityWeights",
    "RawRecord",
    "build_formal_description",
    "clean_dataset",
    "clean_record",
    "make_raw_corpus",
    "quality_score",
    "CandidateSample",
    "ClientError",
    "Detection",
    "ExternalClients",
    "DistillConfig",
    "DistillItem",
    "DistilledRecord",
    "DistillSummary",
    "distill",
    "extract_keyinfo",
    "select_best",
    "topk_by_logprob",
    "verify_candidates",
]
