"""Perception-grounded composite rewards with a toy RL training harness.

The package splits into small layers:

* template / facts: structured response parsing and canonical fact matching
* rewards: the six-component composite reward and its warmup schedule
* dapo: group-relative advantages and the clipped token-level objective
* simulate: a tabular toy policy trained end to end on a tiny world
* pipeline: dataset cleaning and key-information distillation over
  mockable external clients
* service / cli: HTTP scoring endpoint and the command line entry points
"""

__version__ = "0.1.0"

from .facts import (
    Fact,
    FactSet,
    extract_claimed_facts,
    extract_facts,
    match_key,
    normalize_fact,
)
from .rewards import (
    CoverageThresholds,
    RewardBreakdown,
    RewardConfig,
    RewardWeights,
    ScheduleConfig,
    accuracy_reward,
    consistency_reward,
    coverage,
    discretize_coverage,
    repetition_reward,
    schedule_weights,
    score_rollout,
    total_reward,
)
from .template import (
    FormatDiagnostics,
    StructuredResponse,
    extract_answer_span,
    format_reward,
    parse_structured,
    serialize_structured,
)

__all__ = [
    "__version__",
    "Fact",
    "FactSet",
    "extract_claimed_facts",
    "extract_facts",
    "match_key",
    "normalize_fact",
    "CoverageThresholds",
    "RewardBreakdown",
    "RewardConfig",
    "RewardWeights",
    "ScheduleConfig",
    "accuracy_reward",
    "consistency_reward",
    "coverage",
    "discretize_coverage",
    "repetition_reward",
    "schedule_weights",
    "score_rollout",
    "total_reward",
    "FormatDiagnostics",
    "StructuredResponse",
    "extract_answer_span",
    "format_reward",
    "parse_structured",
    "serialize_structured",
]
