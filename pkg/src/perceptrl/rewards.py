"""Composite reward: accuracy, format, key coverage, repetition, consistency.

The total reward for one rollout is the weighted sum

    R = w_acc*R_acc + w_fmt*R_fmt + w_vkey*R_vkey + w_tkey*R_tkey
        + w_rep*R_rep + w_cons*R_cons

with unit weights by default, so the unweighted sum everyone writes on a
whiteboard is the default special case. Key coverage is recall against the
item's key sets, discretized to {0, 0.5, 1} by two thresholds. Repetition is
a distinct-n-gram penalty in [-1, 0]. Consistency checks the facts a
response commits to against the facts available in its own description and
the question, and zeroes out on a clear numeric or categorical conflict.

A perception-first schedule linearly interpolates the weight vector from
start to end over a warmup prefix of training, then holds it constant:
early on, describing and citing evidence pays as much as being right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

from .facts import (
    Fact,
    FactSet,
    TokenSeq,
    extract_claimed_facts,
    extract_facts,
    match_key,
    normalize_fact,
    tokenize,
)
from .template import (
    FormatDiagnostics,
    StructuredResponse,
    extract_answer_span,
    format_reward,
    parse_structured,
)

__all__ = [
    "ACCURACY_POLICIES",
    "CoverageThresholds",
    "RewardBreakdown",
    "RewardConfig",
    "RewardWeights",
    "RolloutScore",
    "ScheduleConfig",
    "accuracy_reward",
    "consistency_reward",
    "coverage",
    "discretize_coverage",
    "repetition_reward",
    "schedule_weights",
    "score_rollout",
    "total_reward",
]

ACCURACY_POLICIES = ("normalized-exact", "numeric", "choice-letter")

_NUMERIC_REL_TOL = 1e-4
_CONSISTENCY_REL_TOL = Fraction(1, 10**9)

WEIGHT_ORDER = ("acc", "fmt", "vkey", "tkey", "rep", "cons")


class ConfigError(ValueError):
    """Raised when a reward configuration violates its own contract."""


@dataclass(frozen=True)
class RewardWeights:
    """Nonnegative weight per reward component; defaults are all ones."""

    acc: float = 1.0
    fmt: float = 1.0
    vkey: float = 1.0
    tkey: float = 1.0
    rep: float = 1.0
    cons: float = 1.0

    def __post_init__(self):
        for name in WEIGHT_ORDER:
            w = float(getattr(self, name))  # ints would serialize differently
            if not math.isfinite(w) or w < 0:
                raise ConfigError(f"weight {name} must be finite and >= 0, got {w}")
            object.__setattr__(self, name, w)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in WEIGHT_ORDER)

    def to_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in WEIGHT_ORDER}

    @classmethod
    def from_dict(cls, d: dict) -> "RewardWeights":
        unknown = set(d) - set(WEIGHT_ORDER)
        if unknown:
            raise ConfigError(f"unknown weight keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def ablated(self, **zeroed: bool) -> "RewardWeights":
        """Copy with the named components set to zero (ablation switches)."""
        updates = {name: 0.0 for name, flag in zeroed.items() if flag}
        unknown = set(updates) - set(WEIGHT_ORDER)
        if unknown:
            raise ConfigError(f"unknown weight keys: {sorted(unknown)}")
        return replace(self, **updates)


@dataclass(frozen=True)
class CoverageThresholds:
    """Two-threshold discretization of coverage recall."""

    tau_lo: float = 0.4
    tau_hi: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "tau_lo", float(self.tau_lo))
        object.__setattr__(self, "tau_hi", float(self.tau_hi))
        if not (0.0 <= self.tau_lo < self.tau_hi <= 1.0):
            raise ConfigError(
                f"need 0 <= tau_lo < tau_hi <= 1, got ({self.tau_lo}, {self.tau_hi})"
            )


@dataclass(frozen=True)
class ScheduleConfig:
    """Linear warmup from start to end weights over the first
    ceil(warmup_fraction * total_steps) steps, constant afterward."""

    start: RewardWeights = field(
        default_factory=lambda: RewardWeights(acc=0.5, fmt=1, vkey=1, tkey=1, rep=1, cons=1)
    )
    end: RewardWeights = field(
        default_factory=lambda: RewardWeights(acc=1, fmt=1, vkey=0.5, tkey=0.5, rep=1, cons=0.5)
    )
    warmup_fraction: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "warmup_fraction", float(self.warmup_fraction))
        if not (0.0 < self.warmup_fraction <= 1.0):
            raise ConfigError(
                f"warmup_fraction must be in (0, 1], got {self.warmup_fraction}"
            )


def schedule_weights(step: int, total_steps: int, cfg: ScheduleConfig) -> RewardWeights:
    """Weight vector in effect at a given optimizer step."""
    if total_steps < 1:
        raise ConfigError(f"total_steps must be >= 1, got {total_steps}")
    if not (0 <= step <= total_steps):
        raise ConfigError(f"need 0 <= step <= total_steps, got step={step}")
    warmup = math.ceil(cfg.warmup_fraction * total_steps)
    if step >= warmup:
        return cfg.end
    t = step / warmup
    start, end = cfg.start.as_tuple(), cfg.end.as_tuple()
    values = [s + (e - s) * t for s, e in zip(start, end)]
    return RewardWeights(*values)


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-component rewards, the weights applied, and their weighted total.

    total is the correctly rounded dot product of the component and weight
    vectors (math.fsum), nothing else ever enters it.
    """

    r_acc: float
    r_fmt: float
    r_vkey: float
    r_tkey: float
    r_rep: float
    r_cons: float
    weights: RewardWeights
    total: float

    @classmethod
    def build(
        cls,
        r_acc: float,
        r_fmt: float,
        r_vkey: float,
        r_tkey: float,
        r_rep: float,
        r_cons: float,
        weights: RewardWeights,
    ) -> "RewardBreakdown":
        components = (r_acc, r_fmt, r_vkey, r_tkey, r_rep, r_cons)
        total = math.fsum(w * r for w, r in zip(weights.as_tuple(), components))
        return cls(*components, weights=weights, total=total)

    def components(self) -> tuple[float, ...]:
        return (self.r_acc, self.r_fmt, self.r_vkey, self.r_tkey, self.r_rep, self.r_cons)

    def to_dict(self) -> dict:
        return {
            "r_acc": self.r_acc,
            "r_fmt": self.r_fmt,
            "r_vkey": self.r_vkey,
            "r_tkey": self.r_tkey,
            "r_rep": self.r_rep,
            "r_cons": self.r_cons,
            "weights": self.weights.to_dict(),
            "total": self.total,
        }


def _last_numeric_value(text: str) -> Optional[Fraction]:
    value = None
    for tok in tokenize(text):
        if tok.value is not None:
            value = tok.value
    return value


def _first_choice_letter(text: str) -> Optional[str]:
    for tok in tokenize(text):
        if tok.is_word and len(tok.text) == 1:
            return tok.text
    return None


def accuracy_reward(answer: Optional[str], gold: str, policy: str = "normalized-exact") -> float:
    """Binary accuracy of an answer span under the configured match policy.

    numeric compares the last numeric token at relative tolerance 1e-4 and
    scores 0.0 when either side fails to parse (wrong format is wrong).
    """
    if policy not in ACCURACY_POLICIES:
        raise ConfigError(f"unknown match policy {policy!r}")
    if not gold:
        raise ValueError("gold answer must be non-empty")
    if answer is None:
        return 0.0
    if policy == "numeric":
        got = _last_numeric_value(answer)
        want = _last_numeric_value(gold)
        if got is None or want is None:
            return 0.0
        scale = max(Fraction(1), abs(got), abs(want))
        ok = abs(got - want) <= Fraction(_NUMERIC_REL_TOL) * scale
        return 1.0 if ok else 0.0
    if policy == "choice-letter":
        got_letter = _first_choice_letter(answer)
        want_letter = _first_choice_letter(gold)
        if got_letter is None or want_letter is None:
            return 0.0
        return 1.0 if got_letter == want_letter else 0.0
    norm_answer = normalize_fact(answer)
    return 1.0 if norm_answer and norm_answer == normalize_fact(gold) else 0.0


def coverage(keys: FactSet, segment: Union[str, TokenSeq]) -> float:
    """Fraction of keys present in the segment; 1.0 when there are no keys."""
    if len(keys) == 0:
        return 1.0
    seg_tokens = tokenize(segment) if isinstance(segment, str) else segment
    hits = sum(1 for fact in keys if match_key(fact.text, seg_tokens))
    return hits / len(keys)


def discretize_coverage(cov: float, thresholds: CoverageThresholds) -> float:
    """Coverage recall mapped to {0.0, 0.5, 1.0} by the two thresholds."""
    if not (0.0 <= cov <= 1.0):
        raise ValueError(f"coverage must be in [0, 1], got {cov}")
    if cov >= thresholds.tau_hi:
        return 1.0
    if cov >= thresholds.tau_lo:
        return 0.5
    return 0.0


def repetition_reward(text: str, ngram_order: int = 3) -> float:
    """Distinct-n-gram repetition penalty in [-1, 0].

    0.0 when the text has fewer than ngram_order tokens; otherwise
    -(1 - distinct_ngrams / total_ngrams) over canonical tokens.
    """
    if ngram_order < 1:
        raise ConfigError(f"ngram_order must be >= 1, got {ngram_order}")
    tokens = [t.text for t in tokenize(text)]
    total = len(tokens) - ngram_order + 1
    if total < 1:
        return 0.0
    distinct = len({tuple(tokens[i : i + ngram_order]) for i in range(total)})
    penalty = 1.0 - distinct / total
    return -penalty if penalty else 0.0  # avoid -0.0 in serialized output


def _numeric_values_close(a: Fraction, b: Fraction) -> bool:
    scale = max(Fraction(1), abs(a), abs(b))
    return abs(a - b) <= _CONSISTENCY_REL_TOL * scale


def _units_compatible(a: Optional[str], b: Optional[str]) -> bool:
    return a is None or b is None or a == b


def _fact_supported(fact: Fact, evidence: FactSet) -> bool:
    if fact.value is not None:
        for ev in evidence:
            if ev.value is None or not _units_compatible(fact.unit, ev.unit):
                continue
            if fact.subject is not None and ev.subject is not None and fact.subject != ev.subject:
                continue
            if _numeric_values_close(fact.value, ev.value):
                return True
        return False
    if fact.category is not None:
        return any(
            ev.category == fact.category and ev.subject == fact.subject
            for ev in evidence
        )
    return any(ev.text == fact.text for ev in evidence)


def _fact_conflicts(fact: Fact, evidence: FactSet) -> bool:
    """Clear conflict: the evidence speaks about this subject and none of it
    agrees with the claimed value."""
    if fact.subject is None:
        return False
    if fact.value is not None:
        relevant = [
            ev
            for ev in evidence
            if ev.value is not None
            and ev.subject == fact.subject
            and _units_compatible(fact.unit, ev.unit)
        ]
        return bool(relevant) and not any(
            _numeric_values_close(fact.value, ev.value) for ev in relevant
        )
    if fact.category is not None:
        relevant = [
            ev for ev in evidence if ev.category is not None and ev.subject == fact.subject
        ]
        return bool(relevant) and not any(ev.category == fact.category for ev in relevant)
    return False


def consistency_reward(claimed: FactSet, evidence: FactSet) -> float:
    """Fraction of claimed facts supported by the evidence set.

    |claimed ∩ evidence| / max(1, |claimed|), forced to 0.0 when any claimed
    fact is in clear conflict with the evidence (mismatched number or
    categorical value for the same subject). Empty claims score 0.0.
    """
    if any(_fact_conflicts(fact, evidence) for fact in claimed):
        return 0.0
    supported = sum(1 for fact in claimed if _fact_supported(fact, evidence))
    return supported / max(1, len(claimed))


REPETITION_SCOPES = ("description", "think", "description+think", "full")


@dataclass(frozen=True)
class RewardConfig:
    """Everything the scorer needs besides the rollout itself."""

    weights: RewardWeights = field(default_factory=RewardWeights)
    thresholds: CoverageThresholds = field(default_factory=CoverageThresholds)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    ngram_order: int = 3
    repetition_scope: str = "description+think"
    lexicon: tuple[str, ...] = ()

    def __post_init__(self):
        if self.ngram_order < 1:
            raise ConfigError(f"ngram_order must be >= 1, got {self.ngram_order}")
        if self.repetition_scope not in REPETITION_SCOPES:
            raise ConfigError(
                f"repetition_scope must be one of {REPETITION_SCOPES}, "
                f"got {self.repetition_scope!r}"
            )


@dataclass(frozen=True)
class RolloutScore:
    """Breakdown plus the raw quantities the simulator and reports want."""

    breakdown: RewardBreakdown
    diagnostics: FormatDiagnostics
    response: Optional[StructuredResponse]
    visual_coverage: float
    textual_coverage: float
    consistency: float


def _repetition_text(scope: str, response: StructuredResponse) -> str:
    if scope == "description":
        return response.description
    if scope == "think":
        return response.think
    if scope == "full":
        return " ".join((response.description, response.think, response.answer))
    return " ".join((response.description, response.think))


def score_rollout(
    rollout_text: str,
    gold_answer: str,
    *,
    match_policy: str = "normalized-exact",
    visual_keys: Iterable[str] = (),
    textual_keys: Iterable[str] = (),
    question: str = "",
    weights: Optional[RewardWeights] = None,
    config: Optional[RewardConfig] = None,
) -> RolloutScore:
    """Score one rollout end to end.

    Malformed responses keep accuracy on any extractable answer span and
    format/coverage/consistency at zero; the repetition penalty then applies
    to the raw text since the segment structure cannot be trusted.
    """
    cfg = config if config is not None else RewardConfig()
    w = weights if weights is not None else cfg.weights
    vkeys = visual_keys if isinstance(visual_keys, FactSet) else FactSet.from_phrases(visual_keys)
    tkeys = textual_keys if isinstance(textual_keys, FactSet) else FactSet.from_phrases(textual_keys)

    response, diag = parse_structured(rollout_text)
    r_fmt = format_reward(diag)
    if response is not None:
        r_acc = accuracy_reward(response.answer, gold_answer, match_policy)
        vcov = coverage(vkeys, response.description)
        tcov = coverage(tkeys, response.think)
        r_vkey = discretize_coverage(vcov, cfg.thresholds)
        r_tkey = discretize_coverage(tcov, cfg.thresholds)
        r_rep = repetition_reward(_repetition_text(cfg.repetition_scope, response), cfg.ngram_order)
        claimed = extract_claimed_facts(response.think, response.answer, cfg.lexicon)
        evidence = extract_facts(response.description, cfg.lexicon).union(
            extract_facts(question, cfg.lexicon)
        )
        r_cons = consistency_reward(claimed, evidence)
    else:
        span = extract_answer_span(rollout_text)
        r_acc = accuracy_reward(span, gold_answer, match_policy)
        vcov = tcov = 0.0
        r_vkey = r_tkey = 0.0
        r_rep = repetition_reward(rollout_text, cfg.ngram_order)
        r_cons = 0.0

    breakdown = RewardBreakdown.build(r_acc, r_fmt, r_vkey, r_tkey, r_rep, r_cons, w)
    return RolloutScore(
        breakdown=breakdown,
        diagnostics=diag,
        response=response,
        visual_coverage=vcov,
        textual_coverage=tcov,
        consistency=r_cons,
    )


def total_reward(
    rollout_text: str,
    gold_answer: str,
    *,
    match_policy: str = "normalized-exact",
    visual_keys: Iterable[str] = (),
    textual_keys: Iterable[str] = (),
    question: str = "",
    weights: Optional[RewardWeights] = None,
    config: Optional[RewardConfig] = None,
) -> tuple[RewardBreakdown, FormatDiagnostics]:
    """Composite reward for one rollout: (breakdown, format diagnostics)."""
    score = score_rollout(
        rollout_text,
        gold_answer,
        match_policy=match_policy,
        visual_keys=visual_keys,
        textual_keys=textual_keys,
        question=question,
        weights=weights,
        config=config,
    )
    return score.breakdown, score.diagnostics
