"""Toy world + tabular softmax policy exercising the full SFT -> RL loop.

The world holds a handful of items. Each item renders a structured response
template with free slots; the policy owns independent categorical logits per
(item, slot) position and fills the slots with vocabulary words. Rendered
responses are scored by the composite reward, shaped for length, filtered,
standardized into advantages, and pushed through the clipped token-level
objective whose analytic gradient drives plain gradient ascent.

Small on purpose: vocabulary <= 256, a few slots per item, float64
everywhere, a single seeded numpy Generator for every random draw. The same
seed and config reproduce the learning curve bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .dapo import (
    ClipConfig,
    LengthShapingConfig,
    ObjectiveStats,
    Rollout,
    RolloutGroup,
    dapo_objective,
    dynamic_sampling_filter,
    populate_advantages,
    sft_loss,
)
from .rewards import (
    ConfigError,
    RewardConfig,
    RewardWeights,
    RolloutScore,
    schedule_weights,
    score_rollout,
)

__all__ = [
    "KeyFactWorld",
    "SimulationConfig",
    "ToyPolicy",
    "TrainingResult",
    "UpdateRecord",
    "WorldItem",
    "evaluate_policy",
    "objective_gradient",
    "policy_logprobs_for",
    "sft_step",
    "simulate_training",
]

MAX_VOCAB = 256
_RATIO_CLAMP = 30.0


@dataclass
class ToyPolicy:
    """Independent categorical distribution per position over a tiny vocab."""

    logits: np.ndarray  # (n_positions, vocab_size)
    temperature: float = 1.0

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.logits.ndim != 2:
            raise ConfigError(f"logits must be 2-D, got shape {self.logits.shape}")
        if self.logits.shape[1] > MAX_VOCAB:
            raise ConfigError(
                f"vocabulary size {self.logits.shape[1]} exceeds {MAX_VOCAB}"
            )
        if not np.all(np.isfinite(self.logits)):
            raise ConfigError("logits must be finite")
        if not (self.temperature > 0):
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")

    @property
    def n_positions(self) -> int:
        return self.logits.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.logits.shape[1]

    def log_probs(self) -> np.ndarray:
        """Log-softmax of logits / temperature, row per position."""
        scaled = self.logits / self.temperature
        shifted = scaled - scaled.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        return shifted - log_norm

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def sample(self, rng: np.random.Generator, positions: Sequence[int]) -> tuple[tuple[int, ...], np.ndarray]:
        """Sample one token per position; returns (tokens, their logprobs)."""
        log_p = self.log_probs()
        tokens = []
        lps = []
        for pos in positions:
            p = np.exp(log_p[pos])
            p = p / p.sum()
            tok = int(rng.choice(self.vocab_size, p=p))
            tokens.append(tok)
            lps.append(log_p[pos, tok])
        return tuple(tokens), np.asarray(lps, dtype=np.float64)

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.logits.copy(), self.temperature)


@dataclass(frozen=True)
class WorldItem:
    """One prompt: question, gold answer, key sets, and a slotted template."""

    item_id: str
    question: str
    gold_answer: str
    match_policy: str
    visual_keys: tuple[str, ...]
    textual_keys: tuple[str, ...]
    desc_slots: int
    think_slots: int
    answer_slots: int
    desc_literal: str = ""
    think_literal: str = ""
    answer_literal: str = ""
    # In-vocab word completing the think literal's claim (e.g. the "5" in
    # "the radius is 5"); used by demonstrations so the SFT target is also
    # consistency-optimal. Empty when the literal opens no claim.
    claim_value: str = ""

    @property
    def slot_count(self) -> int:
        return self.desc_slots + self.think_slots + self.answer_slots


class KeyFactWorld:
    """A fixed set of items sharing one vocabulary of emit-able words."""

    def __init__(self, vocab: Sequence[str], items: Sequence[WorldItem]):
        if len(vocab) == 0 or len(vocab) > MAX_VOCAB:
            raise ConfigError(f"vocab size must be in [1, {MAX_VOCAB}], got {len(vocab)}")
        if len(set(vocab)) != len(vocab):
            raise ConfigError("vocab words must be unique")
        if not items:
            raise ConfigError("world needs at least one item")
        self.vocab = tuple(vocab)
        self.items = tuple(items)
        self._word_index = {w: i for i, w in enumerate(self.vocab)}
        self._offsets = []
        offset = 0
        for item in self.items:
            self._offsets.append(offset)
            offset += item.slot_count
        self._total_slots = offset

    @property
    def n_positions(self) -> int:
        return self._total_slots

    def positions(self, item_index: int) -> tuple[int, ...]:
        item = self.items[item_index]
        start = self._offsets[item_index]
        return tuple(range(start, start + item.slot_count))

    def word_id(self, word: str) -> int:
        return self._word_index[word]

    def render(self, item: WorldItem, tokens: Sequence[int]) -> str:
        """Assemble the structured response text from sampled slot tokens."""
        words = [self.vocab[t] for t in tokens]
        d_end = item.desc_slots
        t_end = d_end + item.think_slots
        desc = " ".join(filter(None, [item.desc_literal, *words[:d_end]]))
        think = " ".join(filter(None, [item.think_literal, *words[d_end:t_end]]))
        answer = " ".join(filter(None, [item.answer_literal, *words[t_end:]]))
        return (
            f"<description>{desc}</description>"
            f"<think>{think}</think>"
            f"<answer>{answer}</answer>"
        )

    def new_policy(self, temperature: float = 1.0) -> ToyPolicy:
        return ToyPolicy(
            np.zeros((self.n_positions, len(self.vocab))), temperature=temperature
        )

    def demonstration(self, item_index: int) -> tuple[int, ...]:
        """Target slot tokens for supervised warmup: keys, then the answer.

        Description slots cycle through the item's visual keys, think slots
        through the claim value (when any) followed by the textual keys,
        answer slots hold the gold answer where it is in-vocabulary;
        everything else falls back to word 0.
        """
        item = self.items[item_index]
        tokens: list[int] = []
        for i in range(item.desc_slots):
            word = item.visual_keys[i % len(item.visual_keys)] if item.visual_keys else self.vocab[0]
            tokens.append(self._word_index.get(word, 0))
        think_words = (
            (item.claim_value,) + item.textual_keys if item.claim_value else item.textual_keys
        )
        for i in range(item.think_slots):
            word = think_words[i % len(think_words)] if think_words else self.vocab[0]
            tokens.append(self._word_index.get(word, 0))
        for _ in range(item.answer_slots):
            tokens.append(self._word_index.get(item.gold_answer, 0))
        return tuple(tokens)

    @classmethod
    def default(cls) -> "KeyFactWorld":
        """Six geometry-flavored items where every reward channel owns slots.

        Per item: two description slots chase the visual keys; the think
        literal opens a claim ("the radius is") whose first slot must state
        the number the question declared (consistency, anything else is a
        conflicting claim); the second think slot chases the textual key;
        the answer slot must hit the gold number (accuracy).  Ablating one
        channel leaves its slots untrained without touching the others.
        """
        vocab = (
            "circle", "arc", "square", "grid", "triangle", "slope",
            "radius", "side", "height", "width", "diameter", "area",
            "3", "4", "5", "6", "7", "8", "9", "10", "12",
        )

        def item(item_id, shape_keys, subject, value, think_key, question, gold):
            return WorldItem(
                item_id=item_id,
                question=question,
                gold_answer=gold,
                match_policy="numeric",
                visual_keys=shape_keys,
                textual_keys=(think_key,),
                desc_slots=2,
                think_slots=2,
                answer_slots=1,
                think_literal=f"the {subject} is",
                claim_value=value,
            )

        items = (
            item("disc", ("circle", "arc"), "radius", "5", "diameter",
                 "the circle radius is 5 . what is the diameter ?", "10"),
            item("tile", ("square", "grid"), "side", "3", "area",
                 "the square side is 3 . what is the area ?", "9"),
            item("ramp", ("triangle", "slope"), "height", "8", "slope",
                 "the triangle height is 8 . what is the height plus 4 ?", "12"),
            item("ring", ("circle", "arc"), "radius", "4", "diameter",
                 "the circle radius is 4 . what is the diameter ?", "8"),
            item("patch", ("square", "grid"), "width", "6", "area",
                 "the square width is 6 . what is the width plus 3 ?", "9"),
            item("wedge", ("triangle", "slope"), "width", "10", "slope",
                 "the triangle width is 10 . what is half the width ?", "5"),
        )
        return cls(vocab, items)

    @classmethod
    def degenerate(cls) -> "KeyFactWorld":
        """One item whose template forces the correct answer: accuracy is
        1.0 before any update."""
        vocab = ("circle", "radius", "5", "10")
        items = (
            WorldItem(
                item_id="forced",
                question="a circle with radius 5 . what is the diameter ?",
                gold_answer="10",
                match_policy="numeric",
                visual_keys=("circle",),
                textual_keys=("radius",),
                desc_slots=1,
                think_slots=1,
                answer_slots=0,
                answer_literal="10",
            ),
        )
        return cls(vocab, items)


@dataclass(frozen=True)
class SimulationConfig:
    """Everything one training run depends on."""

    seed: int = 0
    updates: int = 500
    group_size: int = 16
    learning_rate: float = 14.0
    inner_steps: int = 2
    temperature: float = 1.0
    clip: ClipConfig = field(default_factory=ClipConfig)
    shaping: LengthShapingConfig = field(
        default_factory=lambda: LengthShapingConfig(soft_limit=64, hard_limit=128)
    )
    reward: RewardConfig = field(default_factory=RewardConfig)
    use_schedule: bool = True
    filter_mode: str = "correctness"
    max_filter_retries: int = 3
    sft_updates: int = 0
    sft_learning_rate: float = 0.5

    def __post_init__(self):
        if self.updates < 0:
            raise ConfigError(f"updates must be >= 0, got {self.updates}")
        if self.group_size < 2:
            raise ConfigError(f"group_size must be >= 2, got {self.group_size}")
        if self.inner_steps < 1:
            raise ConfigError(f"inner_steps must be >= 1, got {self.inner_steps}")
        if not (self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_filter_retries < 0:
            raise ConfigError("max_filter_retries must be >= 0")

    def ablated(self, no_vkey: bool = False, no_tkey: bool = False, no_cons: bool = False) -> "SimulationConfig":
        """Copy with the named reward channels zeroed in weights and schedule."""
        flags = {"vkey": no_vkey, "tkey": no_tkey, "cons": no_cons}
        reward = replace(
            self.reward,
            weights=self.reward.weights.ablated(**flags),
            schedule=replace(
                self.reward.schedule,
                start=self.reward.schedule.start.ablated(**flags),
                end=self.reward.schedule.end.ablated(**flags),
            ),
        )
        return replace(self, reward=reward)


@dataclass(frozen=True)
class UpdateRecord:
    """One learning-curve point."""

    update: int
    objective: float
    accuracy: float
    coverage: float
    consistency: float
    clipped_fraction: float
    kept_groups: int
    mean_total: float

    def to_dict(self) -> dict:
        return {
            "update": self.update,
            "objective": self.objective,
            "accuracy": self.accuracy,
            "coverage": self.coverage,
            "consistency": self.consistency,
            "clipped_fraction": self.clipped_fraction,
            "kept_groups": self.kept_groups,
            "mean_total": self.mean_total,
        }


@dataclass
class TrainingResult:
    records: list[UpdateRecord]
    policy: ToyPolicy
    final_accuracy: float
    final_coverage: float
    final_consistency: float
    # Set when the run stopped before cfg.updates because dynamic sampling
    # emptied the batch past the retry budget (no learning signal left).
    stop_reason: Optional[str] = None
    stop_update: Optional[int] = None

    @property
    def stopped_early(self) -> bool:
        return self.stop_reason is not None


def policy_logprobs_for(policy: ToyPolicy, rollout: Rollout) -> np.ndarray:
    """Current per-token logprobs of a rollout's sampled tokens."""
    if rollout.positions is None:
        raise ValueError("rollout carries no positions; cannot rescore")
    log_p = policy.log_probs()
    return np.asarray(
        [log_p[pos, tok] for pos, tok in zip(rollout.positions, rollout.token_ids)],
        dtype=np.float64,
    )


def objective_gradient(
    groups: Sequence[RolloutGroup],
    policy: ToyPolicy,
    clip: ClipConfig,
) -> np.ndarray:
    """Analytic gradient of dapo_objective w.r.t. the policy logits.

    Tokens where the min selects the constant clipped branch contribute
    nothing; elsewhere the per-token gradient is
    (A * rho / N) * (onehot - softmax) / temperature.
    """
    grad = np.zeros_like(policy.logits)
    if not groups:
        return grad
    log_p = policy.log_probs()
    probs = np.exp(log_p)
    token_count = sum(
        len(r.token_ids) for group in groups for r in group.rollouts
    )
    if token_count == 0:
        return grad
    for group in groups:
        if group.advantages is None:
            raise ValueError(f"group {group.prompt_id!r} has no advantages")
        for rollout, adv in zip(group.rollouts, group.advantages):
            if rollout.positions is None:
                raise ValueError("rollout carries no positions; cannot differentiate")
            for pos, tok, old_lp in zip(
                rollout.positions, rollout.token_ids, rollout.old_logprobs
            ):
                delta = min(max(log_p[pos, tok] - old_lp, -_RATIO_CLAMP), _RATIO_CLAMP)
                ratio = math.exp(delta)
                clipped_ratio = min(max(ratio, clip.low), clip.high)
                if clipped_ratio * adv < ratio * adv:
                    continue  # constant branch active, zero gradient
                coeff = adv * ratio / token_count
                row = -coeff * probs[pos]
                row[tok] += coeff
                grad[pos] += row / policy.temperature
    return grad


def sft_step(
    policy: ToyPolicy,
    env: KeyFactWorld,
    learning_rate: float,
) -> float:
    """One full-batch cross-entropy descent step on the demonstrations.

    Returns the summed token-level loss before the step.
    """
    log_p = policy.log_probs()
    probs = np.exp(log_p)
    grad = np.zeros_like(policy.logits)
    target_lps = []
    for item_index in range(len(env.items)):
        targets = env.demonstration(item_index)
        for pos, tok in zip(env.positions(item_index), targets):
            target_lps.append(log_p[pos, tok])
            row = probs[pos].copy()
            row[tok] -= 1.0
            grad[pos] += row / policy.temperature
    loss = sft_loss(target_lps)
    policy.logits -= learning_rate * grad
    return loss


def _sample_batch(
    env: KeyFactWorld,
    policy: ToyPolicy,
    rng: np.random.Generator,
    cfg: SimulationConfig,
    weights: RewardWeights,
) -> tuple[list[RolloutGroup], list[RolloutScore]]:
    groups: list[RolloutGroup] = []
    scores: list[RolloutScore] = []
    for item_index, item in enumerate(env.items):
        positions = env.positions(item_index)
        rollouts = []
        for _ in range(cfg.group_size):
            tokens, lps = policy.sample(rng, positions)
            text = env.render(item, tokens)
            score = score_rollout(
                text,
                item.gold_answer,
                match_policy=item.match_policy,
                visual_keys=item.visual_keys,
                textual_keys=item.textual_keys,
                question=item.question,
                weights=weights,
                config=cfg.reward,
            )
            scores.append(score)
            rollouts.append(
                Rollout(
                    prompt_id=item.item_id,
                    token_ids=tokens,
                    old_logprobs=lps,
                    reward=score.breakdown,
                    correct=score.breakdown.r_acc >= 1.0,
                    positions=positions,
                )
            )
        groups.append(RolloutGroup(prompt_id=item.item_id, rollouts=rollouts))
    return groups, scores


def _batch_metrics(scores: Sequence[RolloutScore]) -> tuple[float, float, float, float]:
    accuracy = float(np.mean([s.breakdown.r_acc for s in scores]))
    coverage = float(
        np.mean([(s.visual_coverage + s.textual_coverage) / 2.0 for s in scores])
    )
    consistency = float(np.mean([s.consistency for s in scores]))
    mean_total = float(np.mean([s.breakdown.total for s in scores]))
    return accuracy, coverage, consistency, mean_total


def simulate_training(
    env: KeyFactWorld, cfg: SimulationConfig
) -> TrainingResult:
    """Run the full loop and return the learning curve plus final policy.

    When dynamic sampling empties the batch more than max_filter_retries
    times in a row the run stops early: on a small fixed world that means
    every prompt group has become uniformly right (or wrong), so no update
    can be formed.  The partial curve is kept and stop_reason records the
    diagnostic instead of discarding the run.
    """
    rng = np.random.default_rng(cfg.seed)
    policy = env.new_policy(temperature=cfg.temperature)

    for _ in range(cfg.sft_updates):
        sft_step(policy, env, cfg.sft_learning_rate)

    records: list[UpdateRecord] = []
    stop_reason: Optional[str] = None
    stop_update: Optional[int] = None
    for update in range(cfg.updates):  # updates=0 evaluates the raw policy
        weights = (
            schedule_weights(update, cfg.updates, cfg.reward.schedule)
            if cfg.use_schedule
            else cfg.reward.weights
        )
        kept: list[RolloutGroup] = []
        scores: list[RolloutScore] = []
        for attempt in range(cfg.max_filter_retries + 1):
            groups, scores = _sample_batch(env, policy, rng, cfg, weights)
            populate_advantages(groups, cfg.shaping)
            kept = dynamic_sampling_filter(groups, cfg.filter_mode)
            if kept:
                break
        else:
            stop_reason = (
                f"update {update}: every group filtered out in "
                f"{cfg.max_filter_retries + 1} consecutive batches"
            )
            stop_update = update
            break

        objective = 0.0
        stats = ObjectiveStats.empty()
        for _ in range(cfg.inner_steps):
            new_lps = [
                [policy_logprobs_for(policy, r) for r in group.rollouts]
                for group in kept
            ]
            objective, stats = dapo_objective(kept, new_lps, cfg.clip)
            grad = objective_gradient(kept, policy, cfg.clip)
            policy.logits += cfg.learning_rate * grad

        accuracy, cov, cons, mean_total = _batch_metrics(scores)
        records.append(
            UpdateRecord(
                update=update,
                objective=objective,
                accuracy=accuracy,
                coverage=cov,
                consistency=cons,
                clipped_fraction=stats.clipped_fraction,
                kept_groups=len(kept),
                mean_total=mean_total,
            )
        )

    final_acc, final_cov, final_cons, _ = _evaluate_with_rng(
        env, policy, cfg, np.random.default_rng(cfg.seed + 1)
    )
    return TrainingResult(
        records=records,
        policy=policy,
        final_accuracy=final_acc,
        final_coverage=final_cov,
        final_consistency=final_cons,
        stop_reason=stop_reason,
        stop_update=stop_update,
    )


def _evaluate_with_rng(
    env: KeyFactWorld,
    policy: ToyPolicy,
    cfg: SimulationConfig,
    rng: np.random.Generator,
    weights: Optional[RewardWeights] = None,
    samples_per_item: int = 32,
) -> tuple[float, float, float, float]:
    w = weights if weights is not None else (
        cfg.reward.schedule.end if cfg.use_schedule else cfg.reward.weights
    )
    scores: list[RolloutScore] = []
    for item_index, item in enumerate(env.items):
        positions = env.positions(item_index)
        for _ in range(samples_per_item):
            tokens, _ = policy.sample(rng, positions)
            text = env.render(item, tokens)
            scores.append(
                score_rollout(
                    text,
                    item.gold_answer,
                    match_policy=item.match_policy,
                    visual_keys=item.visual_keys,
                    textual_keys=item.textual_keys,
                    question=item.question,
                    weights=w,
                    config=cfg.reward,
                )
            )
    return _batch_metrics(scores)


def evaluate_policy(
    env: KeyFactWorld,
    policy: ToyPolicy,
    cfg: SimulationConfig,
    *,
    weights: Optional[RewardWeights] = None,
    seed: int = 9999,
    samples_per_item: int = 32,
) -> dict:
    """Frozen-policy evaluation under an explicit weight vector.

    Used to compare ablation runs on equal footing: every final policy is
    scored under the same (typically full) weights and evaluation seed.
    """
    accuracy, cov, cons, mean_total = _evaluate_with_rng(
        env,
        policy,
        cfg,
        np.random.default_rng(seed),
        weights=weights,
        samples_per_item=samples_per_item,
    )
    return {
        "accuracy": accuracy,
        "coverage": cov,
        "consistency": cons,
        "mean_total": mean_total,
    }
