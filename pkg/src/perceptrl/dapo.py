"""Group-relative clipped policy optimization, token-level.

Rollouts are scored in groups sharing a prompt. Each rollout's advantage is
its reward standardized within the group, (r_i - mean) / (pop_std + 1e-6),
broadcast to every token it produced. Groups with no learning signal (all
correct or all wrong; zero reward variance) are dropped before the update.
The surrogate objective is

    J = (1 / sum_i |o_i|) * sum_i sum_t min(rho_it * A_i,
                                            clip(rho_it, 1-eps_low, 1+eps_high) * A_i)

with asymmetric clip ranges, normalized by total token count over all kept
rollouts. Overlong rollouts are shaped with a linear penalty on the scalar
reward before advantages are computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .rewards import ConfigError, RewardBreakdown

__all__ = [
    "ClipConfig",
    "LengthShapingConfig",
    "ObjectiveStats",
    "Rollout",
    "RolloutGroup",
    "dapo_objective",
    "dynamic_sampling_filter",
    "group_advantages",
    "overlong_shaping",
    "populate_advantages",
    "sft_loss",
    "token_ratio",
]

_ADV_EPS = 1e-6
_RATIO_CLAMP = 30.0


@dataclass(frozen=True)
class ClipConfig:
    """Asymmetric clip range; eps_high > eps_low widens the upside."""

    eps_low: float = 0.2
    eps_high: float = 0.28

    def __post_init__(self):
        if not (self.eps_low > 0 and self.eps_high > 0):
            raise ConfigError(
                f"clip ranges must be positive, got ({self.eps_low}, {self.eps_high})"
            )

    @property
    def low(self) -> float:
        return 1.0 - self.eps_low

    @property
    def high(self) -> float:
        return 1.0 + self.eps_high


@dataclass(frozen=True)
class LengthShapingConfig:
    """Linear overlong penalty: 0 up to soft_limit, -1 beyond hard_limit."""

    soft_limit: int = 2048
    hard_limit: int = 4096

    def __post_init__(self):
        if not (0 < self.soft_limit <= self.hard_limit):
            raise ConfigError(
                f"need 0 < soft_limit <= hard_limit, got "
                f"({self.soft_limit}, {self.hard_limit})"
            )


def overlong_shaping(length: int, cfg: LengthShapingConfig) -> float:
    """Penalty in [-1, 0] for rollout length in tokens."""
    if length < 0:
        raise ValueError(f"length must be >= 0, got {length}")
    if length <= cfg.soft_limit:
        return 0.0
    if length >= cfg.hard_limit:
        return -1.0
    return -(length - cfg.soft_limit) / (cfg.hard_limit - cfg.soft_limit)


@dataclass
class Rollout:
    """One sampled response with everything the update needs."""

    prompt_id: str
    token_ids: tuple[int, ...]
    old_logprobs: np.ndarray
    reward: RewardBreakdown
    correct: bool
    positions: Optional[tuple[int, ...]] = None  # policy slots, toy runs only

    def __post_init__(self):
        self.old_logprobs = np.asarray(self.old_logprobs, dtype=np.float64)
        if self.old_logprobs.shape != (len(self.token_ids),):
            raise ValueError(
                f"old_logprobs shape {self.old_logprobs.shape} does not match "
                f"{len(self.token_ids)} tokens"
            )


@dataclass
class RolloutGroup:
    """All rollouts for one prompt plus their shared advantages."""

    prompt_id: str
    rollouts: list[Rollout]
    advantages: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.rollouts)


def group_advantages(rewards: Sequence[float]) -> np.ndarray:
    """Group-standardized advantages (r - mean) / (pop_std + 1e-6)."""
    arr = np.asarray(rewards, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError(f"need a flat group of >= 2 rewards, got shape {arr.shape}")
    if arr.max() == arr.min():
        # equal rewards carry no signal; exact zeros, not mean-rounding dust
        return np.zeros_like(arr)
    mean = arr.mean()
    std = arr.std()  # population
    return (arr - mean) / (std + _ADV_EPS)


def _shaped_reward(rollout: Rollout, shaping: Optional[LengthShapingConfig]) -> float:
    total = rollout.reward.total
    if shaping is not None:
        total += overlong_shaping(len(rollout.token_ids), shaping)
    return total


def populate_advantages(
    groups: Iterable[RolloutGroup],
    shaping: Optional[LengthShapingConfig] = None,
) -> None:
    """Fill each group's advantages from its (optionally shaped) rewards."""
    for group in groups:
        rewards = [_shaped_reward(r, shaping) for r in group.rollouts]
        group.advantages = group_advantages(rewards)


def dynamic_sampling_filter(
    groups: Sequence[RolloutGroup], mode: str = "correctness"
) -> list[RolloutGroup]:
    """Drop groups that carry no learning signal.

    correctness mode drops groups whose rollouts are all correct or all
    wrong; variance mode drops groups with zero scalar reward variance.
    The batch shrinks; nothing is refilled.
    """
    if mode not in ("correctness", "variance"):
        raise ConfigError(f"unknown dynamic sampling mode {mode!r}")
    kept = []
    for group in groups:
        if mode == "correctness":
            flags = [r.correct for r in group.rollouts]
            if all(flags) or not any(flags):
                continue
        else:
            totals = [r.reward.total for r in group.rollouts]
            if max(totals) == min(totals):
                continue
        kept.append(group)
    return kept


def token_ratio(
    new_logprobs: Union[float, np.ndarray], old_logprobs: Union[float, np.ndarray]
) -> Union[float, np.ndarray]:
    """Importance ratio exp(new - old), exponent clamped to +/-30."""
    delta = np.clip(np.asarray(new_logprobs) - np.asarray(old_logprobs),
                    -_RATIO_CLAMP, _RATIO_CLAMP)
    out = np.exp(delta)
    return float(out) if out.ndim == 0 else out


@dataclass
class ObjectiveStats:
    """Per-token telemetry for one objective evaluation."""

    ratios: np.ndarray
    clipped: np.ndarray
    contributions: np.ndarray
    token_count: int
    clipped_fraction: float
    empty_batch: bool = False

    @classmethod
    def empty(cls) -> "ObjectiveStats":
        z = np.zeros(0, dtype=np.float64)
        return cls(
            ratios=z,
            clipped=np.zeros(0, dtype=bool),
            contributions=z.copy(),
            token_count=0,
            clipped_fraction=0.0,
            empty_batch=True,
        )


def dapo_objective(
    groups: Sequence[RolloutGroup],
    new_logprobs: Sequence[Sequence[np.ndarray]],
    clip: ClipConfig,
) -> tuple[float, ObjectiveStats]:
    """Clipped token-level surrogate over all kept groups.

    new_logprobs mirrors groups: new_logprobs[g][i] holds the current
    policy's per-token logprobs for groups[g].rollouts[i]. An empty batch
    returns J = 0.0 with the empty flag set rather than dividing by zero.
    """
    if len(groups) == 0:
        return 0.0, ObjectiveStats.empty()
    if len(new_logprobs) != len(groups):
        raise ValueError("new_logprobs must align with groups")

    ratios: list[np.ndarray] = []
    clipped: list[np.ndarray] = []
    contributions: list[np.ndarray] = []
    token_count = 0
    for group, group_lps in zip(groups, new_logprobs):
        if group.advantages is None:
            raise ValueError(f"group {group.prompt_id!r} has no advantages")
        if len(group_lps) != len(group.rollouts):
            raise ValueError(f"logprobs for group {group.prompt_id!r} misaligned")
        for rollout, adv, new_lp in zip(group.rollouts, group.advantages, group_lps):
            new_lp = np.asarray(new_lp, dtype=np.float64)
            if new_lp.shape != rollout.old_logprobs.shape:
                raise ValueError(
                    f"logprob shape mismatch for rollout in group {group.prompt_id!r}"
                )
            token_count += new_lp.size
            if new_lp.size == 0:
                continue
            ratio = token_ratio(new_lp, rollout.old_logprobs)
            ratio = np.atleast_1d(ratio)
            clipped_ratio = np.clip(ratio, clip.low, clip.high)
            unclipped_term = ratio * adv
            clipped_term = clipped_ratio * adv
            contrib = np.minimum(unclipped_term, clipped_term)
            ratios.append(ratio)
            clipped.append(clipped_term < unclipped_term)
            contributions.append(contrib)

    if token_count == 0:
        return 0.0, ObjectiveStats.empty()
    flat_ratios = np.concatenate(ratios) if ratios else np.zeros(0)
    flat_clipped = np.concatenate(clipped) if clipped else np.zeros(0, dtype=bool)
    flat_contrib = np.concatenate(contributions) if contributions else np.zeros(0)
    objective = math.fsum(flat_contrib.tolist()) / token_count
    stats = ObjectiveStats(
        ratios=flat_ratios,
        clipped=flat_clipped,
        contributions=flat_contrib,
        token_count=token_count,
        clipped_fraction=float(flat_clipped.mean()) if flat_clipped.size else 0.0,
    )
    return objective, stats


def sft_loss(target_logprobs: Sequence[float]) -> float:
    """Token-level cross entropy of a fixed target: -sum(logprobs)."""
    return -math.fsum(float(lp) for lp in target_logprobs)
