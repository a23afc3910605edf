"""Engine configuration: one JSON document, one canonical hash.

The scoring service and the CLI share this schema. Every field is optional
and falls back to the library default, so `{}` is a valid config. The
canonical hash covers the *resolved* config (defaults filled in), serialized
as canonical JSON (sorted keys, no whitespace), so two configs that resolve
identically hash identically.

Schema (all keys optional):

    {
      "weights":    {"acc": 1, "fmt": 1, "vkey": 1, "tkey": 1, "rep": 1, "cons": 1},
      "thresholds": {"tau_lo": 0.4, "tau_hi": 0.8},
      "schedule":   {"start": {...weights...}, "end": {...weights...},
                     "warmup_fraction": 0.5},
      "ngram_order": 3,
      "repetition_scope": "description+think",
      "lexicon": ["right angle", ...],
      "lexicon_file": "keyphrases.txt",
      "max_batch": 1024
    }

"lexicon_file" names a one-phrase-per-line UTF-8 file, resolved relative to
the config file; its phrases are appended to the inline list. The resolved
config (and so the hash) carries the merged phrase list, never the path.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Optional

from .facts import load_lexicon, normalize_fact
from .rewards import (
    ConfigError,
    CoverageThresholds,
    RewardConfig,
    RewardWeights,
    ScheduleConfig,
)

__all__ = ["EngineConfig", "canonical_dumps", "load_engine_config"]


def canonical_dumps(obj: Any) -> str:
    """Canonical JSON: sorted keys, tight separators, unicode kept raw."""
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    )


@dataclass(frozen=True)
class EngineConfig:
    """Resolved scoring configuration plus service limits."""

    reward: RewardConfig = field(default_factory=RewardConfig)
    max_batch: int = 1024

    def __post_init__(self):
        if self.max_batch < 1:
            raise ConfigError(f"max_batch must be >= 1, got {self.max_batch}")

    def to_dict(self) -> dict:
        r = self.reward
        return {
            "weights": r.weights.to_dict(),
            "thresholds": {"tau_lo": r.thresholds.tau_lo, "tau_hi": r.thresholds.tau_hi},
            "schedule": {
                "start": r.schedule.start.to_dict(),
                "end": r.schedule.end.to_dict(),
                "warmup_fraction": r.schedule.warmup_fraction,
            },
            "ngram_order": r.ngram_order,
            "repetition_scope": r.repetition_scope,
            "lexicon": list(r.lexicon),
            "max_batch": self.max_batch,
        }

    def config_hash(self) -> str:
        """SHA-256 of the resolved canonical JSON config."""
        return hashlib.sha256(canonical_dumps(self.to_dict()).encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Optional[str] = None) -> "EngineConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"config must be a JSON object, got {type(raw).__name__}")
        known = {
            "weights",
            "thresholds",
            "schedule",
            "ngram_order",
            "repetition_scope",
            "lexicon",
            "lexicon_file",
            "max_batch",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            weights = RewardWeights.from_dict(raw.get("weights", {}))
            thresholds = CoverageThresholds(**raw.get("thresholds", {}))
            sched_raw = raw.get("schedule", {})
            schedule_kwargs: dict[str, Any] = {}
            if "start" in sched_raw:
                schedule_kwargs["start"] = RewardWeights.from_dict(sched_raw["start"])
            if "end" in sched_raw:
                schedule_kwargs["end"] = RewardWeights.from_dict(sched_raw["end"])
            if "warmup_fraction" in sched_raw:
                schedule_kwargs["warmup_fraction"] = float(sched_raw["warmup_fraction"])
            extra = set(sched_raw) - {"start", "end", "warmup_fraction"}
            if extra:
                raise ConfigError(f"unknown schedule keys: {sorted(extra)}")
            schedule = ScheduleConfig(**schedule_kwargs)
            lexicon = raw.get("lexicon", ())
            if not isinstance(lexicon, (list, tuple)) or not all(
                isinstance(p, str) for p in lexicon
            ):
                raise ConfigError("lexicon must be a list of strings")
            # canonicalize inline phrases like file-loaded ones, so spelling
            # variants of one phrase cannot produce distinct config hashes
            lexicon = [c for c in (normalize_fact(p) for p in lexicon) if c]
            if "lexicon_file" in raw:
                lex_path = raw["lexicon_file"]
                if not isinstance(lex_path, str):
                    raise ConfigError("lexicon_file must be a path string")
                if base_dir is not None:
                    lex_path = os.path.join(base_dir, lex_path)
                try:
                    lexicon.extend(load_lexicon(lex_path))
                except OSError as exc:
                    raise ConfigError(f"cannot read lexicon_file: {exc}") from exc
            reward = RewardConfig(
                weights=weights,
                thresholds=thresholds,
                schedule=schedule,
                ngram_order=int(raw.get("ngram_order", 3)),
                repetition_scope=raw.get("repetition_scope", "description+think"),
                lexicon=tuple(dict.fromkeys(lexicon)),
            )
            return cls(reward=reward, max_batch=int(raw.get("max_batch", 1024)))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_engine_config(path: Optional[str]) -> EngineConfig:
    """Config from a JSON file; None means all defaults."""
    if path is None:
        return EngineConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return EngineConfig.from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))
