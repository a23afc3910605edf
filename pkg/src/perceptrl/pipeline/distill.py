"""Key-information distillation from teacher trajectories.

For each item: sample N candidates per teacher, keep the top B by sampling
logprob (ties broken by candidate id), judge exactly those B for accuracy
and coherence, filter by thresholds, then

* with a gold answer: deduplicate by final answer, keeping the candidate
  with the highest weighted score (w1 * s_acc + w2 * s_coh, ties by id);
* without one: keep the modal final-answer class(es), all of them on ties.

The best survivor's trajectory is mined for visual and textual key facts
with an application map pointing every fact at the trajectory step that
uses it. Items with no survivors are skipped (counted, never fabricated).
The judge is invoked at most B times per item; tau_cons rides along in the
config for compatibility but no stage consumes it.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from ..rewards import ConfigError
from .clients import CandidateSample, ClientError, ExternalClients

__all__ = [
    "DistillConfig",
    "DistillItem",
    "DistilledRecord",
    "DistillSummary",
    "distill",
    "extract_keyinfo",
    "select_best",
    "split_steps",
    "topk_by_logprob",
    "verify_candidates",
]


@dataclass(frozen=True)
class DistillConfig:
    n_per_teacher: int = 4
    budget: int = 6  # candidates judged per item (B)
    tau_acc: float = 0.7
    tau_coh: float = 0.6
    tau_cons: float = 0.0  # accepted for compatibility; no stage reads it
    w_acc: float = 0.7
    w_coh: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n_per_teacher < 1:
            raise ConfigError(f"n_per_teacher must be >= 1, got {self.n_per_teacher}")
        if self.budget < 1:
            raise ConfigError(f"budget must be >= 1, got {self.budget}")
        for name in ("tau_acc", "tau_coh"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.w_acc < 0 or self.w_coh < 0:
            raise ConfigError("score weights must be nonnegative")
        if self.w_acc + self.w_coh <= 0:
            raise ConfigError("score weights must not both be zero")

    def validate_budget(self, teacher_count: int) -> None:
        pool = self.n_per_teacher * teacher_count
        if self.budget > pool:
            raise ConfigError(
                f"budget {self.budget} exceeds candidate pool "
                f"{self.n_per_teacher} x {teacher_count} = {pool}"
            )


@dataclass(frozen=True)
class DistillItem:
    """One problem to distill; gold_answer may be absent."""

    item_id: str
    question: str
    gold_answer: Optional[str] = None


@dataclass(frozen=True)
class JudgedCandidate:
    sample: CandidateSample
    s_acc: float
    s_coh: float

    def weighted(self, w_acc: float, w_coh: float) -> float:
        return w_acc * self.s_acc + w_coh * self.s_coh


@dataclass
class DistilledRecord:
    """Verified answer, trajectory, and its key facts for one item."""

    id: str
    question: str
    answer: str
    trajectory: str
    visual_keys: list[str]
    textual_keys: list[str]
    application_map: dict[str, int]
    # False when the extractor failed; the record is still usable for
    # answer-only training, it just carries no key facts.
    key_info_ok: bool = True

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "answer": self.answer,
            "trajectory": self.trajectory,
            "visual_keys": list(self.visual_keys),
            "textual_keys": list(self.textual_keys),
            "application_map": dict(self.application_map),
            "key_info_ok": self.key_info_ok,
        }


@dataclass
class DistillSummary:
    items: int = 0
    kept: int = 0
    skipped: int = 0
    judge_calls: int = 0

    def to_dict(self) -> dict:
        return {
            "items": self.items,
            "kept": self.kept,
            "skipped": self.skipped,
            "judge_calls": self.judge_calls,
        }


def topk_by_logprob(candidates: Sequence[CandidateSample], k: int) -> list[CandidateSample]:
    """Top k by sampling logprob, ties resolved by ascending candidate id."""
    ranked = sorted(candidates, key=lambda c: (-c.logprob, c.cand_id))
    return ranked[:k]


def verify_candidates(
    judged: Sequence[JudgedCandidate],
    gold_answer: Optional[str],
    cfg: DistillConfig,
) -> list[JudgedCandidate]:
    """Threshold filter plus answer-level selection.

    Gold present: per distinct final answer keep the best-weighted survivor.
    Gold absent: self-consistency, keep every survivor whose final answer
    belongs to a modal answer class (all classes on ties).
    """
    survivors = [c for c in judged if c.s_acc >= cfg.tau_acc and c.s_coh >= cfg.tau_coh]
    if not survivors:
        return []
    if gold_answer is None:
        counts = Counter(c.sample.final_answer for c in survivors)
        top = max(counts.values())
        modal = {ans for ans, n in counts.items() if n == top}
        return [c for c in survivors if c.sample.final_answer in modal]
    best_by_answer: dict[str, JudgedCandidate] = {}
    for cand in survivors:
        key = cand.sample.final_answer
        cur = best_by_answer.get(key)
        if cur is None or (
            cand.weighted(cfg.w_acc, cfg.w_coh),
            -cand.sample.cand_id,
        ) > (cur.weighted(cfg.w_acc, cfg.w_coh), -cur.sample.cand_id):
            best_by_answer[key] = cand
    return sorted(best_by_answer.values(), key=lambda c: c.sample.cand_id)


def select_best(survivors: Sequence[JudgedCandidate], cfg: DistillConfig) -> JudgedCandidate:
    """Highest weighted score; ties broken by ascending candidate id."""
    if not survivors:
        raise ValueError("select_best needs at least one survivor")
    return max(survivors, key=lambda c: (c.weighted(cfg.w_acc, cfg.w_coh), -c.sample.cand_id))


_STEP_RE = re.compile(r"^\s*step\s+\d+\s*:", re.IGNORECASE)


def split_steps(trajectory: str) -> list[str]:
    """Enumerated reasoning steps: 'Step n:' lines, else non-empty lines."""
    lines = [ln.strip() for ln in trajectory.splitlines() if ln.strip()]
    steps = [ln for ln in lines if _STEP_RE.match(ln)]
    if steps:
        return steps
    return [ln for ln in lines if not ln.lower().startswith("answer:")]


def extract_keyinfo(
    trajectory: str, clients: ExternalClients, question: str
) -> tuple[list[str], list[str], dict[str, int]]:
    """Visual keys, textual keys, and fact -> step application map.

    Map entries pointing outside the enumerated step range are dropped
    (contract violation by the client, logged as absent rather than kept).
    """
    steps = split_steps(trajectory)
    visual, textual, app_map = clients.extractor.key_info(steps, question)
    bound = len(steps)
    clean_map = {
        fact: idx for fact, idx in app_map.items() if 0 <= idx < bound
    }
    return list(visual), list(textual), clean_map


def distill(
    items: Iterable[DistillItem],
    clients: ExternalClients,
    cfg: DistillConfig,
) -> tuple[list[DistilledRecord], DistillSummary]:
    """Run the full distillation; returns (records, summary)."""
    cfg.validate_budget(clients.teacher.teacher_count)
    summary = DistillSummary()
    records: list[DistilledRecord] = []
    for item in items:
        summary.items += 1
        try:
            pool = clients.teacher.sample(item.question, cfg.n_per_teacher)
        except ClientError:
            summary.skipped += 1
            continue
        shortlist = topk_by_logprob(pool, cfg.budget)
        judged = []
        for cand in shortlist:
            s_acc, s_coh = clients.judge.trajectory(
                item.question, cand.text, cand.final_answer, item.gold_answer
            )
            summary.judge_calls += 1
            judged.append(JudgedCandidate(sample=cand, s_acc=s_acc, s_coh=s_coh))
        survivors = verify_candidates(judged, item.gold_answer, cfg)
        if not survivors:
            summary.skipped += 1
            continue
        best = select_best(survivors, cfg)
        try:
            visual, textual, app_map = extract_keyinfo(
                best.sample.text, clients, item.question
            )
            key_info_ok = True
        except ClientError:
            visual, textual, app_map = [], [], {}
            key_info_ok = False
        records.append(
            DistilledRecord(
                id=item.item_id,
                question=item.question,
                answer=best.sample.final_answer,
                trajectory=best.sample.text,
                visual_keys=visual,
                textual_keys=textual,
                application_map=app_map,
                key_info_ok=key_info_ok,
            )
        )
        summary.kept += 1
    return records, summary


def records_to_jsonl(records: Iterable[DistilledRecord]) -> str:
    return "".join(
        json.dumps(rec.to_dict(), ensure_ascii=False) + "\n" for rec in records
    )
