"""Dataset cleaning: formal descriptions, restructured reasoning, quality gate.

Each raw record (image, question, original reasoning, answer) is rebuilt
into a structured record:

1. caption + detections + OCR are composed into a formal description with a
   fixed section order (scene, objects, text), so identical inputs give
   identical bytes;
2. the reasoning is rewritten from the question and the formal description
   alone; the prompt sent to the restructurer never contains the original
   chain of thought, so the rewrite cannot copy it;
3. a judge scores the result on four dimensions combined by fixed weights
   (defaults 0.30/0.35/0.30/0.05, validated to sum to 1), and the record
   passes only when the overall score clears min_score.

Failures of any client quarantine the record into the failed pile with a
processing log entry; nothing raises out of clean_dataset. Output records
serialize to JSONL with a fixed field order and no wall-clock values, so a
fixed seed reproduces the files byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ..rewards import ConfigError
from .clients import ClientError, Detection, ExternalClients

__all__ = [
    "CleaningConfig",
    "PipelineRecord",
    "QualityMetrics",
    "QualityWeights",
    "RawRecord",
    "build_formal_description",
    "clean_dataset",
    "clean_record",
    "extract_final_answer",
    "make_raw_corpus",
    "quality_score",
    "records_to_jsonl",
    "restructure_prompt",
]

_WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class QualityWeights:
    """Weights for (formal, cot, answer, misc) quality scores."""

    formal: float = 0.30
    cot: float = 0.35
    answer: float = 0.30
    misc: float = 0.05

    def __post_init__(self):
        total = self.formal + self.cot + self.answer + self.misc
        if any(w < 0 for w in (self.formal, self.cot, self.answer, self.misc)):
            raise ConfigError("quality weights must be nonnegative")
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            raise ConfigError(f"quality weights must sum to 1, got {total!r}")


@dataclass(frozen=True)
class CleaningConfig:
    min_score: float = 0.9
    weights: QualityWeights = field(default_factory=QualityWeights)
    sample_size: Optional[int] = None  # None: keep every passing record
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.min_score <= 1.0):
            raise ConfigError(f"min_score must be in [0, 1], got {self.min_score}")
        if self.sample_size is not None and self.sample_size < 1:
            raise ConfigError(f"sample_size must be >= 1, got {self.sample_size}")


@dataclass(frozen=True)
class RawRecord:
    """One uncleaned input record."""

    record_id: str
    image_path: str
    question: str
    original_cot: str
    original_answer: str


@dataclass(frozen=True)
class QualityMetrics:
    formal_score: float
    cot_score: float
    answer_score: float
    misc_score: float
    overall_score: float

    def to_dict(self) -> dict:
        return {
            "formal_score": self.formal_score,
            "cot_score": self.cot_score,
            "answer_score": self.answer_score,
            "misc_score": self.misc_score,
            "overall_score": self.overall_score,
        }


@dataclass
class PipelineRecord:
    """One cleaned record; to_dict fixes the serialized field order."""

    id: str
    image_path: str
    question: str
    formal_description: str
    cot_thinking: str
    final_answer: str
    quality_metrics: QualityMetrics
    passed_quality_check: bool
    detected_objects: list[Detection] = field(default_factory=list)
    ocr_text: str = ""
    processing_log: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "image_path": self.image_path,
            "question": self.question,
            "formal_description": self.formal_description,
            "cot_thinking": self.cot_thinking,
            "final_answer": self.final_answer,
            "quality_metrics": self.quality_metrics.to_dict(),
            "passed_quality_check": self.passed_quality_check,
            "metadata": {
                "detected_objects": [
                    {"class": d.cls, "bbox": list(d.bbox)} for d in self.detected_objects
                ],
                "ocr_text": self.ocr_text,
                "processing_log": list(self.processing_log),
            },
        }


def quality_score(
    formal: float, cot: float, answer: float, misc: float, weights: QualityWeights
) -> float:
    """Weighted overall quality; weights were validated to sum to one."""
    return math.fsum(
        (
            weights.formal * formal,
            weights.cot * cot,
            weights.answer * answer,
            weights.misc * misc,
        )
    )


def build_formal_description(
    caption: str, detections: Sequence[Detection], ocr_text: str
) -> str:
    """Compose the three perception sections in their fixed order."""
    lines = ["Scene: " + caption.strip()]
    if detections:
        lines.append("Objects:")
        for det in detections:
            x0, y0, x1, y1 = det.bbox
            lines.append(f"- {det.cls} at [{x0}, {y0}, {x1}, {y1}]")
    else:
        lines.append("Objects: none detected")
    text = ocr_text.strip()
    lines.append("Text: " + (text if text else "none"))
    return "\n".join(lines)


def restructure_prompt(question: str, formal_description: str) -> str:
    """Prompt for the reasoning rewrite.

    Built from the question and formal description only; the original
    chain of thought is excluded by construction.
    """
    return (
        "Rewrite the reasoning for this problem from scratch.\n"
        f"Question: {question}\n"
        f"Formal description:\n{formal_description}\n"
        "Think step by step and end with 'Answer: <value>'."
    )


def extract_final_answer(cot: str) -> str:
    """Value after the last 'Answer:' line; empty when there is none."""
    answer = ""
    for line in cot.splitlines():
        stripped = line.strip()
        if stripped.lower().startswith("answer:"):
            answer = stripped.split(":", 1)[1].strip()
    return answer


def clean_record(
    raw: RawRecord, clients: ExternalClients, cfg: CleaningConfig
) -> PipelineRecord:
    """Run one record through the full cleaning path; never raises."""
    log: list[str] = []
    detections: list[Detection] = []
    ocr_text = ""
    caption = ""
    try:
        caption = clients.captioner.describe(raw.image_path, raw.question)
        log.append("caption ok")
    except ClientError as exc:
        log.append(f"caption failed: {exc}")
    try:
        detections = list(clients.detector.detect(raw.image_path))
        log.append(f"detector ok ({len(detections)} objects)")
    except ClientError as exc:
        log.append(f"detector failed: {exc}")
    try:
        ocr_text = clients.ocr.read(raw.image_path)
        log.append("ocr ok" if ocr_text else "ocr ok (no text)")
    except ClientError as exc:
        log.append(f"ocr failed: {exc}")

    formal = build_formal_description(caption, detections, ocr_text)

    try:
        prompt = restructure_prompt(raw.question, formal)
        cot = clients.restructurer.restructure(prompt)
        log.append("restructure ok")
    except ClientError as exc:
        log.append(f"restructure failed: {exc}")
        metrics = QualityMetrics(0.0, 0.0, 0.0, 0.0, 0.0)
        return PipelineRecord(
            id=raw.record_id,
            image_path=raw.image_path,
            question=raw.question,
            formal_description=formal,
            cot_thinking="",
            final_answer="",
            quality_metrics=metrics,
            passed_quality_check=False,
            detected_objects=detections,
            ocr_text=ocr_text,
            processing_log=log,
        )

    final_answer = extract_final_answer(cot)
    if not final_answer:
        log.append("no final answer found")

    scores = clients.judge.quality(formal, cot, final_answer)
    overall = quality_score(
        scores["formal_score"],
        scores["cot_score"],
        scores["answer_score"],
        scores["misc_score"],
        cfg.weights,
    )
    metrics = QualityMetrics(
        formal_score=scores["formal_score"],
        cot_score=scores["cot_score"],
        answer_score=scores["answer_score"],
        misc_score=scores["misc_score"],
        overall_score=overall,
    )
    passed = bool(final_answer) and overall >= cfg.min_score
    log.append(f"quality gate {'passed' if passed else 'failed'} at {cfg.min_score}")
    return PipelineRecord(
        id=raw.record_id,
        image_path=raw.image_path,
        question=raw.question,
        formal_description=formal,
        cot_thinking=cot,
        final_answer=final_answer,
        quality_metrics=metrics,
        passed_quality_check=passed,
        detected_objects=detections,
        ocr_text=ocr_text,
        processing_log=log,
    )


def clean_dataset(
    records: Iterable[RawRecord], clients: ExternalClients, cfg: CleaningConfig
) -> tuple[list[PipelineRecord], list[PipelineRecord]]:
    """Clean every record; returns (passed, failed).

    With sample_size set, the passed pile is downsampled uniformly without
    replacement under the config seed (order preserved).
    """
    passed: list[PipelineRecord] = []
    failed: list[PipelineRecord] = []
    for raw in records:
        rec = clean_record(raw, clients, cfg)
        (passed if rec.passed_quality_check else failed).append(rec)
    if cfg.sample_size is not None and cfg.sample_size < len(passed):
        rng = np.random.default_rng(cfg.seed)
        keep = sorted(rng.choice(len(passed), size=cfg.sample_size, replace=False))
        passed = [passed[i] for i in keep]
    return passed, failed


def records_to_jsonl(records: Iterable[PipelineRecord]) -> str:
    """JSONL bytes for a record list; field order is fixed by to_dict."""
    return "".join(
        json.dumps(rec.to_dict(), ensure_ascii=False) + "\n" for rec in records
    )


def make_raw_corpus(n: int, seed: int = 0) -> list[RawRecord]:
    """Deterministic synthetic raw corpus for demos and tests."""
    shapes = ("circle", "square", "triangle", "ray", "chord")
    out = []
    for i in range(n):
        a = (i * 7 + seed) % 12 + 1
        b = (i * 5 + seed) % 9 + 1
        shape = shapes[(i + seed) % len(shapes)]
        out.append(
            RawRecord(
                record_id=f"r{i:04d}",
                image_path=f"images/{seed}/{i:04d}.png",
                question=f"the {shape} is marked {a} and {b} . what is {a} + {b} ?",
                original_cot=f"well, {a} plus {b} ... call it {a + b}.",
                original_answer=str(a + b),
            )
        )
    return out
