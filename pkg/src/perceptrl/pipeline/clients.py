"""External model clients used by the data pipelines, plus seeded mocks.

The pipelines only ever talk to these interfaces. The mock implementations
are pure functions of (input, seed): every value is derived by hashing the
inputs with SHA-256, so runs are deterministic across processes and
platforms, and every mock counts its calls so tests can enforce budget laws.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

__all__ = [
    "CandidateSample",
    "ClientError",
    "Detection",
    "ExternalClients",
    "MockCaptioner",
    "MockDetector",
    "MockExtractor",
    "MockJudge",
    "MockOcr",
    "MockRestructurer",
    "MockTeacher",
]


class ClientError(RuntimeError):
    """A client failed for one request; pipelines quarantine, never crash."""


@dataclass(frozen=True)
class Detection:
    cls: str
    bbox: tuple[int, int, int, int]


@dataclass(frozen=True)
class CandidateSample:
    """One teacher trajectory with its sampling logprob."""

    cand_id: int
    text: str
    logprob: float
    final_answer: str


def _digest(seed: int, *parts: str) -> int:
    payload = f"{seed}|" + "|".join(parts)
    return int.from_bytes(hashlib.sha256(payload.encode("utf-8")).digest()[:8], "big")


def _unit_float(seed: int, *parts: str) -> float:
    """Deterministic value in [0, 1) with 6 decimals (stable JSON bytes)."""
    return round(_digest(seed, *parts) % 10**6 / 10**6, 6)


def _pick(seed: int, options: Sequence, *parts: str):
    return options[_digest(seed, *parts) % len(options)]


class _BaseClient:
    """Abstract request/response client; all mocks share call counting."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.calls = 0

    def _tick(self) -> None:
        self.calls += 1


_SCENE_NOUNS = ("circle", "square", "triangle", "grid", "ruler", "arrow", "label", "axis")
_SCENE_VERBS = ("overlaps", "touches", "sits above", "points at", "encloses")


class MockCaptioner(_BaseClient):
    def describe(self, image_path: str, question: str) -> str:
        self._tick()
        a = _pick(self.seed, _SCENE_NOUNS, "cap-a", image_path)
        b = _pick(self.seed, _SCENE_NOUNS, "cap-b", image_path, question)
        verb = _pick(self.seed, _SCENE_VERBS, "cap-v", image_path)
        return f"a {a} {verb} a {b} in a clean diagram"


class MockDetector(_BaseClient):
    def detect(self, image_path: str) -> list[Detection]:
        self._tick()
        count = _digest(self.seed, "det-n", image_path) % 3 + 1
        out = []
        for i in range(count):
            cls = _pick(self.seed, _SCENE_NOUNS, "det-c", image_path, str(i))
            x = _digest(self.seed, "det-x", image_path, str(i)) % 400
            y = _digest(self.seed, "det-y", image_path, str(i)) % 300
            w = _digest(self.seed, "det-w", image_path, str(i)) % 120 + 10
            h = _digest(self.seed, "det-h", image_path, str(i)) % 120 + 10
            out.append(Detection(cls=cls, bbox=(x, y, x + w, y + h)))
        return out


class MockOcr(_BaseClient):
    """OCR mock; ids listed in fail_for raise ClientError to exercise
    the pipeline's quarantine-and-log path."""

    def __init__(self, seed: int = 0, fail_for: Sequence[str] = ()):
        super().__init__(seed)
        self.fail_for = frozenset(fail_for)

    def read(self, image_path: str) -> str:
        self._tick()
        if image_path in self.fail_for:
            raise ClientError(f"ocr failed on {image_path}")
        if _digest(self.seed, "ocr-has", image_path) % 4 == 0:
            return ""
        token = _digest(self.seed, "ocr-t", image_path) % 90 + 10
        return f"AB = {token}"


class MockRestructurer(_BaseClient):
    """Rewrites reasoning against the formal description.

    The prompt it receives is recorded verbatim so tests can assert the
    original chain of thought never leaks into it.
    """

    def __init__(self, seed: int = 0):
        super().__init__(seed)
        self.prompts: list[str] = []

    def restructure(self, prompt: str) -> str:
        self._tick()
        self.prompts.append(prompt)
        anchor = _pick(self.seed, _SCENE_NOUNS, "res-a", prompt)
        value = _digest(self.seed, "res-v", prompt) % 90 + 10
        return (
            f"Step 1: read the formal description and locate the {anchor}.\n"
            f"Step 2: relate the {anchor} to the quantity asked about.\n"
            f"Step 3: compute the value {value}.\n"
            f"Answer: {value}"
        )


class MockJudge(_BaseClient):
    """Scores cleaning quality and distillation trajectories."""

    def quality(self, formal: str, cot: str, answer: str) -> dict:
        self._tick()
        return {
            "formal_score": round(0.70 + 0.30 * _unit_float(self.seed, "q-f", formal), 6),
            "cot_score": round(0.70 + 0.30 * _unit_float(self.seed, "q-c", cot), 6),
            "answer_score": round(0.70 + 0.30 * _unit_float(self.seed, "q-a", answer), 6),
            "misc_score": round(0.80 + 0.20 * _unit_float(self.seed, "q-m", formal, answer), 6),
        }

    def trajectory(self, question: str, trajectory: str, final_answer: str,
                   gold: Optional[str]) -> tuple[float, float]:
        """(accuracy score, coherence score) for one candidate."""
        self._tick()
        coherence = round(0.50 + 0.50 * _unit_float(self.seed, "j-c", trajectory), 6)
        if gold is not None:
            accuracy = (
                round(0.85 + 0.15 * _unit_float(self.seed, "j-hi", trajectory), 6)
                if final_answer.strip() == gold.strip()
                else round(0.30 * _unit_float(self.seed, "j-lo", trajectory), 6)
            )
        else:
            accuracy = round(0.40 + 0.60 * _unit_float(self.seed, "j-g", question, trajectory), 6)
        return accuracy, coherence


def _solve_arithmetic(question: str) -> Optional[int]:
    """Mock corpora ask 'what is A + B ?' style questions; solve them."""
    tokens = question.replace("?", " ").split()
    for i, tok in enumerate(tokens):
        if tok in {"+", "-", "*"} and 0 < i < len(tokens) - 1:
            try:
                a, b = int(tokens[i - 1]), int(tokens[i + 1])
            except ValueError:
                continue
            return {"+": a + b, "-": a - b, "*": a * b}[tok]
    return None


class MockTeacher(_BaseClient):
    """Samples candidate trajectories; right roughly 70% of the time."""

    def __init__(self, seed: int = 0, teacher_count: int = 2):
        super().__init__(seed)
        if teacher_count < 1:
            raise ValueError("teacher_count must be >= 1")
        self.teacher_count = teacher_count

    def sample(self, question: str, n_per_teacher: int) -> list[CandidateSample]:
        self._tick()
        truth = _solve_arithmetic(question)
        out = []
        cand_id = 0
        for teacher in range(self.teacher_count):
            for draw in range(n_per_teacher):
                key = f"{teacher}:{draw}"
                wrongness = _digest(self.seed, "t-acc", question, key) % 10
                if truth is None or wrongness < 3:
                    answer = str(_digest(self.seed, "t-ans", question, key) % 40)
                else:
                    answer = str(truth)
                steps = _digest(self.seed, "t-len", question, key) % 2 + 2
                lines = [
                    f"Step {s + 1}: teacher {teacher} checks the "
                    f"{_pick(self.seed, _SCENE_NOUNS, 't-n', question, key, str(s))}, pass {draw}."
                    for s in range(steps)
                ]
                lines.append(f"Step {steps + 1}: conclude {answer}.")
                text = "\n".join(lines) + f"\nAnswer: {answer}"
                logprob = round(-5.0 + 5.0 * _unit_float(self.seed, "t-lp", question, key), 6)
                out.append(
                    CandidateSample(
                        cand_id=cand_id, text=text, logprob=logprob, final_answer=answer
                    )
                )
                cand_id += 1
        return out


class MockExtractor(_BaseClient):
    """Pulls key facts out of a verified trajectory.

    Visual keys come from scene nouns mentioned in the steps, textual keys
    from numbers; the application map always targets existing step indices.
    Questions listed in fail_for raise ClientError.
    """

    def __init__(self, seed: int = 0, fail_for: Sequence[str] = ()):
        super().__init__(seed)
        self.fail_for = frozenset(fail_for)

    def key_info(self, steps: Sequence[str], question: str) -> tuple[list[str], list[str], dict[str, int]]:
        self._tick()
        if question in self.fail_for:
            raise ClientError(f"extractor backend unavailable for {question!r}")
        visual: list[str] = []
        textual: list[str] = []
        app_map: dict[str, int] = {}
        for idx, step in enumerate(steps):
            words = step.lower().replace(".", " ").replace(",", " ").split()
            for word in words:
                if word in _SCENE_NOUNS and word not in visual:
                    visual.append(word)
                    app_map.setdefault(word, idx)
                elif word.isdigit() and word not in textual:
                    textual.append(word)
                    app_map.setdefault(word, idx)
        q_words = question.lower().replace("?", " ").split()
        for word in q_words:
            if word.isdigit() and word not in textual:
                textual.append(word)
                app_map.setdefault(word, len(steps) - 1 if steps else 0)
        return visual, textual, app_map


@dataclass
class ExternalClients:
    """Every external dependency the pipelines touch, in one bundle."""

    captioner: MockCaptioner
    detector: MockDetector
    ocr: MockOcr
    restructurer: MockRestructurer
    judge: MockJudge
    teacher: MockTeacher
    extractor: MockExtractor

    @classmethod
    def mocks(
        cls,
        seed: int = 0,
        teacher_count: int = 2,
        ocr_fail_for: Sequence[str] = (),
        extractor_fail_for: Sequence[str] = (),
    ) -> "ExternalClients":
        return cls(
            captioner=MockCaptioner(seed),
            detector=MockDetector(seed),
            ocr=MockOcr(seed, fail_for=ocr_fail_for),
            restructurer=MockRestructurer(seed),
            judge=MockJudge(seed),
            teacher=MockTeacher(seed, teacher_count=teacher_count),
            extractor=MockExtractor(seed, fail_for=extractor_fail_for),
        )
