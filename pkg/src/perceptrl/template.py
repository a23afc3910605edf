"""Structured response template: description -> think -> answer.

A response is well-formed when each of the three tags opens exactly once and
closes exactly once, in that order, with nothing but whitespace between the
tagged spans. Whitespace-only stray text is tolerated (models love trailing
newlines); any other stray text is malformed. Nested same-name tags count as
extra opens. Parsing never raises on any input string.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

__all__ = [
    "FormatDiagnostics",
    "StructuredResponse",
    "SEGMENT_NAMES",
    "extract_answer_span",
    "format_reward",
    "parse_structured",
    "serialize_structured",
]

SEGMENT_NAMES = ("description", "think", "answer")

_LAST_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)


@dataclass(frozen=True)
class StructuredResponse:
    """The three segments of a well-formed response, whitespace-trimmed."""

    description: str
    think: str
    answer: str


@dataclass
class FormatDiagnostics:
    """Counts and violations gathered while parsing one response."""

    open_counts: dict[str, int] = field(default_factory=dict)
    close_counts: dict[str, int] = field(default_factory=dict)
    order_violations: list[str] = field(default_factory=list)
    stray_text_spans: list[tuple[int, int]] = field(default_factory=list)
    well_formed: bool = False

    def to_dict(self) -> dict:
        return {
            "open_counts": dict(self.open_counts),
            "close_counts": dict(self.close_counts),
            "order_violations": list(self.order_violations),
            "stray_text_spans": [list(span) for span in self.stray_text_spans],
            "well_formed": self.well_formed,
        }


def _find_all(text: str, needle: str) -> list[int]:
    positions = []
    start = 0
    while True:
        idx = text.find(needle, start)
        if idx < 0:
            return positions
        positions.append(idx)
        start = idx + 1


def parse_structured(
    text: str,
) -> tuple[Optional[StructuredResponse], FormatDiagnostics]:
    """Parse one rollout into segments plus diagnostics.

    Returns (response, diagnostics); response is None whenever the text is
    not well-formed. Tags are literal and case-sensitive. Never raises.
    """
    diag = FormatDiagnostics()
    opens: dict[str, list[int]] = {}
    closes: dict[str, list[int]] = {}
    for name in SEGMENT_NAMES:
        opens[name] = _find_all(text, f"<{name}>")
        closes[name] = _find_all(text, f"</{name}>")
        diag.open_counts[name] = len(opens[name])
        diag.close_counts[name] = len(closes[name])

    counts_ok = all(
        diag.open_counts[n] == 1 and diag.close_counts[n] == 1 for n in SEGMENT_NAMES
    )
    if not counts_ok:
        return None, diag

    # One of each tag: check the six positions are strictly ordered.
    boundaries = []
    for name in SEGMENT_NAMES:
        boundaries.append((opens[name][0], f"<{name}>"))
        boundaries.append((closes[name][0], f"</{name}>"))
    ordered = True
    for (prev_pos, prev_tag), (pos, tag) in zip(boundaries, boundaries[1:]):
        if prev_pos >= pos:
            ordered = False
            diag.order_violations.append(f"{tag} before {prev_tag}")
    if not ordered:
        return None, diag

    # Stray text: anything outside the three tagged spans must be whitespace.
    spans = []
    for name in SEGMENT_NAMES:
        spans.append((opens[name][0], closes[name][0] + len(f"</{name}>")))
    gaps = [(0, spans[0][0]), (spans[0][1], spans[1][0]), (spans[1][1], spans[2][0]), (spans[2][1], len(text))]
    for start, end in gaps:
        if text[start:end].strip():
            diag.stray_text_spans.append((start, end))
    if diag.stray_text_spans:
        return None, diag

    diag.well_formed = True
    segments = []
    for name, (span_start, span_end) in zip(SEGMENT_NAMES, spans):
        inner_start = span_start + len(f"<{name}>")
        inner_end = span_end - len(f"</{name}>")
        segments.append(text[inner_start:inner_end].strip())
    return StructuredResponse(*segments), diag


def serialize_structured(response: StructuredResponse) -> str:
    """Canonical text form; parse(serialize(r)) round-trips segments."""
    return (
        f"<description>{response.description}</description>"
        f"<think>{response.think}</think>"
        f"<answer>{response.answer}</answer>"
    )


def format_reward(diag: FormatDiagnostics) -> float:
    """Binary format reward: 1.0 for well-formed, 0.0 otherwise."""
    return 1.0 if diag.well_formed else 0.0


def extract_answer_span(text: str) -> Optional[str]:
    """Last complete <answer> span, trimmed, even in malformed text.

    Accuracy is still scored on this when the response as a whole is
    malformed; None when no complete span exists.
    """
    matches = _LAST_ANSWER_RE.findall(text)
    if not matches:
        return None
    return matches[-1].strip()
