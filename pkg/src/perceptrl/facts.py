"""Canonical fact normalization, key matching, and claimed-fact extraction.

Everything downstream that compares text against text goes through this
module, so the rules are deliberately small and fixed:

* normalize_fact lowercases, applies unicode compatibility normalization,
  collapses whitespace, strips surrounding punctuation, and rewrites numbers
  as their shortest exact decimal ("5.0" -> "5", "1/2" -> "0.5").
* match_key asks whether a key phrase occurs as a contiguous token
  subsequence of a segment, comparing numeric tokens by value (relative
  tolerance 1e-9) so "0.5" still matches a segment that wrote "1/2".
* extract_facts / extract_claimed_facts pull numeric claims with their
  nearest preceding subject, simple "X is Y" attributes, and configured
  lexicon phrases. The extractor prefers precision over recall: a missed
  fact costs a little reward, a hallucinated match corrupts it.

Facts are value objects; every extracted fact is matchable by match_key
against the text it came from.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Optional, Sequence, Union

__all__ = [
    "Fact",
    "FactSet",
    "Token",
    "extract_claimed_facts",
    "extract_facts",
    "load_lexicon",
    "match_key",
    "normalize_fact",
    "tokenize",
]

# Tokens: numbers (including a/b fractions), words (hyphen/apostrophe
# compounds stay whole), then any remaining non-space symbol one at a time.
_TOKEN_RE = re.compile(
    r"""
    (?P<number>[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:/\d+)?)
  | (?P<word>[^\W\d_]+(?:['\-][^\W\d_]+)*)
  | (?P<sym>\S)
    """,
    re.VERBOSE,
)

# Words that never serve as a fact subject.
_STOPWORDS = frozenset(
    """
    the a an is are was were be been being of to in on at by with and or so
    then thus that this these those it its as for from we he she they i you
    equals equal which there has have had will would can could should about
    into over per if when where what who how not no yes do does did
    """.split()
)

# Copula/relation tokens linking a subject to its value.
_RELATION_TOKENS = frozenset({"=", ":", "is", "are", "was", "were", "equals", "equal"})

# Tokens that end a sentence for subject attachment purposes.
_SENTENCE_BREAKS = frozenset({".", "!", "?", ";"})

# Unit tokens compared as normalized strings after a number; no conversion.
_UNIT_TOKENS = frozenset(
    """
    mm cm m km in inch inches ft feet yd mi mg g kg lb lbs oz s sec secs ms
    min mins h hr hrs deg degree degrees rad radians px pt unit units
    mm2 cm2 m2 km2 mm3 cm3 m3 % °
    """.split()
)

_MAX_FRACTION_DENOMINATOR = 1000


@dataclass(frozen=True)
class Token:
    """One canonical token: text plus exact numeric value when numeric."""

    text: str
    value: Optional[Fraction] = None

    @property
    def is_number(self) -> bool:
        return self.value is not None

    @property
    def is_word(self) -> bool:
        return self.value is None and bool(self.text) and self.text[0].isalpha()


TokenSeq = tuple[Token, ...]


def _fraction_from_literal(text: str) -> Optional[Fraction]:
    """Exact value of a numeric literal, or None when it is not one."""
    if "/" in text:
        num, _, den = text.partition("/")
        try:
            d = int(den)
            if d == 0:
                return None
            return Fraction(num) / d
        except (ValueError, ZeroDivisionError):
            return None
    try:
        return Fraction(text.rstrip(".") or "0") if text != "." else None
    except ValueError:
        return None


def _shortest_decimal(value: Fraction) -> Optional[str]:
    """Shortest exact decimal for value, or None when it has none."""
    den = value.denominator
    twos = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    fives = 0
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return None
    digits = max(twos, fives)
    if digits == 0:
        return str(value.numerator)
    scaled = value.numerator * 10**digits // value.denominator
    sign = "-" if scaled < 0 else ""
    body = str(abs(scaled)).rjust(digits + 1, "0")
    head, tail = body[:-digits], body[-digits:]
    return f"{sign}{head}.{tail}"


def _canonical_number(text: str) -> tuple[str, Optional[Fraction]]:
    """Canonical text and exact value for a numeric literal token.

    Plain decimals always shorten; fractions convert to decimal only when
    exact and the reduced denominator is small enough, otherwise they are
    respelled in lowest terms so equal values share one canonical text.
    """
    value = _fraction_from_literal(text)
    if value is None:
        return text, None
    decimal = _shortest_decimal(value)
    if "/" not in text:
        return decimal, value  # decimal literals always have one
    if decimal is not None and value.denominator <= _MAX_FRACTION_DENOMINATOR:
        return decimal, value
    return f"{value.numerator}/{value.denominator}", value


@lru_cache(maxsize=8192)
def tokenize(text: str) -> TokenSeq:
    """Canonical token sequence: NFKC, lowercase, numbers canonicalized."""
    folded = unicodedata.normalize("NFKC", text).lower()
    folded = folded.replace("⁄", "/")  # NFKC spells ½ as 1⁄2
    out: list[Token] = []
    for match in _TOKEN_RE.finditer(folded):
        if match.lastgroup == "number":
            canon, value = _canonical_number(match.group())
            out.append(Token(canon, value))
        else:
            out.append(Token(match.group()))
    return tuple(out)


def _is_surrounding_punct(token: Token) -> bool:
    return len(token.text) == 1 and unicodedata.category(token.text).startswith("P")


def normalize_fact(text: str) -> str:
    """Canonical form of a fact string.

    Lowercased, compatibility-normalized, whitespace collapsed to single
    spaces, surrounding punctuation stripped, numbers as shortest exact
    decimal. Idempotent.
    """
    tokens = list(tokenize(text))
    while tokens and _is_surrounding_punct(tokens[0]):
        tokens.pop(0)
    while tokens and _is_surrounding_punct(tokens[-1]):
        tokens.pop()
    return " ".join(t.text for t in tokens)


def _values_close(a: Fraction, b: Fraction, rel_tol: Fraction) -> bool:
    scale = max(Fraction(1), abs(a), abs(b))
    return abs(a - b) <= rel_tol * scale


_MATCH_REL_TOL = Fraction(1, 10**9)


def _tokens_equal(a: Token, b: Token) -> bool:
    if a.value is not None and b.value is not None:
        return _values_close(a.value, b.value, _MATCH_REL_TOL)
    return a.text == b.text


def _as_tokens(segment: Union[str, TokenSeq]) -> TokenSeq:
    if isinstance(segment, str):
        return tokenize(segment)
    return segment


def match_key(key: Union[str, TokenSeq], segment: Union[str, TokenSeq]) -> bool:
    """True when key occurs as a contiguous token run inside segment.

    Both sides are canonicalized first, so the answer is invariant under
    whitespace and casing changes. Numeric tokens compare by value with
    relative tolerance 1e-9; an empty key never matches.
    """
    key_toks = _as_tokens(key)
    seg_toks = _as_tokens(segment)
    k = len(key_toks)
    if k == 0 or k > len(seg_toks):
        return False
    for start in range(len(seg_toks) - k + 1):
        if all(_tokens_equal(key_toks[j], seg_toks[start + j]) for j in range(k)):
            return True
    return False


@dataclass(frozen=True)
class Fact:
    """One canonical fact.

    text is always matchable against the source segment via match_key.
    Numeric facts carry (subject, value, unit) when parseable; attribute
    facts carry (subject, category).
    """

    text: str
    subject: Optional[str] = None
    value: Optional[Fraction] = None
    unit: Optional[str] = None
    category: Optional[str] = None


class FactSet:
    """Immutable set of facts with convenience constructors."""

    __slots__ = ("facts",)

    def __init__(self, facts: Iterable[Fact] = ()):
        object.__setattr__(self, "facts", frozenset(facts))

    @classmethod
    def from_phrases(cls, phrases: Iterable[str]) -> "FactSet":
        """Key set from raw strings; duplicates collapse after normalization."""
        out = []
        for phrase in phrases:
            canon = normalize_fact(phrase)
            if canon:
                out.append(Fact(text=canon))
        return cls(out)

    def union(self, other: "FactSet") -> "FactSet":
        return FactSet(self.facts | other.facts)

    def texts(self) -> frozenset[str]:
        return frozenset(f.text for f in self.facts)

    def __len__(self) -> int:
        return len(self.facts)

    def __iter__(self) -> Iterator[Fact]:
        return iter(self.facts)

    def __contains__(self, fact: Fact) -> bool:
        return fact in self.facts

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FactSet) and self.facts == other.facts

    def __hash__(self) -> int:
        return hash(self.facts)

    def __repr__(self) -> str:
        inner = ", ".join(sorted(f.text for f in self.facts))
        return f"FactSet({{{inner}}})"


def _split_sentences(tokens: TokenSeq) -> Iterator[list[Token]]:
    sentence: list[Token] = []
    for tok in tokens:
        if tok.text in _SENTENCE_BREAKS and tok.value is None:
            if sentence:
                yield sentence
            sentence = []
        else:
            sentence.append(tok)
    if sentence:
        yield sentence


def _nearest_subject(sentence: Sequence[Token], idx: int) -> Optional[str]:
    """Nearest preceding word that can anchor a numeric claim."""
    for j in range(idx - 1, -1, -1):
        tok = sentence[j]
        if tok.is_number:
            continue
        if tok.text in _RELATION_TOKENS or tok.text in _STOPWORDS:
            continue
        if tok.is_word:
            return tok.text
        # Any other symbol breaks the attachment chain.
        return None
    return None


def extract_facts(text: str, lexicon: Iterable[str] = ()) -> FactSet:
    """Facts asserted by a piece of text.

    Numeric literals become facts with their nearest preceding subject and
    trailing unit when present; "X is Y" word pairs become attribute facts;
    lexicon phrases matched via match_key become plain facts.
    """
    tokens = tokenize(text)
    facts: set[Fact] = set()
    for sentence in _split_sentences(tokens):
        for idx, tok in enumerate(sentence):
            if tok.is_number:
                subject = _nearest_subject(sentence, idx)
                if subject is None:
                    # A number with nothing to attach to is not a checkable
                    # claim; it can neither support nor contradict anything.
                    continue
                unit = None
                if idx + 1 < len(sentence) and sentence[idx + 1].text in _UNIT_TOKENS:
                    unit = sentence[idx + 1].text
                facts.add(
                    Fact(
                        text=tok.text,
                        subject=subject,
                        value=tok.value,
                        unit=unit,
                    )
                )
            elif tok.text in _RELATION_TOKENS and 0 < idx < len(sentence) - 1:
                left, right = sentence[idx - 1], sentence[idx + 1]
                if (
                    left.is_word
                    and left.text not in _STOPWORDS
                    and right.is_word
                    and right.text not in _STOPWORDS
                    and right.text not in _UNIT_TOKENS
                ):
                    facts.add(
                        Fact(
                            text=f"{left.text} {tok.text} {right.text}",
                            subject=left.text,
                            category=right.text,
                        )
                    )
    for phrase in lexicon:
        canon = normalize_fact(phrase)
        if canon and match_key(canon, tokens):
            facts.add(Fact(text=canon))
    return FactSet(facts)


def extract_claimed_facts(
    think: str, answer: str, lexicon: Iterable[str] = ()
) -> FactSet:
    """Facts the response commits to: union over think and answer segments."""
    return extract_facts(think, lexicon).union(extract_facts(answer, lexicon))


def load_lexicon(path: str) -> tuple[str, ...]:
    """Keyphrase lexicon file: one phrase per line, UTF-8.

    Blank lines and '#' comment lines are skipped; phrases are canonicalized
    and deduplicated preserving first occurrence.
    """
    phrases: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            canon = normalize_fact(line)
            if canon:
                phrases.append(canon)
    return tuple(dict.fromkeys(phrases))
