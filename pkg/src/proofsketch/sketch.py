"""Decoding generator output into verifiable sketches.

A sketch is one JSON object, {"answer": <label>, "claims": [<sentence>,
...]}, where every claim is a short unary sentence such as "anne is kind"
or "bob is not green". Generators do not always comply, so parsing runs
a bounded repair pass before giving up:

    1. keep the first balanced {...} span, discarding code fences and
       surrounding prose
    2. remove trailing commas before } or ]
    3. normalize smart quotes to plain quotes
    4. case-fold the answer into {True, False, Unknown}, mapping the
       synonyms yes/no/cannot be determined/unproven/uncertain

Output that survives direct parsing with exact labels is Clean; output
that needs any repair step is Repaired. Everything else is Failed: the
claims are emptied and the answer falls back to the last occurrence of
a label word anywhere in the raw text (Unknown when none appears).
A sketch whose claims all fail to canonicalize is likewise Failed, since
an unverifiable sketch has no standing.

parse_sketch never raises, whatever bytes the generator produced.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any

from .theory import EmptySymbolError, Label, Literal, Polarity, Question, Theory, canonicalize_symbol

_LABEL_WORD_RE = re.compile(r"\b(true|false|unknown)\b", re.IGNORECASE)
_TRAILING_COMMA_RE = re.compile(r",(\s*[}\]])")
_CONTRACTION_RE = re.compile(r"\bisn'?t\b", re.IGNORECASE)
_CLAIM_RE = re.compile(r"^(?P<subj>.+?)\s+is\s+(?:(?P<neg>not)\s+)?(?P<attr>.+)$", re.IGNORECASE)

_SMART_QUOTES = str.maketrans({"“": '"', "”": '"', "„": '"',
                               "‘": "'", "’": "'", "‚": "'"})

_ANSWER_SYNONYMS = {
    "true": Label.TRUE,
    "yes": Label.TRUE,
    "false": Label.FALSE,
    "no": Label.FALSE,
    "unknown": Label.UNKNOWN,
    "cannot be determined": Label.UNKNOWN,
    "unproven": Label.UNKNOWN,
    "uncertain": Label.UNKNOWN,
}


class ParseStatus(str, Enum):
    CLEAN = "Clean"
    REPAIRED = "Repaired"
    FAILED = "Failed"


@dataclass(frozen=True)
class RawSketch:
    """Generator output as handed to the pipeline, budget already applied."""

    text: str
    token_count: int
    generator_latency_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.token_count < 0:
            raise ValueError("token_count must be non-negative")


@dataclass(frozen=True)
class ParsedSketch:
    """Decoded sketch: an answer plus canonical, deduplicated claims."""

    answer: Label
    claims: tuple[Literal, ...]
    parse_status: ParseStatus
    dropped_claims: int = 0

    def __post_init__(self) -> None:
        if self.parse_status is ParseStatus.FAILED and self.claims:
            raise ValueError("a Failed sketch cannot carry claims")
        if len(set(self.claims)) != len(self.claims):
            raise ValueError("claims must be deduplicated")


def _balanced_object_span(text: str) -> str | None:
    """First {...} span with balanced braces, tracking JSON string context."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for position in range(start, len(text)):
            char = text[position]
            if in_string:
                if escaped:
                    escaped = False
                elif char == "\\":
                    escaped = True
                elif char == '"':
                    in_string = False
                continue
            if char == '"':
                in_string = True
            elif char == "{":
                depth += 1
            elif char == "}":
                depth -= 1
                if depth == 0:
                    return text[start : position + 1]
        start = text.find("{", start + 1)
    return None


def _fold_answer(raw: Any) -> Label | None:
    if not isinstance(raw, str):
        return None
    return _ANSWER_SYNONYMS.get(raw.strip().lower())


def _claim_strings(raw: Any) -> list[str] | None:
    if not isinstance(raw, list) or not all(isinstance(item, str) for item in raw):
        return None
    return list(raw)


def _strict_decode(text: str) -> tuple[Label, list[str]] | None:
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, RecursionError):
        return None
    if not isinstance(obj, dict):
        return None
    answer = obj.get("answer")
    if answer not in (Label.TRUE.value, Label.FALSE.value, Label.UNKNOWN.value):
        return None
    claims = _claim_strings(obj.get("claims"))
    if claims is None:
        return None
    return Label(answer), claims


def _repaired_decode(text: str) -> tuple[Label, list[str]] | None:
    span = _balanced_object_span(text)
    if span is None:
        return None
    span = _TRAILING_COMMA_RE.sub(r"\1", span)
    span = span.translate(_SMART_QUOTES)
    try:
        obj = json.loads(span)
    except (json.JSONDecodeError, RecursionError):
        return None
    if not isinstance(obj, dict):
        return None
    answer = _fold_answer(obj.get("answer"))
    if answer is None:
        return None
    claims = _claim_strings(obj.get("claims"))
    if claims is None:
        return None
    return answer, claims


def _scan_answer(text: str) -> Label:
    matches = _LABEL_WORD_RE.findall(text)
    if not matches:
        return Label.UNKNOWN
    folded = _fold_answer(matches[-1])
    return folded if folded is not None else Label.UNKNOWN


def canonicalize_claim(claim_text: str, theory: Theory) -> Literal | None:
    """Map one claim sentence onto the theory's vocabulary, or None.

    Accepts "<entity> is [not] <attribute>" with "isn't" expanded to
    "is not". Both symbols must already be known to the theory; a claim
    about unknown vocabulary is unverifiable and therefore unmappable.
    """
    expanded = _CONTRACTION_RE.sub("is not", claim_text.strip().rstrip("."))
    match = _CLAIM_RE.match(expanded)
    if not match:
        return None
    try:
        entity = canonicalize_symbol(match["subj"])
        attribute = canonicalize_symbol(match["attr"])
    except EmptySymbolError:
        return None
    if entity not in theory.entities() or attribute not in theory.attributes():
        return None
    polarity = Polarity.NEGATIVE if match["neg"] else Polarity.POSITIVE
    return Literal(entity, attribute, polarity)


def parse_sketch(raw: RawSketch, theory: Theory) -> ParsedSketch:
    """Decode raw generator text into a ParsedSketch. Total: never raises."""
    decoded = _strict_decode(raw.text)
    status = ParseStatus.CLEAN
    if decoded is None:
        decoded = _repaired_decode(raw.text)
        status = ParseStatus.REPAIRED
    if decoded is None:
        return ParsedSketch(_scan_answer(raw.text), (), ParseStatus.FAILED)

    answer, claim_texts = decoded
    claims: list[Literal] = []
    dropped = 0
    for text in claim_texts:
        literal = canonicalize_claim(text, theory)
        if literal is None:
            dropped += 1
        elif literal not in claims:
            claims.append(literal)
    if not claims:
        return ParsedSketch(_scan_answer(raw.text), (), ParseStatus.FAILED, dropped_claims=dropped)
    return ParsedSketch(answer, tuple(claims), status, dropped_claims=dropped)


def anchor_claims(claims: tuple[Literal, ...], question: Question) -> tuple[Literal, ...]:
    """Keep only claims about the queried entity, in order, without repeats."""
    anchored: list[Literal] = []
    for claim in claims:
        if claim.entity == question.target.entity and claim not in anchored:
            anchored.append(claim)
    return tuple(anchored)
