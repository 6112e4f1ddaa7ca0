"""Claim verification, sketch scoring, and the answering pipeline.

run_pipeline answers one question in stages: compute the closure; return
immediately when the closure already decides the question; otherwise
sample up to max_sketches budgeted sketches, verify every anchored claim
against the closure, and stop early on the first sketch whose claims all
verify. If no sketch fully certifies, the best one wins under a
lexicographic score and the closure gets a final veto over the answer.

The score orders sketches by full certification, then number of verified
claims, then fewer generated tokens, then consistency (no contradicted
claim, and agreement with the closure when the closure has an opinion).
Ties keep the earliest sketch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

from .closure import Closure, decide_from_closure, forward_chain
from .generation import Generator, GeneratorError, build_sketch_prompt, request_sketch, select_budget
from .sketch import ParsedSketch, RawSketch, anchor_claims, parse_sketch
from .theory import Label, Literal, Question, Theory


class VerdictStatus(str, Enum):
    VERIFIED = "Verified"
    CONTRADICTED = "Contradicted"
    UNSUPPORTED = "Unsupported"


class Certification(str, Enum):
    CERTIFIED = "Certified"
    PARTIAL = "Partial"
    UNCERTIFIED = "Uncertified"


class AnswerSource(str, Enum):
    CLOSURE_SHORT_CIRCUIT = "ClosureShortCircuit"
    CERTIFIED_SKETCH = "CertifiedSketch"
    BEST_SKETCH = "BestSketch"
    CLOSURE_CORRECTION = "ClosureCorrection"


@dataclass(frozen=True)
class ClaimVerdict:
    claim: Literal
    status: VerdictStatus


@dataclass(frozen=True)
class ScoreTuple:
    """Lexicographic sketch score; larger wins, compared field by field."""

    cert: int
    verified_count: int
    neg_tokens: int
    consistency: int

    def __post_init__(self) -> None:
        if self.cert not in (0, 1):
            raise ValueError("cert must be 0 or 1")
        if self.consistency not in (0, 1):
            raise ValueError("consistency must be 0 or 1")
        if self.verified_count < 0:
            raise ValueError("verified_count must be non-negative")
        if self.neg_tokens > 0:
            raise ValueError("neg_tokens must be non-positive")
        if self.cert == 1 and self.verified_count == 0:
            raise ValueError("a certified sketch must have at least one verified claim")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.cert, self.verified_count, self.neg_tokens, self.consistency)


def compare_scores(a: ScoreTuple, b: ScoreTuple) -> int:
    """-1, 0, or 1 as a scores below, equal to, or above b."""
    left, right = a.as_tuple(), b.as_tuple()
    return (left > right) - (left < right)


@dataclass(frozen=True)
class ScoredSketch:
    """One generated sketch with its verdicts and score.

    index is the zero-based generation order inside a pipeline run; it
    feeds the stability tie-break and the audit trail.
    """

    index: int
    raw: RawSketch
    parsed: ParsedSketch
    verdicts: tuple[ClaimVerdict, ...]
    score: ScoreTuple

    def __post_init__(self) -> None:
        if len(self.verdicts) != len(self.parsed.claims):
            raise ValueError("verdicts must align one-to-one with claims")
        if any(v.claim != c for v, c in zip(self.verdicts, self.parsed.claims)):
            raise ValueError("verdicts must align one-to-one with claims")


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for run_pipeline.

    Exactly one budget policy applies: setting fixed_budget switches the
    adaptive two-tier policy off, and leaving it unset switches it on.
    closure_short_circuit exists for diagnostics; with it off, closure-
    decided questions still run the sampling loop and get their answer
    restored by the final closure correction. certify_unknown_from_closure
    additionally certifies Unknown when neither polarity is derivable,
    trusting the closure as complete for this fragment; it never applies
    when both polarities are derivable, since a contradictory theory must
    not certify anything.
    """

    max_sketches: int = 4
    budget_anchored: int = 120
    budget_unanchored: int = 160
    temperature: float = 0.3
    adaptive_budget: bool = True
    fixed_budget: int | None = None
    certify_unknown_from_closure: bool = False
    closure_short_circuit: bool = True

    def __post_init__(self) -> None:
        if self.max_sketches < 1:
            raise ValueError("max_sketches must be at least 1")
        for name in ("budget_anchored", "budget_unanchored"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.fixed_budget is not None and self.fixed_budget < 1:
            raise ValueError("fixed_budget must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        # One budget policy governs: the presence of fixed_budget decides.
        object.__setattr__(self, "adaptive_budget", self.fixed_budget is None)


@dataclass(frozen=True)
class PipelineResult:
    answer: Label
    verified_claims: tuple[Literal, ...]
    certification: Certification
    answer_source: AnswerSource
    generator_calls: int
    total_generated_tokens: int
    latency_ms: float
    sketches: tuple[ScoredSketch, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if self.certification is Certification.CERTIFIED and self.answer_source not in (
            AnswerSource.CLOSURE_SHORT_CIRCUIT,
            AnswerSource.CERTIFIED_SKETCH,
        ):
            raise ValueError("a certified answer must come from the closure or a certified sketch")
        if self.generator_calls < 0 or self.total_generated_tokens < 0:
            raise ValueError("accounting fields must be non-negative")

    def to_json_dict(self) -> dict:
        """JSON-ready view including the per-sketch audit trail."""
        return {
            "answer": self.answer.value,
            "certification": self.certification.value,
            "answer_source": self.answer_source.value,
            "verified_claims": [claim.to_text() for claim in self.verified_claims],
            "generator_calls": self.generator_calls,
            "total_generated_tokens": self.total_generated_tokens,
            "latency_ms": round(self.latency_ms, 3),
            "sketches": [
                {
                    "index": sketch.index,
                    "answer": sketch.parsed.answer.value,
                    "parse_status": sketch.parsed.parse_status.value,
                    "claims": [claim.to_text() for claim in sketch.parsed.claims],
                    "verdicts": [
                        {"claim": verdict.claim.to_text(), "status": verdict.status.value}
                        for verdict in sketch.verdicts
                    ],
                    "dropped_claims": sketch.parsed.dropped_claims,
                    "tokens": sketch.raw.token_count,
                    "score": {
                        "cert": sketch.score.cert,
                        "verified_count": sketch.score.verified_count,
                        "neg_tokens": sketch.score.neg_tokens,
                        "consistency": sketch.score.consistency,
                    },
                }
                for sketch in self.sketches
            ],
        }


def verify_claim(claim: Literal, closure: Closure) -> ClaimVerdict:
    """Check one claim against the closure.

    A claim whose negation is derivable is Contradicted even when the
    claim itself is also derivable: refutation evidence outweighs support
    inside a contradictory closure.
    """
    if claim.negated() in closure.literals:
        return ClaimVerdict(claim, VerdictStatus.CONTRADICTED)
    if claim in closure.literals:
        return ClaimVerdict(claim, VerdictStatus.VERIFIED)
    return ClaimVerdict(claim, VerdictStatus.UNSUPPORTED)


def score_sketch(parsed: ParsedSketch, raw: RawSketch, closure: Closure,
                 question: Question, *, index: int = 0) -> ScoredSketch:
    """Verify a sketch's claims and attach its selection score."""
    verdicts = tuple(verify_claim(claim, closure) for claim in parsed.claims)
    verified = sum(1 for verdict in verdicts if verdict.status is VerdictStatus.VERIFIED)
    cert = int(bool(verdicts) and verified == len(verdicts))
    contradicted = any(v.status is VerdictStatus.CONTRADICTED for v in verdicts)
    decision = decide_from_closure(closure, question)
    agrees = (not decision.decided) or parsed.answer is decision.label
    consistency = int(not contradicted and agrees)
    score = ScoreTuple(
        cert=cert,
        verified_count=verified,
        neg_tokens=-raw.token_count,
        consistency=consistency,
    )
    return ScoredSketch(index=index, raw=raw, parsed=parsed, verdicts=verdicts, score=score)


def _closure_result(label: Label, started: float) -> PipelineResult:
    return PipelineResult(
        answer=label,
        verified_claims=(),
        certification=Certification.CERTIFIED,
        answer_source=AnswerSource.CLOSURE_SHORT_CIRCUIT,
        generator_calls=0,
        total_generated_tokens=0,
        latency_ms=(time.perf_counter() - started) * 1000.0,
    )


def run_pipeline(theory: Theory, question: Question, config: PipelineConfig,
                 generator: Generator) -> PipelineResult:
    """Answer one question with closure-gated sketch sampling.

    On GeneratorError the exception is re-raised with calls_made and
    tokens_generated stamped, so callers can account for partial work.
    """
    started = time.perf_counter()
    closure = forward_chain(theory)
    decision = decide_from_closure(closure, question)

    if config.closure_short_circuit:
        if decision.decided:
            return _closure_result(decision.label, started)
        if config.certify_unknown_from_closure:
            target = question.target
            underivable = (
                target not in closure.literals and target.negated() not in closure.literals
            )
            if underivable:
                return _closure_result(Label.UNKNOWN, started)

    budget = select_budget(closure, question, config)
    prompt = build_sketch_prompt(theory, question)
    scored: list[ScoredSketch] = []
    total_tokens = 0

    for call_index in range(config.max_sketches):
        try:
            raw = request_sketch(generator, prompt, budget, config.temperature)
        except GeneratorError as exc:
            exc.calls_made = call_index + 1
            exc.tokens_generated = total_tokens
            raise
        total_tokens += raw.token_count
        parsed = parse_sketch(raw, theory)
        anchored = anchor_claims(parsed.claims, question)
        if len(anchored) != len(parsed.claims):
            removed = len(parsed.claims) - len(anchored)
            parsed = replace(parsed, claims=anchored,
                             dropped_claims=parsed.dropped_claims + removed)
        sketch = score_sketch(parsed, raw, closure, question, index=call_index)
        scored.append(sketch)
        if sketch.score.cert == 1:
            return PipelineResult(
                answer=parsed.answer,
                verified_claims=parsed.claims,
                certification=Certification.CERTIFIED,
                answer_source=AnswerSource.CERTIFIED_SKETCH,
                generator_calls=call_index + 1,
                total_generated_tokens=total_tokens,
                latency_ms=(time.perf_counter() - started) * 1000.0,
                sketches=tuple(scored),
            )

    # max() keeps the earliest of tied sketches, matching the tie rule.
    best = max(scored, key=lambda sketch: sketch.score.as_tuple())
    recheck = decide_from_closure(closure, question)
    if recheck.decided:
        answer = recheck.label
        source = AnswerSource.CLOSURE_CORRECTION
    else:
        answer = best.parsed.answer
        source = AnswerSource.BEST_SKETCH
    verified_claims = tuple(
        verdict.claim for verdict in best.verdicts if verdict.status is VerdictStatus.VERIFIED
    )
    certification = Certification.PARTIAL if verified_claims else Certification.UNCERTIFIED
    return PipelineResult(
        answer=answer,
        verified_claims=verified_claims,
        certification=certification,
        answer_source=source,
        generator_calls=len(scored),
        total_generated_tokens=total_tokens,
        latency_ms=(time.perf_counter() - started) * 1000.0,
        sketches=tuple(scored),
    )
