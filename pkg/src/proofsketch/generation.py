"""Generator backends, prompt templates, and budget enforcement.

Everything the pipeline asks a text generator for goes through one
request/response contract. Three backends implement it:

    ScriptedGenerator  replays a fixed list of responses; golden tests
    OracleGenerator    derives sketches from the symbolic closure, with
                       seeded noise knobs for controlled degradation
    HttpGenerator      OpenAI-style chat-completions endpoint over HTTP

Token accounting for local backends is whitespace tokenization; the HTTP
backend trusts the endpoint's reported completion tokens when present.
Budgets are enforced on the gateway side: request_sketch truncates
over-length text at a token boundary and recounts, so the pipeline never
sees a sketch above the requested maximum.

Prompt templates are frozen module constants. Bump PROMPT_VERSION when
changing any of them so run configuration stamps stay comparable.
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Protocol, Sequence

import requests

from .closure import Closure, decide_from_closure, entity_has_closure_facts, forward_chain
from .sketch import RawSketch
from .theory import Label, Literal, Question, Theory

if TYPE_CHECKING:
    from .selector import PipelineConfig

logger = logging.getLogger(__name__)

PROMPT_VERSION = "1"

_TOKEN_RE = re.compile(r"\S+")

SKETCH_PROMPT_TEMPLATE = """You are a careful logician working over a fixed set of statements.

STATEMENTS:
{theory}

QUESTION:
{question}

Reply with exactly one JSON object and nothing else, in this schema:
{{"answer": "True|False|Unknown", "claims": ["<entity> is <attribute>", ...]}}

Requirements:
- "answer" must be exactly one of True, False, Unknown.
- Each claim is one short sentence, "<entity> is <attribute>" or "<entity> is not <attribute>", using only entities and attributes that appear in the STATEMENTS.
- Give at most 3 claims, each about the entity named in the QUESTION.
"""

ZERO_SHOT_PROMPT_TEMPLATE = """Read the statements and answer the question.

STATEMENTS:
{theory}

QUESTION:
{question}

Respond with exactly one of True, False, Unknown and nothing else.
"""

SHORT_COT_PROMPT_TEMPLATE = """Read the statements and answer the question.

STATEMENTS:
{theory}

QUESTION:
{question}

Write at most 3 short reasoning lines, then finish with a final line of the form:
Answer: True|False|Unknown
"""

LONG_COT_PROMPT_TEMPLATE = """Read the statements and answer the question.

STATEMENTS:
{theory}

QUESTION:
{question}

Work through the problem in up to 10 numbered steps, citing the statements you use, then finish with a final line of the form:
Answer: True|False|Unknown
"""


class BaselineMode(str, Enum):
    ZERO_SHOT = "ZeroShot"
    SHORT_COT = "ShortCoT"
    LONG_COT = "LongCoT"


# Completion budgets for the baseline modes: answer-only, a few lines,
# room for a full derivation.
BASELINE_BUDGETS: dict[BaselineMode, int] = {
    BaselineMode.ZERO_SHOT: 16,
    BaselineMode.SHORT_COT: 128,
    BaselineMode.LONG_COT: 384,
}

_BASELINE_TEMPLATES = {
    BaselineMode.ZERO_SHOT: ZERO_SHOT_PROMPT_TEMPLATE,
    BaselineMode.SHORT_COT: SHORT_COT_PROMPT_TEMPLATE,
    BaselineMode.LONG_COT: LONG_COT_PROMPT_TEMPLATE,
}


class GeneratorError(Exception):
    """A backend failed to produce a completion.

    When raised out of the answering pipeline, calls_made and
    tokens_generated carry the partial accounting up to the failure.
    """

    def __init__(self, message: str, *, status_code: int | None = None) -> None:
        super().__init__(message)
        self.status_code = status_code
        self.calls_made: int | None = None
        self.tokens_generated: int | None = None


class ScriptExhaustedError(GeneratorError):
    """A strict scripted generator ran past the end of its script."""


class GenerationTimeout(GeneratorError, TimeoutError):
    """The endpoint did not answer within the configured deadline."""


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    max_tokens: int
    temperature: float = 0.0
    stop_hint: str | None = None

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    completion_tokens: int
    latency_ms: float = 0.0


class Generator(Protocol):
    """Minimal backend contract: a name and one synchronous call.

    Implementations that are not safe for concurrent generate() calls set
    thread_safe to False and rely on thread_safe_generator for locking.
    """

    name: str
    thread_safe: bool

    def generate(self, request: GenerationRequest) -> GenerationResponse: ...


def count_tokens(text: str) -> int:
    """Whitespace token count used by the local backends."""
    return len(text.split())


def truncate_to_tokens(text: str, max_tokens: int) -> str:
    """Cut text after its max_tokens-th whitespace token, keeping spacing."""
    for index, match in enumerate(_TOKEN_RE.finditer(text)):
        if index == max_tokens - 1:
            return text[: match.end()]
    return text


def build_sketch_prompt(theory: Theory, question: Question) -> str:
    theory_text = theory.source_text or theory.to_text()
    return SKETCH_PROMPT_TEMPLATE.format(theory=theory_text.strip(), question=question.raw_text.strip())


def build_baseline_prompt(theory: Theory, question: Question, mode: BaselineMode) -> str:
    theory_text = theory.source_text or theory.to_text()
    template = _BASELINE_TEMPLATES[mode]
    return template.format(theory=theory_text.strip(), question=question.raw_text.strip())


def select_budget(closure: Closure, question: Question, config: "PipelineConfig") -> int:
    """Completion budget for one sketch request.

    A fixed budget, when configured, wins outright. Otherwise questions
    whose entity already has closure facts get the tighter budget: the
    verifier has material to anchor on, so the sketch can be short.
    """
    if config.fixed_budget is not None:
        return config.fixed_budget
    if entity_has_closure_facts(closure, question.target.entity):
        return config.budget_anchored
    return config.budget_unanchored


def request_sketch(generator: Generator, prompt: str, max_tokens: int,
                   temperature: float) -> RawSketch:
    """One budgeted generator call, clamped so token_count <= max_tokens."""
    response = generator.generate(
        GenerationRequest(prompt=prompt, max_tokens=max_tokens, temperature=temperature)
    )
    text = response.text
    tokens = response.completion_tokens
    if tokens > max_tokens:
        text = truncate_to_tokens(text, max_tokens)
        tokens = min(max_tokens, count_tokens(text))
    return RawSketch(text=text, token_count=tokens, generator_latency_ms=response.latency_ms)


class ScriptedGenerator:
    """Replays a fixed response list, in order.

    strict mode raises ScriptExhaustedError past the end; otherwise the
    script cycles. Stateful, so not thread safe.
    """

    thread_safe = False

    def __init__(self, script: Sequence[str], *, strict: bool = True,
                 name: str = "scripted") -> None:
        if not script:
            raise ValueError("script must contain at least one response")
        self._script = [str(item) for item in script]
        self._strict = strict
        self._cursor = 0
        self.name = name

    @property
    def calls(self) -> int:
        return self._cursor

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        position = self._cursor
        if position >= len(self._script):
            if self._strict:
                raise ScriptExhaustedError(
                    f"script exhausted after {len(self._script)} responses"
                )
            position %= len(self._script)
        self._cursor += 1
        text = self._script[position]
        return GenerationResponse(text=text, completion_tokens=count_tokens(text))


@dataclass(frozen=True)
class OracleNoiseConfig:
    """Seeded corruption knobs for the closure-backed generator."""

    flip_answer_prob: float = 0.0
    corrupt_claim_prob: float = 0.0
    malform_prob: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("flip_answer_prob", "corrupt_claim_prob", "malform_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


_MALFORMED_TEXT = "I am sorry, I could not produce a structured reply for this request."


class OracleGenerator:
    """Emits sketches read off the closure, degraded by seeded noise.

    At noise zero the sketch answers with the closure's verdict and lists
    up to 3 verifiable closure literals about the queried entity,
    shallowest derivations first. Literals whose negation is also
    derivable are skipped: the verifier rejects those, and this generator
    exists to produce certifiable sketches. The noise draws happen in a
    fixed order per call (malform, answer flip, then one corruption draw
    per claim), so equal seeds give byte-identical output streams.
    Stateful RNG: not thread safe.
    """

    thread_safe = False

    def __init__(self, theory: Theory, question: Question,
                 noise: OracleNoiseConfig | None = None, *, name: str = "oracle") -> None:
        self._noise = noise or OracleNoiseConfig()
        self._rng = random.Random(self._noise.seed)
        self.name = name
        closure = forward_chain(theory)
        self._label = decide_from_closure(closure, question).label
        anchored = closure.entity_index.get(question.target.entity, frozenset())
        ordered = sorted(
            (l for l in anchored if l.negated() not in closure.literals),
            key=lambda l: (closure.depth.get(l, 0), l.attribute, l.polarity.value),
        )
        self._claims: tuple[Literal, ...] = tuple(ordered[:3])

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        rng = self._rng
        noise = self._noise
        if rng.random() < noise.malform_prob:
            return GenerationResponse(
                text=_MALFORMED_TEXT, completion_tokens=count_tokens(_MALFORMED_TEXT)
            )
        answer = self._label.value
        if rng.random() < noise.flip_answer_prob:
            others = [label.value for label in Label if label is not self._label]
            answer = rng.choice(others)
        claims = []
        for literal in self._claims:
            emitted = literal.negated() if rng.random() < noise.corrupt_claim_prob else literal
            claims.append(emitted.to_text())
        text = json.dumps({"answer": answer, "claims": claims})
        return GenerationResponse(text=text, completion_tokens=count_tokens(text))


class HttpGenerator:
    """Chat-completions client for an OpenAI-compatible endpoint.

    Transport failures and 5xx responses are retried with exponential
    backoff plus jitter; 4xx responses and deadline overruns fail
    immediately. The API key is read from the named environment variable
    at call time and never logged. max_in_flight bounds concurrency.
    """

    thread_safe = True

    def __init__(self, endpoint_url: str, model_name: str, *,
                 api_key_env: str = "PROOFSKETCH_API_KEY",
                 timeout_ms: float = 30000.0,
                 max_retries: int = 2,
                 backoff_base_s: float = 0.25,
                 backoff_jitter_s: float = 0.1,
                 max_in_flight: int = 4,
                 name: str | None = None) -> None:
        if max_retries < 0:
            raise ValueError("max_retries must be non-negative")
        self._endpoint_url = endpoint_url
        self._model_name = model_name
        self._api_key_env = api_key_env
        self._timeout_s = timeout_ms / 1000.0
        self._max_retries = max_retries
        self._backoff_base_s = backoff_base_s
        self._backoff_jitter_s = backoff_jitter_s
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._stats_lock = threading.Lock()
        self.retries_total = 0
        self.name = name or f"http:{model_name}"

    def _note_retry(self) -> None:
        with self._stats_lock:
            self.retries_total += 1

    def _payload(self, request: GenerationRequest) -> dict:
        return {
            "model": self._model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self._api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def _extract(self, data: dict, latency_ms: float) -> GenerationResponse:
        try:
            choice = data["choices"][0]
        except (KeyError, IndexError, TypeError) as exc:
            raise GeneratorError("completion payload has no choices") from exc
        message = choice.get("message") if isinstance(choice, dict) else None
        if isinstance(message, dict) and isinstance(message.get("content"), str):
            text = message["content"]
        elif isinstance(choice, dict) and isinstance(choice.get("text"), str):
            text = choice["text"]
        else:
            raise GeneratorError("completion payload has no text content")
        usage = data.get("usage") or {}
        tokens = usage.get("completion_tokens")
        if not isinstance(tokens, int) or tokens < 0:
            tokens = count_tokens(text)
        return GenerationResponse(text=text, completion_tokens=tokens, latency_ms=latency_ms)

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        last_error: GeneratorError | None = None
        started = time.perf_counter()
        for attempt in range(self._max_retries + 1):
            if attempt:
                self._note_retry()
                delay = self._backoff_base_s * (2 ** (attempt - 1))
                delay += random.uniform(0.0, self._backoff_jitter_s)
                time.sleep(delay)
            with self._gate:
                try:
                    response = requests.post(
                        self._endpoint_url,
                        json=self._payload(request),
                        headers=self._headers(),
                        timeout=self._timeout_s,
                    )
                except requests.Timeout as exc:
                    raise GenerationTimeout(
                        f"no response within {self._timeout_s * 1000:.0f} ms"
                    ) from exc
                except requests.RequestException as exc:
                    last_error = GeneratorError(f"transport failure: {exc}")
                    logger.debug("transport failure on attempt %d: %s", attempt + 1, exc)
                    continue
            if response.status_code >= 500:
                last_error = GeneratorError(
                    f"server error {response.status_code}", status_code=response.status_code
                )
                logger.debug("server error %d on attempt %d", response.status_code, attempt + 1)
                continue
            if response.status_code >= 400:
                raise GeneratorError(
                    f"request rejected with status {response.status_code}",
                    status_code=response.status_code,
                )
            try:
                data = response.json()
            except ValueError as exc:
                raise GeneratorError("completion payload is not JSON") from exc
            latency_ms = (time.perf_counter() - started) * 1000.0
            return self._extract(data, latency_ms)
        assert last_error is not None
        raise last_error


class _ExclusiveGenerator:
    """Serializes access to a generator that is not thread safe."""

    thread_safe = True

    def __init__(self, inner: Generator) -> None:
        self._inner = inner
        self._lock = threading.Lock()
        self.name = inner.name

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        with self._lock:
            return self._inner.generate(request)


def thread_safe_generator(generator: Generator) -> Generator:
    """Wrap serial generators in a lock; pass thread-safe ones through."""
    if getattr(generator, "thread_safe", False):
        return generator
    return _ExclusiveGenerator(generator)
