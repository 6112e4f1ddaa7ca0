"""Backend, prompt, budget, and HTTP-client tests.

The HTTP tests run against a local stub endpoint speaking just enough of
the chat-completions wire format, with a programmable action plan per
request (respond, fail with a status, stall, or return non-JSON).
"""

from __future__ import annotations

import http.server
import json
import threading
import time

import pytest

from proofsketch import (
    BASELINE_BUDGETS,
    BaselineMode,
    GenerationRequest,
    GenerationTimeout,
    Generator,
    GeneratorError,
    HttpGenerator,
    Label,
    Literal,
    OracleGenerator,
    OracleNoiseConfig,
    ParseStatus,
    PipelineConfig,
    Polarity,
    PROMPT_VERSION,
    RawSketch,
    ScriptExhaustedError,
    ScriptedGenerator,
    build_baseline_prompt,
    build_sketch_prompt,
    count_tokens,
    forward_chain,
    parse_question,
    parse_sketch,
    parse_theory_nl,
    request_sketch,
    select_budget,
    thread_safe_generator,
    truncate_to_tokens,
)

THEORY = parse_theory_nl(
    "Anne is big. Bob is round. If someone is big then they are kind."
)
QUESTION = parse_question("Is Anne kind?")


class TestPrompts:
    def test_sketch_prompt_embeds_inputs(self) -> None:
        prompt = build_sketch_prompt(THEORY, QUESTION)
        assert "Anne is big." in prompt
        assert "Is Anne kind?" in prompt
        assert '"claims"' in prompt
        assert "at most 3 claims" in prompt

    def test_sketch_prompt_renders_theory_without_source(self) -> None:
        from dataclasses import replace

        stripped = replace(THEORY, source_text=None)
        prompt = build_sketch_prompt(stripped, QUESTION)
        assert "Anne is big." in prompt

    def test_answer_only_prompt(self) -> None:
        prompt = build_baseline_prompt(THEORY, QUESTION, BaselineMode.ZERO_SHOT)
        assert "exactly one of True, False, Unknown" in prompt
        assert "reasoning" not in prompt.lower()

    def test_few_line_prompt(self) -> None:
        prompt = build_baseline_prompt(THEORY, QUESTION, BaselineMode.SHORT_COT)
        assert "at most 3" in prompt
        assert "Answer:" in prompt

    def test_long_derivation_prompt(self) -> None:
        prompt = build_baseline_prompt(THEORY, QUESTION, BaselineMode.LONG_COT)
        assert "10" in prompt
        assert "Answer:" in prompt

    def test_baseline_budgets(self) -> None:
        assert BASELINE_BUDGETS[BaselineMode.ZERO_SHOT] == 16
        assert BASELINE_BUDGETS[BaselineMode.SHORT_COT] == 128
        assert BASELINE_BUDGETS[BaselineMode.LONG_COT] == 384

    def test_prompt_version_is_stamped(self) -> None:
        assert isinstance(PROMPT_VERSION, str) and PROMPT_VERSION


class TestTokenAccounting:
    def test_count_tokens(self) -> None:
        assert count_tokens("") == 0
        assert count_tokens("one") == 1
        assert count_tokens("  spaced   out  text ") == 3

    def test_truncate_keeps_prefix(self) -> None:
        text = "a b c d e"
        assert truncate_to_tokens(text, 3) == "a b c"
        assert truncate_to_tokens(text, 99) == text
        assert truncate_to_tokens("", 5) == ""

    def test_truncate_bound_holds(self) -> None:
        for limit in (1, 2, 7, 50):
            text = "tok " * 40
            cut = truncate_to_tokens(text, limit)
            assert count_tokens(cut) <= limit
            assert text.startswith(cut)


class TestRequestSketch:
    def test_under_budget_passes_through(self) -> None:
        generator = ScriptedGenerator(["short reply"])
        raw = request_sketch(generator, "p", max_tokens=50, temperature=0.0)
        assert raw.text == "short reply"
        assert raw.token_count == 2

    def test_over_budget_truncates_and_recounts(self) -> None:
        generator = ScriptedGenerator(["w " * 100])
        raw = request_sketch(generator, "p", max_tokens=10, temperature=0.0)
        assert raw.token_count == 10
        assert count_tokens(raw.text) == 10

    def test_misreported_count_still_clamped(self) -> None:
        class Bragger:
            name = "bragger"
            thread_safe = True

            def generate(self, request: GenerationRequest):
                from proofsketch import GenerationResponse

                # Claims far more tokens than the text holds.
                return GenerationResponse(text="tiny reply", completion_tokens=9999)

        raw = request_sketch(Bragger(), "p", max_tokens=10, temperature=0.0)
        assert raw.token_count == 2
        assert raw.text == "tiny reply"


class TestScriptedGenerator:
    def test_replays_in_order(self) -> None:
        generator = ScriptedGenerator(["one", "two"])
        request = GenerationRequest(prompt="p", max_tokens=10)
        assert generator.generate(request).text == "one"
        assert generator.generate(request).text == "two"
        assert generator.calls == 2

    def test_strict_exhaustion(self) -> None:
        generator = ScriptedGenerator(["only"])
        request = GenerationRequest(prompt="p", max_tokens=10)
        generator.generate(request)
        with pytest.raises(ScriptExhaustedError):
            generator.generate(request)
        assert isinstance(ScriptExhaustedError("x"), GeneratorError)

    def test_cycle_mode(self) -> None:
        generator = ScriptedGenerator(["a", "b"], strict=False)
        request = GenerationRequest(prompt="p", max_tokens=10)
        texts = [generator.generate(request).text for _ in range(5)]
        assert texts == ["a", "b", "a", "b", "a"]
        assert generator.calls == 5

    def test_empty_script_rejected(self) -> None:
        with pytest.raises(ValueError):
            ScriptedGenerator([])


class TestSelectBudget:
    def test_anchored_entity_gets_tight_budget(self) -> None:
        closure = forward_chain(THEORY)
        config = PipelineConfig()
        assert select_budget(closure, parse_question("Is Anne kind?"), config) == 120

    def test_unanchored_entity_gets_loose_budget(self) -> None:
        closure = forward_chain(THEORY)
        config = PipelineConfig()
        assert select_budget(closure, parse_question("Is Zed kind?"), config) == 160

    def test_fixed_budget_wins(self) -> None:
        closure = forward_chain(THEORY)
        config = PipelineConfig(fixed_budget=200)
        assert select_budget(closure, parse_question("Is Anne kind?"), config) == 200
        assert select_budget(closure, parse_question("Is Zed kind?"), config) == 200

    def test_custom_tier_values(self) -> None:
        closure = forward_chain(THEORY)
        config = PipelineConfig(budget_anchored=64, budget_unanchored=96)
        assert select_budget(closure, parse_question("Is Bob big?"), config) == 64
        assert select_budget(closure, parse_question("Is Zed big?"), config) == 96


class TestOracleGenerator:
    def _generate(self, generator: OracleGenerator) -> str:
        return generator.generate(GenerationRequest(prompt="p", max_tokens=200)).text

    def test_noise_zero_matches_closure(self) -> None:
        question = parse_question("Is Anne kind?")
        generator = OracleGenerator(THEORY, question, OracleNoiseConfig(seed=5))
        parsed = parse_sketch(
            RawSketch(text=self._generate(generator), token_count=0), THEORY
        )
        assert parsed.parse_status is ParseStatus.CLEAN
        assert parsed.answer is Label.TRUE
        closure = forward_chain(THEORY)
        assert parsed.claims
        for claim in parsed.claims:
            assert claim.entity == "anne"
            assert claim in closure.literals

    def test_claims_ordered_shallowest_first(self) -> None:
        question = parse_question("Is Anne kind?")
        generator = OracleGenerator(THEORY, question, OracleNoiseConfig(seed=5))
        payload = json.loads(self._generate(generator))
        assert payload["claims"] == ["anne is big", "anne is kind"]

    def test_claims_capped_at_three(self) -> None:
        theory = parse_theory_nl(
            "Anne is big. Anne is quiet. Anne is round. Anne is smart. Anne is young."
        )
        question = parse_question("Is Anne kind?")
        generator = OracleGenerator(theory, question, OracleNoiseConfig(seed=5))
        payload = json.loads(self._generate(generator))
        assert len(payload["claims"]) == 3

    def test_no_closure_facts_means_no_claims(self) -> None:
        question = parse_question("Is Zed kind?")
        generator = OracleGenerator(THEORY, question, OracleNoiseConfig(seed=5))
        payload = json.loads(self._generate(generator))
        assert payload["claims"] == []
        assert payload["answer"] == "Unknown"

    def test_same_seed_same_stream(self) -> None:
        noise = OracleNoiseConfig(flip_answer_prob=0.5, corrupt_claim_prob=0.5,
                                  malform_prob=0.3, seed=77)
        first = OracleGenerator(THEORY, QUESTION, noise)
        second = OracleGenerator(THEORY, QUESTION, noise)
        stream_a = [self._generate(first) for _ in range(20)]
        stream_b = [self._generate(second) for _ in range(20)]
        assert stream_a == stream_b

    def test_flip_always_changes_answer(self) -> None:
        noise = OracleNoiseConfig(flip_answer_prob=1.0, seed=3)
        generator = OracleGenerator(THEORY, QUESTION, noise)
        for _ in range(10):
            payload = json.loads(self._generate(generator))
            assert payload["answer"] != Label.TRUE.value
            assert payload["answer"] in (Label.FALSE.value, Label.UNKNOWN.value)

    def test_malform_always_breaks_parse(self) -> None:
        noise = OracleNoiseConfig(malform_prob=1.0, seed=3)
        generator = OracleGenerator(THEORY, QUESTION, noise)
        text = self._generate(generator)
        parsed = parse_sketch(RawSketch(text=text, token_count=0), THEORY)
        assert parsed.parse_status is ParseStatus.FAILED

    def test_corrupt_negates_claims(self) -> None:
        noise = OracleNoiseConfig(corrupt_claim_prob=1.0, seed=3)
        generator = OracleGenerator(THEORY, QUESTION, noise)
        payload = json.loads(self._generate(generator))
        assert payload["claims"] == ["anne is not big", "anne is not kind"]

    def test_probability_validation(self) -> None:
        with pytest.raises(ValueError):
            OracleNoiseConfig(flip_answer_prob=1.5)
        with pytest.raises(ValueError):
            OracleNoiseConfig(corrupt_claim_prob=-0.1)


# ---------------------------------------------------------------------------
# Stub chat-completions endpoint


class _StubEndpoint:
    """Serves a scripted action per request: ok / status / sleep / garbage."""

    def __init__(self) -> None:
        self.actions: list[tuple] = []
        self.requests: list[dict] = []
        self._lock = threading.Lock()

        stub = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def log_message(self, *args) -> None:
                pass

            def do_POST(self) -> None:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length) or b"{}")
                with stub._lock:
                    stub.requests.append(
                        {"body": body, "auth": self.headers.get("Authorization")}
                    )
                    action = stub.actions.pop(0) if stub.actions else ("ok", {})
                try:
                    self._perform(action)
                except (BrokenPipeError, ConnectionResetError):
                    pass

            def _perform(self, action: tuple) -> None:
                kind = action[0]
                if kind == "sleep":
                    time.sleep(action[1])
                    self._reply(200, json.dumps({"choices": []}).encode())
                elif kind == "status":
                    self._reply(action[1], b"")
                elif kind == "garbage":
                    self._reply(200, b"this is not json")
                else:
                    self._reply(200, json.dumps(action[1]).encode())

            def _reply(self, status: int, data: bytes) -> None:
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                if data:
                    self.wfile.write(data)

        class Server(http.server.ThreadingHTTPServer):
            daemon_threads = True

            def handle_error(self, request, client_address) -> None:
                pass

        self._server = Server(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def plan(self, *actions: tuple) -> None:
        self.actions.extend(actions)

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()


def _ok_payload(text: str, completion_tokens: int | None = None) -> dict:
    payload: dict = {"choices": [{"message": {"role": "assistant", "content": text}}]}
    if completion_tokens is not None:
        payload["usage"] = {"completion_tokens": completion_tokens}
    return payload


@pytest.fixture()
def stub():
    endpoint = _StubEndpoint()
    yield endpoint
    endpoint.close()


def _client(stub_endpoint: _StubEndpoint, **kwargs) -> HttpGenerator:
    kwargs.setdefault("backoff_base_s", 0.01)
    kwargs.setdefault("backoff_jitter_s", 0.0)
    return HttpGenerator(stub_endpoint.url, "test-model", **kwargs)


REQUEST = GenerationRequest(prompt="say hi", max_tokens=32, temperature=0.3)


class TestHttpGenerator:
    def test_success_with_usage(self, stub) -> None:
        stub.plan(("ok", _ok_payload("hello there", completion_tokens=7)))
        response = _client(stub).generate(REQUEST)
        assert response.text == "hello there"
        assert response.completion_tokens == 7
        assert response.latency_ms > 0

    def test_request_payload_shape(self, stub) -> None:
        stub.plan(("ok", _ok_payload("hi")))
        _client(stub).generate(REQUEST)
        body = stub.requests[0]["body"]
        assert body["model"] == "test-model"
        assert body["messages"] == [{"role": "user", "content": "say hi"}]
        assert body["max_tokens"] == 32
        assert body["temperature"] == 0.3

    def test_usage_fallback_counts_whitespace(self, stub) -> None:
        stub.plan(("ok", _ok_payload("four short words here")))
        response = _client(stub).generate(REQUEST)
        assert response.completion_tokens == 4

    def test_server_errors_retried_then_succeed(self, stub) -> None:
        stub.plan(("status", 500), ("status", 503), ("ok", _ok_payload("recovered")))
        client = _client(stub, max_retries=2)
        response = client.generate(REQUEST)
        assert response.text == "recovered"
        assert client.retries_total == 2
        assert len(stub.requests) == 3

    def test_server_errors_exhaust_retries(self, stub) -> None:
        stub.plan(("status", 500), ("status", 500))
        client = _client(stub, max_retries=1)
        with pytest.raises(GeneratorError) as excinfo:
            client.generate(REQUEST)
        assert excinfo.value.status_code == 500
        assert len(stub.requests) == 2

    def test_client_error_fails_immediately(self, stub) -> None:
        stub.plan(("status", 404))
        client = _client(stub, max_retries=3)
        with pytest.raises(GeneratorError) as excinfo:
            client.generate(REQUEST)
        assert excinfo.value.status_code == 404
        assert client.retries_total == 0
        assert len(stub.requests) == 1

    def test_timeout_raises_timeout_type(self, stub) -> None:
        stub.plan(("sleep", 2.0))
        client = _client(stub, timeout_ms=150, max_retries=3)
        started = time.perf_counter()
        with pytest.raises(GenerationTimeout) as excinfo:
            client.generate(REQUEST)
        elapsed = time.perf_counter() - started
        assert isinstance(excinfo.value, TimeoutError)
        assert isinstance(excinfo.value, GeneratorError)
        assert elapsed < 1.5  # no retries after a deadline overrun
        assert len(stub.requests) == 1

    def test_non_json_payload(self, stub) -> None:
        stub.plan(("garbage",))
        with pytest.raises(GeneratorError):
            _client(stub).generate(REQUEST)

    def test_missing_choices(self, stub) -> None:
        stub.plan(("ok", {"choices": []}))
        with pytest.raises(GeneratorError):
            _client(stub).generate(REQUEST)

    def test_completions_text_field_accepted(self, stub) -> None:
        stub.plan(("ok", {"choices": [{"text": "plain completion"}]}))
        response = _client(stub).generate(REQUEST)
        assert response.text == "plain completion"

    def test_transport_failure_retried(self) -> None:
        # Nothing listens on this port; every attempt fails at connect.
        client = HttpGenerator(
            "http://127.0.0.1:9/v1/chat/completions",
            "test-model",
            max_retries=1,
            backoff_base_s=0.01,
            backoff_jitter_s=0.0,
        )
        with pytest.raises(GeneratorError):
            client.generate(REQUEST)
        assert client.retries_total == 1

    def test_api_key_header(self, stub, monkeypatch) -> None:
        monkeypatch.setenv("PROOFSKETCH_API_KEY", "sk-test-abc")
        stub.plan(("ok", _ok_payload("hi")))
        _client(stub).generate(REQUEST)
        assert stub.requests[0]["auth"] == "Bearer sk-test-abc"

    def test_no_key_no_header(self, stub, monkeypatch) -> None:
        monkeypatch.delenv("PROOFSKETCH_API_KEY", raising=False)
        stub.plan(("ok", _ok_payload("hi")))
        _client(stub).generate(REQUEST)
        assert stub.requests[0]["auth"] is None

    def test_custom_key_env(self, stub, monkeypatch) -> None:
        monkeypatch.setenv("OTHER_KEY", "sk-other")
        stub.plan(("ok", _ok_payload("hi")))
        _client(stub, api_key_env="OTHER_KEY").generate(REQUEST)
        assert stub.requests[0]["auth"] == "Bearer sk-other"


class TestThreadSafety:
    def test_thread_safe_backend_passes_through(self, stub) -> None:
        client = _client(stub)
        assert thread_safe_generator(client) is client

    def test_serial_backend_gets_wrapped(self) -> None:
        scripted = ScriptedGenerator(["a"], strict=False)
        wrapped = thread_safe_generator(scripted)
        assert wrapped is not scripted
        assert wrapped.thread_safe
        assert wrapped.name == scripted.name

    def test_wrapped_generator_serializes_calls(self) -> None:
        scripted = ScriptedGenerator([f"item {i}" for i in range(200)], strict=True)
        wrapped = thread_safe_generator(scripted)
        request = GenerationRequest(prompt="p", max_tokens=10)
        errors: list[Exception] = []

        def hammer() -> None:
            try:
                for _ in range(50):
                    wrapped.generate(request)
            except Exception as exc:  # pragma: no cover - failure path
                errors.append(exc)

        threads = [threading.Thread(target=hammer) for _ in range(4)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        assert not errors
        assert scripted.calls == 200
