"""Dataset loading, evaluation runs, metrics, and reports.

Datasets are JSONL: one object per non-blank line with id, theory,
question, answer, and an optional depth. Lines that fail validation are
collected into a rejects report instead of aborting the load, so a run
always states exactly which inputs it covered.

Four methods are compared: three prompting baselines (answer-only, a few
reasoning lines, a long derivation) and the verification-guided sketch
pipeline. Metrics per method: accuracy, certification rate, mean
completion tokens, nearest-rank 95th-percentile tokens, mean latency.
Token savings between two methods is 1 - mean_a / mean_b on mean tokens;
a per-example variant averaging per-record ratios is available
separately, and the two can differ by about a point on real runs.
"""

from __future__ import annotations

import json
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .generation import (
    BASELINE_BUDGETS,
    BaselineMode,
    Generator,
    build_baseline_prompt,
    request_sketch,
    thread_safe_generator,
)
from .selector import Certification, PipelineConfig, run_pipeline
from .theory import Label, ParseError, parse_question, parse_theory_nl


class EmptyDatasetError(ValueError):
    """No dataset line survived validation."""


class EmptyInputError(ValueError):
    """An aggregate was requested over zero records."""


class Method(str, Enum):
    ZERO_SHOT = "ZeroShot"
    SHORT_COT = "ShortCoT"
    LONG_COT = "LongCoT"
    PROOFSKETCH = "ProofSketch"


_BASELINE_FOR_METHOD = {
    Method.ZERO_SHOT: BaselineMode.ZERO_SHOT,
    Method.SHORT_COT: BaselineMode.SHORT_COT,
    Method.LONG_COT: BaselineMode.LONG_COT,
}


@dataclass(frozen=True)
class DatasetRecord:
    record_id: str
    theory_text: str
    question_text: str
    gold_label: Label
    depth: int | None = None


@dataclass(frozen=True)
class RejectedLine:
    line_number: int
    reason: str


@dataclass(frozen=True)
class LoadResult:
    """Validated records plus the rejects report; together they cover
    every non-blank line of the file."""

    records: tuple[DatasetRecord, ...]
    rejects: tuple[RejectedLine, ...]


@dataclass(frozen=True)
class EvalRecord:
    record_id: str
    method: Method
    predicted: Label
    correct: bool
    certified: bool
    tokens: int
    latency_ms: float
    generator_calls: int
    answer_source: str | None = None
    unparseable: bool = False
    sketch_scores: tuple[tuple[int, int, int, int], ...] | None = None

    def to_json_dict(self) -> dict:
        row = {
            "record_id": self.record_id,
            "method": self.method.value,
            "predicted": self.predicted.value,
            "correct": self.correct,
            "certified": self.certified,
            "tokens": self.tokens,
            "latency_ms": round(self.latency_ms, 3),
            "generator_calls": self.generator_calls,
            "answer_source": self.answer_source,
            "unparseable": self.unparseable,
        }
        if self.sketch_scores is not None:
            row["sketch_scores"] = [list(score) for score in self.sketch_scores]
        return row


def _validate_line(obj: object) -> DatasetRecord:
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    for key in ("id", "theory", "question", "answer"):
        if key not in obj:
            raise ValueError(f"missing key {key!r}")
    record_id = obj["id"]
    if not isinstance(record_id, str) or not record_id:
        raise ValueError("id must be a non-empty string")
    theory_text = obj["theory"]
    question_text = obj["question"]
    if not isinstance(theory_text, str) or not isinstance(question_text, str):
        raise ValueError("theory and question must be strings")
    raw_answer = obj["answer"]
    if not isinstance(raw_answer, str):
        raise ValueError("answer must be a string")
    gold = Label.from_text(raw_answer)
    if gold is None:
        raise ValueError(f"answer {raw_answer!r} is not one of True/False/Unknown")
    depth = obj.get("depth")
    if depth is not None and (isinstance(depth, bool) or not isinstance(depth, int) or depth < 0):
        raise ValueError("depth must be a non-negative integer when present")
    parse_theory_nl(theory_text)
    parse_question(question_text)
    return DatasetRecord(record_id, theory_text, question_text, gold, depth)


def load_dataset(path: str | Path) -> LoadResult:
    """Read a JSONL dataset, validating every non-blank line.

    Raises EmptyDatasetError when nothing validates; file-system problems
    propagate as OSError.
    """
    records: list[DatasetRecord] = []
    rejects: list[RejectedLine] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                rejects.append(RejectedLine(line_number, f"invalid JSON: {exc.msg}"))
                continue
            try:
                records.append(_validate_line(obj))
            except (ValueError, ParseError) as exc:
                rejects.append(RejectedLine(line_number, str(exc)))
    if not records:
        raise EmptyDatasetError(f"no valid records in {path}")
    return LoadResult(tuple(records), tuple(rejects))


_ANSWER_LINE_RE = re.compile(r"^\s*answer\s*[::]\s*(?P<rest>.*)$", re.IGNORECASE)
_LABEL_WORD_RE = re.compile(r"\b(true|false|unknown)\b", re.IGNORECASE)


def extract_label(text: str) -> tuple[Label, bool]:
    """Pull a label from free-form completion text.

    The last line of the form "Answer: <label>" wins; failing that, the
    last label word anywhere in the text. Returns (Unknown, True) when
    nothing matches, flagging the completion as unparseable.
    """
    answer_lines = [
        match["rest"] for line in text.splitlines()
        if (match := _ANSWER_LINE_RE.match(line)) is not None
    ]
    for candidate in reversed(answer_lines):
        words = _LABEL_WORD_RE.findall(candidate)
        if words:
            label = Label.from_text(words[-1])
            assert label is not None
            return label, False
    words = _LABEL_WORD_RE.findall(text)
    if words:
        label = Label.from_text(words[-1])
        assert label is not None
        return label, False
    return Label.UNKNOWN, True


GeneratorFactory = Callable[[DatasetRecord], Generator]


def run_baseline(record: DatasetRecord, mode: BaselineMode,
                 generator: Generator) -> EvalRecord:
    """Evaluate one record with a single budgeted baseline completion."""
    started = time.perf_counter()
    theory = parse_theory_nl(record.theory_text)
    question = parse_question(record.question_text)
    prompt = build_baseline_prompt(theory, question, mode)
    raw = request_sketch(generator, prompt, BASELINE_BUDGETS[mode], temperature=0.0)
    predicted, unparseable = extract_label(raw.text)
    latency_ms = (time.perf_counter() - started) * 1000.0
    return EvalRecord(
        record_id=record.record_id,
        method=Method(mode.value),
        predicted=predicted,
        correct=predicted is record.gold_label,
        certified=False,
        tokens=raw.token_count,
        latency_ms=latency_ms,
        generator_calls=1,
        unparseable=unparseable,
    )


def run_proofsketch(record: DatasetRecord, config: PipelineConfig,
                    generator: Generator) -> EvalRecord:
    """Evaluate one record with the verification-guided pipeline."""
    theory = parse_theory_nl(record.theory_text)
    question = parse_question(record.question_text)
    result = run_pipeline(theory, question, config, generator)
    return EvalRecord(
        record_id=record.record_id,
        method=Method.PROOFSKETCH,
        predicted=result.answer,
        correct=result.answer is record.gold_label,
        certified=result.certification is Certification.CERTIFIED,
        tokens=result.total_generated_tokens,
        latency_ms=result.latency_ms,
        generator_calls=result.generator_calls,
        answer_source=result.answer_source.value,
        sketch_scores=tuple(sketch.score.as_tuple() for sketch in result.sketches),
    )


def evaluate(records: Sequence[DatasetRecord], methods: Sequence[Method],
             config: PipelineConfig, generator_factory: GeneratorFactory,
             workers: int = 1) -> list[EvalRecord]:
    """Run the requested methods over the dataset, in stable order.

    With workers above 1, records of one method run concurrently; serial
    generators are wrapped in an exclusive-access guard.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")

    def run_one(method: Method, record: DatasetRecord) -> EvalRecord:
        generator = generator_factory(record)
        if workers > 1:
            generator = thread_safe_generator(generator)
        if method is Method.PROOFSKETCH:
            return run_proofsketch(record, config, generator)
        return run_baseline(record, _BASELINE_FOR_METHOD[method], generator)

    results: list[EvalRecord] = []
    for method in methods:
        if workers == 1:
            results.extend(run_one(method, record) for record in records)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results.extend(pool.map(lambda r: run_one(method, r), records))
    return results


@dataclass(frozen=True)
class MethodMetrics:
    accuracy: float
    cert_rate: float
    mean_tokens: float
    p95_tokens: float
    mean_latency_ms: float
    n: int


@dataclass(frozen=True)
class MetricsReport:
    per_method: dict[str, MethodMetrics]

    def to_json_dict(self) -> dict:
        methods = {
            name: {
                "accuracy": round(metrics.accuracy, 2),
                "cert_rate": round(metrics.cert_rate, 2),
                "mean_tokens": round(metrics.mean_tokens, 2),
                "p95_tokens": round(metrics.p95_tokens, 2),
                "mean_latency_ms": round(metrics.mean_latency_ms, 2),
                "n": metrics.n,
            }
            for name, metrics in sorted(self.per_method.items())
        }
        savings = {}
        sketch = Method.PROOFSKETCH.value
        if sketch in self.per_method:
            for baseline in (m.value for m in Method if m is not Method.PROOFSKETCH):
                if baseline in self.per_method and self.per_method[baseline].mean_tokens > 0:
                    fraction = token_savings(self, sketch, baseline)
                    savings[f"{sketch}_vs_{baseline}"] = savings_percent(fraction)
        return {"methods": methods, "token_savings_percent": savings}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "MetricsReport":
        per_method = {
            name: MethodMetrics(
                accuracy=row["accuracy"],
                cert_rate=row["cert_rate"],
                mean_tokens=row["mean_tokens"],
                p95_tokens=row["p95_tokens"],
                mean_latency_ms=row["mean_latency_ms"],
                n=row["n"],
            )
            for name, row in doc.get("methods", {}).items()
        }
        return cls(per_method)


def nearest_rank_p95(values: Sequence[float]) -> float:
    """95th percentile as the ceil(0.95 n)-th order statistic."""
    if not values:
        raise EmptyInputError("p95 of an empty sequence")
    ordered = sorted(values)
    rank = -(-95 * len(ordered) // 100)
    return ordered[rank - 1]


def _mean(values: Iterable[float]) -> float:
    items = list(values)
    return math.fsum(items) / len(items)


def compute_metrics(records: Sequence[EvalRecord]) -> MetricsReport:
    """Aggregate per-method metrics; order of records does not matter."""
    if not records:
        raise EmptyInputError("no evaluation records to aggregate")
    grouped: dict[str, list[EvalRecord]] = {}
    for record in records:
        grouped.setdefault(record.method.value, []).append(record)
    per_method = {
        name: MethodMetrics(
            accuracy=_mean(float(r.correct) for r in rows),
            cert_rate=_mean(float(r.certified) for r in rows),
            mean_tokens=_mean(float(r.tokens) for r in rows),
            p95_tokens=float(nearest_rank_p95([float(r.tokens) for r in rows])),
            mean_latency_ms=_mean(r.latency_ms for r in rows),
            n=len(rows),
        )
        for name, rows in grouped.items()
    }
    return MetricsReport(per_method)


def token_savings(report: MetricsReport, method_a: str, method_b: str) -> float:
    """Fraction of method_b's mean tokens that method_a avoids."""
    for name in (method_a, method_b):
        if name not in report.per_method:
            raise EmptyInputError(f"method {name!r} not present in the report")
    mean_b = report.per_method[method_b].mean_tokens
    if mean_b == 0:
        raise ZeroDivisionError("baseline mean tokens is zero")
    return 1.0 - report.per_method[method_a].mean_tokens / mean_b


def per_example_token_savings(records: Sequence[EvalRecord], method_a: str,
                              method_b: str) -> float:
    """Mean of per-record savings ratios over records both methods ran.

    Records where method_b spent zero tokens are skipped, since the ratio
    is undefined there. Differs in general from the ratio of means.
    """
    tokens_a = {r.record_id: r.tokens for r in records if r.method.value == method_a}
    tokens_b = {r.record_id: r.tokens for r in records if r.method.value == method_b}
    ratios = [
        1.0 - tokens_a[record_id] / tokens_b[record_id]
        for record_id in tokens_a
        if record_id in tokens_b and tokens_b[record_id] > 0
    ]
    if not ratios:
        raise EmptyInputError("no record is covered by both methods with nonzero baseline tokens")
    return _mean(ratios)


def savings_percent(fraction: float) -> float:
    """Savings fraction as a percentage rounded to one decimal."""
    return round(100.0 * fraction, 1)


@dataclass(frozen=True)
class AblationRow:
    budget: str
    accuracy: float
    mean_tokens: float
    cert_rate: float


def run_ablation(records: Sequence[DatasetRecord], budgets: Sequence[int],
                 config: PipelineConfig, generator_factory: GeneratorFactory,
                 workers: int = 1) -> list[AblationRow]:
    """Sweep fixed sketch budgets, then add the adaptive policy as a row."""
    rows: list[AblationRow] = []

    def sketch_row(label: str, run_config: PipelineConfig) -> AblationRow:
        evaluated = evaluate(records, [Method.PROOFSKETCH], run_config,
                             generator_factory, workers=workers)
        metrics = compute_metrics(evaluated).per_method[Method.PROOFSKETCH.value]
        return AblationRow(label, metrics.accuracy, metrics.mean_tokens, metrics.cert_rate)

    for budget in budgets:
        fixed = replace(config, fixed_budget=budget)
        rows.append(sketch_row(str(budget), fixed))
    adaptive = replace(config, fixed_budget=None)
    rows.append(sketch_row("adaptive", adaptive))
    return rows


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    lines = ["budget,accuracy,mean_tokens,cert_rate"]
    for row in rows:
        lines.append(
            f"{row.budget},{row.accuracy:.4f},{row.mean_tokens:.2f},{row.cert_rate:.4f}"
        )
    return "\n".join(lines) + "\n"


_REPORT_COLUMNS = ("accuracy", "cert_rate", "mean_tokens", "p95_tokens", "mean_latency_ms", "n")


def emit_report(report: MetricsReport, fmt: str) -> str:
    """Render a metrics report as markdown, csv, or json."""
    doc = report.to_json_dict()
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        lines = ["method,metric,value"]
        for name, row in doc["methods"].items():
            for column in _REPORT_COLUMNS:
                value = row[column]
                rendered = str(value) if column == "n" else f"{value:.2f}"
                lines.append(f"{name},{column},{rendered}")
        return "\n".join(lines) + "\n"
    if fmt == "md":
        lines = ["| Method | Acc | Tok | Cert |", "| --- | --- | --- | --- |"]
        for name, row in doc["methods"].items():
            lines.append(
                f"| {name} | {row['accuracy']:.2f} | {row['mean_tokens']:.2f} "
                f"| {row['cert_rate']:.2f} |"
            )
        for pair, percent in sorted(doc["token_savings_percent"].items()):
            lines.append(f"\nToken savings {pair.replace('_', ' ')}: {percent:.1f}%")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def write_run(out_dir: str | Path, *, config_stamp: dict,
              eval_records: Sequence[EvalRecord], report: MetricsReport,
              rejects: Sequence[RejectedLine] = ()) -> Path:
    """Materialize one run directory: config, per-record log, metrics,
    and the rejects report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(config_stamp, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with open(out / "records.jsonl", "w", encoding="utf-8") as handle:
        for record in eval_records:
            handle.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")
    (out / "metrics.json").write_text(emit_report(report, "json"), encoding="utf-8")
    with open(out / "rejects.jsonl", "w", encoding="utf-8") as handle:
        for reject in rejects:
            handle.write(
                json.dumps({"line": reject.line_number, "reason": reject.reason}) + "\n"
            )
    return out
