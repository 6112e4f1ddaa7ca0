"""Command-line front end: closure, answer, eval, ablate, report."""

from __future__ import annotations

import argparse
import json
import sys
import zlib
from dataclasses import fields as dataclass_fields
from pathlib import Path

from .closure import forward_chain
from .generation import (
    PROMPT_VERSION,
    BASELINE_BUDGETS,
    HttpGenerator,
    OracleGenerator,
    OracleNoiseConfig,
    ScriptedGenerator,
    thread_safe_generator,
)
from .harness import (
    DatasetRecord,
    Method,
    ablation_csv,
    compute_metrics,
    emit_report,
    evaluate,
    load_dataset,
    run_ablation,
    write_run,
    MetricsReport,
)
from .selector import PipelineConfig, run_pipeline
from .theory import parse_question, parse_theory_nl, parse_theory_structured, literal_sort_key

_METHOD_CHOICES = {
    "zero": [Method.ZERO_SHOT],
    "short": [Method.SHORT_COT],
    "long": [Method.LONG_COT],
    "sketch": [Method.PROOFSKETCH],
    "all": [Method.ZERO_SHOT, Method.SHORT_COT, Method.LONG_COT, Method.PROOFSKETCH],
}

_PIPELINE_KEYS = {f.name for f in dataclass_fields(PipelineConfig)}


def _load_theory_file(path: str):
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".theory.json") or path.endswith(".json"):
        return parse_theory_structured(json.loads(text))
    return parse_theory_nl(text)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise SystemExit("config file must hold a JSON object")
    return doc


def _pipeline_config(doc: dict) -> PipelineConfig:
    kwargs = {key: value for key, value in doc.items() if key in _PIPELINE_KEYS}
    return PipelineConfig(**kwargs)


def _record_seed(base_seed: int, record_id: str) -> int:
    # Stable per-record stream: replayable across runs and worker counts.
    return (base_seed * 1_000_003) ^ zlib.crc32(record_id.encode("utf-8"))


def _make_generator_factory(args: argparse.Namespace, config_doc: dict):
    if args.backend == "scripted":
        if not args.script:
            raise SystemExit("--backend scripted requires --script <file>")
        script = json.loads(Path(args.script).read_text(encoding="utf-8"))
        if not isinstance(script, list) or not all(isinstance(s, str) for s in script):
            raise SystemExit("script file must hold a JSON array of strings")
        shared = thread_safe_generator(ScriptedGenerator(script, strict=False))
        return lambda record: shared
    if args.backend == "http":
        endpoint = args.endpoint or config_doc.get("endpoint_url")
        model = args.model or config_doc.get("model_name")
        if not endpoint or not model:
            raise SystemExit("--backend http requires --endpoint and --model")
        shared = HttpGenerator(
            endpoint,
            model,
            api_key_env=config_doc.get("api_key_env", "PROOFSKETCH_API_KEY"),
            timeout_ms=config_doc.get("timeout_ms", 30000.0),
            max_retries=config_doc.get("max_retries", 2),
            max_in_flight=config_doc.get("max_in_flight", 4),
        )
        return lambda record: shared

    def make_oracle(record: DatasetRecord):
        noise = OracleNoiseConfig(
            flip_answer_prob=args.flip,
            corrupt_claim_prob=args.corrupt,
            malform_prob=args.malform,
            seed=_record_seed(args.seed, record.record_id),
        )
        theory = parse_theory_nl(record.theory_text)
        question = parse_question(record.question_text)
        return OracleGenerator(theory, question, noise)

    return make_oracle


def _add_backend_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["scripted", "oracle", "http"], default="oracle")
    parser.add_argument("--script", help="JSON array of canned responses (scripted backend)")
    parser.add_argument("--endpoint", help="chat-completions URL (http backend)")
    parser.add_argument("--model", help="model name (http backend)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--flip", type=float, default=0.0, help="oracle answer-flip probability")
    parser.add_argument("--corrupt", type=float, default=0.0, help="oracle claim-corruption probability")
    parser.add_argument("--malform", type=float, default=0.0, help="oracle malformed-output probability")
    parser.add_argument("--config", help="JSON file with pipeline and http settings")


def _cmd_closure(args: argparse.Namespace) -> int:
    theory = _load_theory_file(args.theory_file)
    closure = forward_chain(theory)
    literals = [
        {
            "entity": literal.entity,
            "attribute": literal.attribute,
            "negated": not literal.positive,
            "depth": closure.depth[literal],
        }
        for literal in sorted(closure.literals, key=literal_sort_key)
    ]
    print(json.dumps({"literals": literals, "contradictory": closure.contradictory}, indent=2))
    return 0


def _cmd_answer(args: argparse.Namespace) -> int:
    config_doc = _load_config_file(args.config)
    config = _pipeline_config(config_doc)
    theory = _load_theory_file(args.theory_file)
    question = parse_question(args.question)

    if args.backend == "scripted":
        if not args.script:
            raise SystemExit("--backend scripted requires --script <file>")
        script = json.loads(Path(args.script).read_text(encoding="utf-8"))
        generator = ScriptedGenerator(script, strict=False)
    elif args.backend == "http":
        endpoint = args.endpoint or config_doc.get("endpoint_url")
        model = args.model or config_doc.get("model_name")
        if not endpoint or not model:
            raise SystemExit("--backend http requires --endpoint and --model")
        generator = HttpGenerator(endpoint, model)
    else:
        noise = OracleNoiseConfig(
            flip_answer_prob=args.flip, corrupt_claim_prob=args.corrupt,
            malform_prob=args.malform, seed=args.seed,
        )
        generator = OracleGenerator(theory, question, noise)

    result = run_pipeline(theory, question, config, generator)
    print(json.dumps(result.to_json_dict(), indent=2))
    return 0


def _config_stamp(args: argparse.Namespace, config: PipelineConfig,
                  methods: list[Method]) -> dict:
    return {
        "prompt_version": PROMPT_VERSION,
        "backend": args.backend,
        "seed": args.seed,
        "workers": getattr(args, "workers", 1),
        "methods": [m.value for m in methods],
        "baseline_budgets": {mode.value: budget for mode, budget in BASELINE_BUDGETS.items()},
        "pipeline": {
            "max_sketches": config.max_sketches,
            "budget_anchored": config.budget_anchored,
            "budget_unanchored": config.budget_unanchored,
            "temperature": config.temperature,
            "adaptive_budget": config.adaptive_budget,
            "fixed_budget": config.fixed_budget,
            "certify_unknown_from_closure": config.certify_unknown_from_closure,
            "closure_short_circuit": config.closure_short_circuit,
        },
        "noise": {"flip": args.flip, "corrupt": args.corrupt, "malform": args.malform},
    }


def _cmd_eval(args: argparse.Namespace) -> int:
    config_doc = _load_config_file(args.config)
    config = _pipeline_config(config_doc)
    methods = _METHOD_CHOICES[args.method]
    loaded = load_dataset(args.dataset)
    factory = _make_generator_factory(args, config_doc)
    results = evaluate(loaded.records, methods, config, factory, workers=args.workers)
    report = compute_metrics(results)
    if args.out:
        write_run(
            args.out,
            config_stamp=_config_stamp(args, config, methods),
            eval_records=results,
            report=report,
            rejects=loaded.rejects,
        )
        print(f"run written to {args.out}", file=sys.stderr)
    print(emit_report(report, "md"))
    if loaded.rejects:
        print(f"rejected {len(loaded.rejects)} line(s)", file=sys.stderr)
    return 0


def _parse_budgets(spec: str) -> list[int]:
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise SystemExit("--budgets expects start:stop:step or a comma list")
        start, stop, step = (int(part) for part in parts)
        if step < 1 or stop < start:
            raise SystemExit("--budgets range must be increasing with a positive step")
        return list(range(start, stop + 1, step))
    return [int(part) for part in spec.split(",") if part.strip()]


def _cmd_ablate(args: argparse.Namespace) -> int:
    config_doc = _load_config_file(args.config)
    config = _pipeline_config(config_doc)
    budgets = _parse_budgets(args.budgets)
    loaded = load_dataset(args.dataset)
    factory = _make_generator_factory(args, config_doc)
    rows = run_ablation(loaded.records, budgets, config, factory, workers=args.workers)
    csv_text = ablation_csv(rows)
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        print(f"ablation written to {args.out}", file=sys.stderr)
    else:
        print(csv_text, end="")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    metrics_path = Path(args.run_dir) / "metrics.json"
    doc = json.loads(metrics_path.read_text(encoding="utf-8"))
    report = MetricsReport.from_json_dict(doc)
    print(emit_report(report, args.format), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proofsketch",
        description="Verification-guided question answering over unary logical theories",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    closure_cmd = commands.add_parser("closure", help="print a theory's closure as JSON")
    closure_cmd.add_argument("theory_file")
    closure_cmd.set_defaults(handler=_cmd_closure)

    answer_cmd = commands.add_parser("answer", help="answer one question against a theory")
    answer_cmd.add_argument("theory_file")
    answer_cmd.add_argument("--question", required=True)
    _add_backend_arguments(answer_cmd)
    answer_cmd.set_defaults(handler=_cmd_answer)

    eval_cmd = commands.add_parser("eval", help="evaluate methods over a JSONL dataset")
    eval_cmd.add_argument("dataset")
    eval_cmd.add_argument("--method", choices=sorted(_METHOD_CHOICES), default="all")
    eval_cmd.add_argument("--workers", type=int, default=1)
    eval_cmd.add_argument("--out", help="run directory to write")
    _add_backend_arguments(eval_cmd)
    eval_cmd.set_defaults(handler=_cmd_eval)

    ablate_cmd = commands.add_parser("ablate", help="sweep sketch budgets over a dataset")
    ablate_cmd.add_argument("dataset")
    ablate_cmd.add_argument("--budgets", default="120:220:20")
    ablate_cmd.add_argument("--workers", type=int, default=1)
    ablate_cmd.add_argument("--out", help="CSV file to write")
    _add_backend_arguments(ablate_cmd)
    ablate_cmd.set_defaults(handler=_cmd_ablate)

    report_cmd = commands.add_parser("report", help="re-render a run's metrics")
    report_cmd.add_argument("run_dir")
    report_cmd.add_argument("--format", choices=["md", "csv", "json"], default="md")
    report_cmd.set_defaults(handler=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
