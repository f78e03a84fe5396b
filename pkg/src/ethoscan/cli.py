"""Operator command surface binding all modules into the study workflows.

Exit codes: 0 success (or gate pass), 1 gate fail, 2 usage error,
3 runtime error.  Every artifact-producing command writes a sibling
run manifest (<output>.run.json) capturing the inputs needed to
re-execute it.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import classifier, ingest, metrics, prompting, report, service
from .corpus import (
    AnnotationRecord,
    Contribution,
    GroundTruthEntry,
    PredictionRecord,
    build_ground_truth,
    build_manifest,
    format_timestamp,
    load_dataset,
    sample_contributions,
    save_dataset,
    save_manifest,
)
from .errors import EthoscanError

EXIT_OK = 0
EXIT_GATE_FAIL = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class CliError(EthoscanError):
    pass


@dataclass
class RunManifest:
    command: str
    timestamp: str
    inputs: dict
    outputs: list[str]
    spec_version: str | None = None
    model: str | None = None
    seed: int | None = None
    failures: list = field(default_factory=list)

    def write_for(self, output_path: str | Path) -> Path:
        path = Path(str(output_path) + ".run.json")
        payload = {
            "command": self.command,
            "timestamp": self.timestamp,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "spec_version": self.spec_version,
            "model": self.model,
            "seed": self.seed,
            "failures": self.failures,
        }
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        return path


def _manifest(command: str, inputs: dict, outputs: list[str], **kw) -> RunManifest:
    return RunManifest(command=command,
                       timestamp=format_timestamp(datetime.now(timezone.utc)),
                       inputs=inputs, outputs=outputs, **kw)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    if not isinstance(config, dict):
        raise CliError(f"config {path} must be a JSON object")
    return config


def _setting(args, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    return config.get(key, default)


def _parse_date(value: str) -> datetime:
    try:
        parsed = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        raise CliError(f"bad date {value!r}; use YYYY-MM-DD") from None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed


def _github_transport(args) -> ingest.GitHubTransport:
    if getattr(args, "fixture", None):
        return ingest.RecordedTransport.from_file(args.fixture)
    return ingest.HttpGitHubTransport()


def _chat_transport(args) -> classifier.ChatTransport:
    if getattr(args, "stub", None):
        return classifier.ScriptedTransport.from_file(args.stub)
    return classifier.HttpChatTransport()


def _model_config(args, config: dict) -> classifier.ModelConfig:
    return classifier.ModelConfig(
        endpoint=_setting(args, config, "endpoint",
                          classifier.ModelConfig.endpoint),
        model=_setting(args, config, "model", classifier.ModelConfig.model),
        temperature=float(_setting(args, config, "temperature", 0.0)),
        max_retries=int(_setting(args, config, "max_retries", 2)),
        cache_enabled=not getattr(args, "no_cache", False),
        cache_dir=_setting(args, config, "cache_dir", None),
    )


def _load_spec(args) -> prompting.PromptSpec:
    if getattr(args, "spec", None):
        return prompting.load_spec(args.spec)
    return prompting.default_spec()


def _predictions_from(path: str, run_id: int | None = 1) -> list[PredictionRecord]:
    records = [r for r in load_dataset(path) if isinstance(r, PredictionRecord)]
    if not records:
        raise CliError(f"{path} contains no prediction records")
    if run_id is not None:
        records = [r for r in records if r.run_id == run_id]
        if not records:
            raise CliError(f"{path} has no records for run {run_id}")
    return records


def _structured_error(exc: EthoscanError) -> None:
    print(json.dumps({"error": {"type": type(exc).__name__,
                                "message": str(exc)}}),
          file=sys.stderr)


# --- subcommands -----------------------------------------------------------

def cmd_screen(args) -> int:
    config = _load_config(args.config)
    criteria = ingest.ActivityCriteria(
        min_total_issues=int(_setting(args, config, "min_total_issues", 1000)),
        min_open_issues=int(_setting(args, config, "min_open_issues", 300)),
        max_days_since_commit=int(_setting(args, config,
                                           "max_days_since_commit", 7)),
    )
    transport = _github_transport(args)
    rows = []
    for repo in args.repos:
        profile = ingest.profile_repo(repo, transport)
        active = ingest.check_activity(profile, criteria)
        rows.append({
            "repo": repo,
            "total_issues": profile.total_issues,
            "open_issues": profile.open_issues,
            "last_commit_at": format_timestamp(profile.last_commit_at),
            "active": active,
        })
    if args.json:
        print(json.dumps(rows, indent=2))
    else:
        for row in rows:
            verdict = "active" if row["active"] else "inactive"
            print(f"{row['repo']}: {verdict} (issues={row['total_issues']}, "
                  f"open={row['open_issues']}, "
                  f"last commit {row['last_commit_at']})")
    return EXIT_OK


def cmd_ingest(args) -> int:
    config = _load_config(args.config)
    window = (_parse_date(getattr(args, "from")), _parse_date(args.to))
    settings = ingest.FetchSettings(
        author_hash_key=_setting(args, config, "author_key", "ethoscan-local"),
        per_page=int(_setting(args, config, "per_page", 100)),
    )
    contributions = ingest.fetch_contributions(args.repo, window,
                                               _github_transport(args), settings)
    save_dataset(contributions, args.out)
    save_manifest(build_manifest(contributions, dataset_id=args.out,
                                 notes=[f"ingest {args.repo}"]), args.out)
    _manifest("ingest", {"repo": args.repo,
                         "from": window[0].isoformat(),
                         "to": window[1].isoformat(),
                         "fixture": args.fixture},
              [args.out]).write_for(args.out)
    print(f"wrote {len(contributions)} contributions to {args.out}")
    return EXIT_OK


def _parse_kind_quota(text: str | None) -> dict[str, int] | None:
    if not text:
        return None
    quota = {}
    for part in text.split(","):
        kind, _, count = part.partition("=")
        if not count.isdigit():
            raise CliError(f"bad kind quota {part!r}; use issue=N,comment=M")
        quota[kind.strip()] = int(count)
    return quota


def cmd_sample(args) -> int:
    records = load_dataset(args.dataset)
    pool = [r for r in records if isinstance(r, Contribution)]
    if not pool:
        raise CliError(f"{args.dataset} contains no contributions")
    picked = sample_contributions(pool, args.n, args.seed,
                                  kind_quota=_parse_kind_quota(args.kind_quota))
    save_dataset(picked, args.out)
    save_manifest(build_manifest(picked, dataset_id=args.out,
                                 sample_seed=args.seed), args.out)
    _manifest("sample", {"dataset": args.dataset, "n": args.n},
              [args.out], seed=args.seed).write_for(args.out)
    print(f"sampled {len(picked)} of {len(pool)} contributions to {args.out}")
    return EXIT_OK


def cmd_classify(args) -> int:
    config = _load_config(args.config)
    spec = _load_spec(args)
    model_config = _model_config(args, config)
    transport = _chat_transport(args)
    contributions = [r for r in load_dataset(args.dataset)
                     if isinstance(r, Contribution)]
    if not contributions:
        raise CliError(f"{args.dataset} contains no contributions")

    failures: list[tuple[str, str]] = []
    if args.runs > 1:
        runset = classifier.run_consistency(contributions, spec, model_config,
                                            k=args.runs, transport=transport,
                                            parallelism=args.parallelism)
        records = runset.records
    else:
        result = classifier.classify_batch(contributions, spec, model_config,
                                           transport=transport,
                                           parallelism=args.parallelism)
        records, failures = result.records, result.failures

    save_dataset(records, args.out)
    _manifest("classify",
              {"dataset": args.dataset, "spec": args.spec, "runs": args.runs,
               "stub": args.stub},
              [args.out], spec_version=spec.version, model=model_config.model,
              failures=[{"contribution_id": cid, "error": msg}
                        for cid, msg in failures]).write_for(args.out)
    print(f"wrote {len(records)} prediction records to {args.out}")
    if failures:
        for cid, message in failures:
            print(f"FAILED {cid}: {message}", file=sys.stderr)
        raise CliError(f"{len(failures)} contributions failed to classify "
                       f"(partial output flagged in {args.out}.run.json)")
    return EXIT_OK


def _truth_from(path: str) -> dict[str, frozenset]:
    truth_records = [r for r in load_dataset(path)
                     if isinstance(r, GroundTruthEntry)]
    if not truth_records:
        raise CliError(f"{path} contains no ground-truth records")
    return {r.contribution_id: frozenset(r.labels) for r in truth_records}


def cmd_evaluate(args) -> int:
    predictions = metrics.labels_from_records(_predictions_from(args.predictions))
    truth = _truth_from(args.truth)
    evaluation = metrics.evaluate(predictions, truth)
    metrics.save_report_json(evaluation.to_json(), args.out)
    outputs = [args.out]
    if args.csv:
        Path(args.csv).write_text(evaluation.to_scope_csv(), encoding="utf-8")
        outputs.append(args.csv)
    if args.matrix:
        metrics.save_report_json(evaluation.to_flag_matrix(), args.matrix)
        outputs.append(args.matrix)
    _manifest("evaluate", {"predictions": args.predictions,
                           "truth": args.truth}, outputs).write_for(args.out)
    overall = evaluation.scopes[metrics.SCOPE_OVERALL]
    print(f"evaluated {evaluation.evaluated} items: "
          f"micro P={overall['micro'].precision:.4f} "
          f"R={overall['micro'].recall:.4f} F1={overall['micro'].f1:.4f}; "
          f"macro P={overall['macro'].precision:.4f}; "
          f"subset accuracy={evaluation.subset_accuracy:.4f}")
    return EXIT_OK


def cmd_consistency(args) -> int:
    records = _predictions_from(args.runset, run_id=None)
    k = max(r.run_id for r in records)
    runset = classifier.RunSet(k=k, records=records)
    result = metrics.consistency(runset.label_runs())
    metrics.save_report_json(result.to_json(), args.out)
    _manifest("consistency", {"runset": args.runset}, [args.out]).write_for(args.out)
    print(f"k={result.k} runs over {result.n_items} items: "
          f"exact match {result.exact_match_pct:.2f}%, "
          f"flag match {result.flag_match_pct:.2f}%")
    return EXIT_OK


def cmd_gate(args) -> int:
    config = _load_config(args.config)
    payload = json.loads(Path(args.report).read_text(encoding="utf-8"))
    evaluation = metrics.EvaluationReport.from_json(payload)
    selector = _setting(args, config, "metric", metrics.DEFAULT_GATE_SELECTOR)
    threshold = float(_setting(args, config, "threshold",
                               metrics.DEFAULT_GATE_THRESHOLD))
    result = metrics.threshold_gate(evaluation, selector, threshold)
    verdict = "PASS" if result.passed else "FAIL"
    print(f"{verdict} {result.selector}={result.value:.4f} vs "
          f"threshold {result.threshold:.4f} (margin {result.margin:+.4f})")
    return EXIT_OK if result.passed else EXIT_GATE_FAIL


def cmd_distribution(args) -> int:
    records = _predictions_from(args.predictions)
    dist = report.flag_distribution(records, repo=args.repo)
    metrics.save_report_json(dist.to_json(), args.out)
    outputs = [args.out]
    if args.csv:
        Path(args.csv).write_text(report.distribution_csv([dist]),
                                  encoding="utf-8")
        outputs.append(args.csv)
    _manifest("distribution", {"predictions": args.predictions,
                               "repo": args.repo}, outputs).write_for(args.out)
    top = max(dist.percentages, key=dist.percentages.get)
    print(f"{args.repo}: {dist.total_contributions} contributions, "
          f"{dist.total_flag_occurrences} flag occurrences; "
          f"top flag {top} at {dist.percentages[top]:.2f}%")
    return EXIT_OK


def cmd_compare(args) -> int:
    reports = [report.DistributionReport.from_json(
        json.loads(Path(p).read_text(encoding="utf-8"))) for p in args.reports]
    table = report.compare_repos(reports)
    Path(args.out).write_text(table.to_csv(), encoding="utf-8")
    _manifest("compare", {"reports": list(args.reports)},
              [args.out]).write_for(args.out)
    if args.json:
        print(json.dumps(table.to_json(), indent=2))
    else:
        print(table.to_csv(), end="")
    return EXIT_OK


def cmd_agreement(args) -> int:
    annotations = [r for r in load_dataset(args.annotations)
                   if isinstance(r, AnnotationRecord)]
    if not annotations:
        raise CliError(f"{args.annotations} contains no annotation records")
    result = build_ground_truth(annotations)
    annotators = sorted(result.labels_by_annotator)
    payload: dict = {
        "complete_items": result.total,
        "unanimous": len(result.entries),
        "dropped": result.dropped,
        "unanimity_pct": round(100.0 * len(result.entries) / result.total, 2),
    }
    if len(annotators) == 2:
        agreement = metrics.cohen_kappa(
            result.labels_by_annotator[annotators[0]],
            result.labels_by_annotator[annotators[1]])
        payload["macro_kappa"] = agreement.macro_kappa
        payload["per_flag"] = agreement.to_json()["per_flag"]
    metrics.save_report_json(payload, args.out)
    _manifest("agreement", {"annotations": args.annotations},
              [args.out]).write_for(args.out)
    kappa = payload.get("macro_kappa")
    kappa_text = f"{kappa:.4f}" if kappa is not None else "n/a"
    print(f"{result.total} doubly annotated items, "
          f"unanimity {payload['unanimity_pct']:.2f}%, macro kappa {kappa_text}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    config = _load_config(args.config)
    annotators = _setting(args, config, "annotators", "a1,a2")
    if isinstance(annotators, str):
        annotators = [a.strip() for a in annotators.split(",") if a.strip()]
    store = service.load_store(args.dataset, annotators,
                               annotations_path=args.annotations,
                               predictions_path=args.predictions)
    host, _, port = args.listen.rpartition(":")
    app = service.create_app(store)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return EXIT_OK


def cmd_spec_init(args) -> int:
    prompting.save_spec(prompting.default_spec(), args.out)
    print(f"wrote default prompt spec to {args.out}")
    return EXIT_OK


def cmd_spec_diff(args) -> int:
    old = prompting.load_spec(args.old)
    new = prompting.load_spec(args.new)
    changes = prompting.diff_specs(old, new)
    if not changes:
        print("specs are identical")
    for change in changes:
        print(change)
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ethoscan",
        description="Ethical-flag classification of OSS non-coding contributions")
    parser.add_argument("--config", help="JSON config file; flags override it")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("screen", help="check repos against activity criteria")
    p.add_argument("repos", nargs="+", metavar="OWNER/REPO")
    p.add_argument("--fixture", help="recorded transcript instead of live HTTP")
    p.add_argument("--min-total-issues", dest="min_total_issues", type=int)
    p.add_argument("--min-open-issues", dest="min_open_issues", type=int)
    p.add_argument("--max-days-since-commit", dest="max_days_since_commit",
                   type=int)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("ingest", help="fetch non-coding contributions")
    p.add_argument("repo", metavar="OWNER/REPO")
    p.add_argument("--from", required=True, help="window start (YYYY-MM-DD)")
    p.add_argument("--to", required=True, help="window end, exclusive")
    p.add_argument("--out", required=True)
    p.add_argument("--fixture", help="recorded transcript instead of live HTTP")
    p.add_argument("--author-key", dest="author_key")
    p.add_argument("--per-page", dest="per_page", type=int)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("sample", help="seeded sample of a contribution dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--kind-quota", dest="kind_quota",
                   help="stratify by kind, e.g. issue=600,comment=400")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("classify", help="run the LLM classifier over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--spec", help="prompt spec JSON (default: built-in baseline)")
    p.add_argument("--out", required=True)
    p.add_argument("--model")
    p.add_argument("--endpoint")
    p.add_argument("--temperature", type=float)
    p.add_argument("--runs", type=int, default=1,
                   help="k>1 runs an independent-consistency batch set")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--stub", help="scripted transcript file (offline stub)")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--no-cache", dest="no_cache", action="store_true")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="also write the scope table as CSV")
    p.add_argument("--matrix", help="also write the per-flag matrix JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("consistency", help="cross-run stability of a run set")
    p.add_argument("--runset", required=True,
                   help="prediction file with run_id 1..k")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("gate", help="threshold check on an evaluation report")
    p.add_argument("--report", required=True)
    p.add_argument("--metric", dest="metric")
    p.add_argument("--threshold", dest="threshold", type=float)
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("distribution", help="per-repo flag distribution")
    p.add_argument("--predictions", required=True)
    p.add_argument("--repo", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_distribution)

    p = sub.add_parser("compare", help="compare repo distribution reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("agreement", help="inter-annotator agreement report")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("serve", help="start the annotation service")
    p.add_argument("--dataset", required=True)
    p.add_argument("--listen", default="127.0.0.1:8787")
    p.add_argument("--annotators")
    p.add_argument("--annotations")
    p.add_argument("--predictions")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("spec-init", help="write the default prompt spec")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spec_init)

    p = sub.add_parser("spec-diff", help="diff two prompt spec versions")
    p.add_argument("old")
    p.add_argument("new")
    p.set_defaults(func=cmd_spec_diff)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "func", None):
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except EthoscanError as exc:
        _structured_error(exc)
        return EXIT_RUNTIME
    except OSError as exc:
        print(json.dumps({"error": {"type": "IOError", "message": str(exc)}}),
              file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
