#!/usr/bin/env python3
"""Offline walk-through of the whole pipeline against a scripted stub model.

Builds a small corpus, classifies it with a deterministic stub (including
one constraint-violating and one garbage reply), evaluates against ground
truth, applies the 0.80 precision gate, and prints the distribution table.
Artifacts land in ./demo_output/.

Usage: python scripts/run_mock_pipeline.py
"""

import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ethoscan.classifier import ModelConfig, ScriptedTransport, classify_batch
from ethoscan.corpus import Contribution, GroundTruthEntry, save_dataset
from ethoscan.metrics import evaluate, labels_from_records, threshold_gate
from ethoscan.prompting import default_spec
from ethoscan.report import distribution_csv, flag_distribution
from ethoscan.taxonomy import FlagSet

OUT = Path("demo_output")
START = datetime(2024, 2, 1, tzinfo=timezone.utc)

ITEMS = [
    ("d1", "Thanks a lot, the patch fixed our pipeline!", ["F1"], ["F1"]),
    ("d2", "Repro: run with --strict and the parser loops; fix attached.",
     ["F3"], ["F3"]),
    ("d3", "My mistake, I had stale artifacts. Sorry for the noise!",
     ["F4"], ["F4"]),
    ("d4", "You clearly have no idea how schedulers work.", ["F7"], ["F7"]),
    ("d5", "Any news?", ["F11"], ["F11", "F1"]),  # violates F11 exclusivity
    ("d6", "What OS are you on?", ["F11"], "garbage"),
]


def build_corpus():
    contributions, truth = [], []
    for i, (token, body, truth_flags, _) in enumerate(ITEMS):
        cid = f"demo/repo/issues/{token}"
        contributions.append(Contribution(
            id=cid, repo="demo/repo", kind="issue",
            body=f"[{token}] {body}",
            created_at=START + timedelta(hours=i),
            author_key=f"{i:012d}"))
        truth.append(GroundTruthEntry(cid, FlagSet.of(*truth_flags)))
    return contributions, truth


def build_transport():
    items = []
    for token, _, _, reply in ITEMS:
        if reply == "garbage":
            text = "Unable to comply."
        else:
            text = json.dumps({"flags": reply,
                               "rationale": {f: "demo" for f in reply}})
        items.append({"match": f"[{token}]", "replies": [text]})
    return ScriptedTransport.from_dict({"items": items})


def main():
    OUT.mkdir(exist_ok=True)
    contributions, truth = build_corpus()
    save_dataset(contributions, OUT / "corpus.jsonl")
    save_dataset(truth, OUT / "truth.jsonl")

    config = ModelConfig(model="demo-stub", cache_enabled=False)
    result = classify_batch(contributions, default_spec(), config,
                            transport=build_transport(), parallelism=2)
    save_dataset(result.records, OUT / "predictions.jsonl")
    for record in result.records:
        marker = ""
        if record.repaired:
            marker = f"  [repaired: {'; '.join(record.notes)}]"
        if record.needs_review:
            marker += "  [needs review]"
        print(f"{record.contribution_id}: {record.labels.sorted_ids()}{marker}")

    report = evaluate(labels_from_records(result.records),
                      {t.contribution_id: frozenset(t.labels) for t in truth})
    (OUT / "evaluation.json").write_text(
        json.dumps(report.to_json(), indent=2))
    print("\nScope table:")
    print(report.to_scope_csv())

    # the default macro gate counts the demo's unused flags as zeros, so it
    # fails here; the micro gate over the same report passes
    for selector in ("macro_precision_overall", "micro_precision_overall"):
        gate = threshold_gate(report, selector=selector)
        print(f"gate {gate.selector}: {gate.value:.4f} vs "
              f"{gate.threshold:.2f} -> {'PASS' if gate.passed else 'FAIL'}")

    distribution = flag_distribution(result.records, repo="demo/repo")
    (OUT / "distribution.csv").write_text(distribution_csv([distribution]))
    print("\nDistribution:")
    print(distribution_csv([distribution]))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
