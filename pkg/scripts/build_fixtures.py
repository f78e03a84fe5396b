#!/usr/bin/env python3
"""Regenerate the mock end-to-end fixtures under tests/fixtures/.

Produces the 20-item contribution dataset, its ground truth, the stub
model transcript (one persistent constraint violation, one garbage
replier), and the golden evaluation report.  The golden numbers come
from the brute-force oracles in tests/oracles.py, never from the
package's own metric code, so the acceptance test compares two
independent computations.
"""

import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

import oracles  # noqa: E402

from ethoscan.corpus import Contribution, GroundTruthEntry, save_dataset  # noqa: E402
from ethoscan.taxonomy import FlagSet  # noqa: E402

FIXTURES = ROOT / "tests" / "fixtures"
START = datetime(2024, 1, 10, 9, 0, tzinfo=timezone.utc)

# (id token, body, truth flags, scripted reply flags or "garbage"/"violation")
PLAN = [
    ("m01", "Thanks a ton for the lightning-fast patch!", ["F1"], ["F1"]),
    ("m02", "Interesting, I had not considered the screen-reader angle; "
            "your perspective improves the proposal.", ["F2"], ["F2"]),
    ("m03", "Repro steps: enable strict mode, clear the cache, rerun; the "
            "null deref is in session.py line 88.", ["F3"], ["F3"]),
    ("m04", "That regression was my fault, I missed the migration step. "
            "Sorry everyone.", ["F4"], ["F4"]),
    ("m05", "I volunteer to maintain the triage rota so releases stop "
            "slipping for the whole team.", ["F5"], ["F5"]),
    ("m06", "Your branch merges are basically foreplay for the main branch, "
            "wink wink.", ["F6"], ["F6"]),
    ("m07", "This patch is garbage and so is whoever reviewed it.", ["F7"],
     ["F7"]),
    ("m08", "I will keep opening issues every hour until you merge my fix. "
            "You cannot ignore me forever.", ["F8"], ["F8"]),
    ("m09", "The maintainer's real name is P. Doe, here is their home "
            "address if anyone wants to complain in person.", ["F9"], ["F9"]),
    ("m10", "Does this also happen on 2.1?", ["F11"], ["F11"]),
    ("m11", "Thanks for the pointer! Setting the env var fixed it; logging "
            "the workaround here for others.", ["F1", "F3"], ["F1", "F3"]),
    ("m12", "Appreciate the review, and apologies, the flaky test was mine.",
     ["F1", "F4"], ["F4"]),
    ("m13", "Here is a minimal config that reproduces the leak, plus the "
            "upstream ticket link.", ["F3"], ["F11"]),
    ("m14", "You are a clown, and I will be watching every push you make "
            "from now on.", ["F7", "F8"], ["F7"]),
    ("m15", "Bump.", ["F11"], ["F3"]),
    ("m16", "Thank you so much, works perfectly now!", ["F1"], "violation"),
    ("m17", "Is there an ETA on the 3.0 milestone?", ["F11"], "garbage"),
    ("m18", "Coming from embedded land I read these buffers differently; "
            "let's make the docs welcoming to both camps for the project's "
            "long-term health.", ["F2", "F5"], ["F2", "F5"]),
    ("m19", "Get a room with your precious linter already.", ["F6"], ["F7"]),
    ("m20", "Suggest pinning the compiler in CI; it stabilizes builds for "
            "every downstream consumer. PR attached.", ["F3", "F5"],
     ["F3", "F5"]),
]

VIOLATION_REPLY = json.dumps({"flags": ["F11", "F1"],
                              "rationale": {"F1": "gratitude",
                                            "F11": "nothing else"}})
GARBAGE_REPLY = "I'm sorry, I can't help with classifying that."


def reply_for(flags):
    return json.dumps({
        "flags": flags,
        "rationale": {f: f"matched {f} wording" for f in flags},
    })


def expected_prediction(script):
    """Final labels after retry/repair, per the stub's scripted behavior."""
    if script == "violation":
        return frozenset({"F1"})  # neutral dropped by repair
    if script == "garbage":
        return frozenset({"F11"})  # unparseable fallback
    return frozenset(script)


def build():
    FIXTURES.mkdir(parents=True, exist_ok=True)

    contributions = []
    truth_entries = []
    transcript_items = []
    predictions = {}
    truth = {}
    for index, (token, text, truth_flags, script) in enumerate(PLAN):
        cid = f"mockorg/mockrepo/issues/{token}"
        body = f"[{token}] {text}"
        contributions.append(Contribution(
            id=cid,
            repo="mockorg/mockrepo",
            kind="issue" if index % 2 == 0 else "comment",
            body=body,
            created_at=START + timedelta(hours=index),
            author_key=f"{index:012x}",
            url=f"https://github.com/mockorg/mockrepo/issues/{index + 1}",
        ))
        truth_entries.append(GroundTruthEntry(cid, FlagSet.of(*truth_flags)))
        if script == "violation":
            reply = VIOLATION_REPLY
        elif script == "garbage":
            reply = GARBAGE_REPLY
        else:
            reply = reply_for(script)
        transcript_items.append({"match": f"[{token}]", "replies": [reply]})
        predictions[cid] = expected_prediction(script)
        truth[cid] = frozenset(truth_flags)

    save_dataset(contributions, FIXTURES / "mock_contributions.jsonl")
    save_dataset(truth_entries, FIXTURES / "mock_truth.jsonl")
    (FIXTURES / "mock_transcript.json").write_text(
        json.dumps({"items": transcript_items}, indent=2) + "\n",
        encoding="utf-8")
    (FIXTURES / "mock_transcript_empty.json").write_text(
        json.dumps({"items": []}) + "\n", encoding="utf-8")

    golden = golden_report(predictions, truth)
    (FIXTURES / "golden_eval.json").write_text(
        json.dumps(golden, indent=2) + "\n", encoding="utf-8")
    print(f"wrote fixtures for {len(PLAN)} items to {FIXTURES}")


def golden_report(predictions, truth):
    """Oracle-side reconstruction of the evaluation report JSON."""
    counts = oracles.oracle_counts(predictions, truth)
    n = len(truth)

    per_flag = {}
    for flag, (tp, fp, fn, tn) in counts.items():
        p, r, f1 = oracles._prf(tp, fp, fn)
        per_flag[flag] = {"precision": p, "recall": r, "f1": f1,
                          "tp": tp, "fp": fp, "fn": fn, "tn": tn}

    scopes = {}
    scope_flags = {
        "positive_neutral": ["F1", "F2", "F3", "F4", "F5", "F11"],
        "negative": ["F6", "F7", "F8", "F9"],
        "overall": oracles.ACTIVE,
    }
    for scope, flags in scope_flags.items():
        micro = oracles.oracle_micro(counts, flags)
        macro = oracles.oracle_macro(counts, flags)
        scopes[scope] = {
            "micro": dict(zip(("precision", "recall", "f1"), micro)),
            "macro": dict(zip(("precision", "recall", "f1"), macro)),
        }

    example = oracles.oracle_example_metrics(predictions, truth)
    zero_denominator = sorted(
        (f for f, (tp, fp, fn, _) in counts.items()
         if tp + fp == 0 or tp + fn == 0),
        key=lambda f: int(f[1:]))
    return {
        "evaluated": n,
        "per_flag": per_flag,
        "scopes": scopes,
        "subset_accuracy": oracles.oracle_subset_accuracy(predictions, truth),
        "example_precision": example[0],
        "example_recall": example[1],
        "example_f1": example[2],
        "zero_denominator_flags": zero_denominator,
    }


if __name__ == "__main__":
    build()
