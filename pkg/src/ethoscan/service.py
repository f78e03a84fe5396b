"""HTTP service for the human annotation and review workflow.

Serves per-annotator label queues, accepts validated verdicts, exposes
live agreement statistics, and lists classifier outputs needing review.
Annotators are blind to each other's labels until an item is complete;
the server re-validates every submission regardless of client behavior.
State persists through the corpus dataset files (annotations are
appended as JSONL), so the service is restart-safe.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .corpus import (
    AnnotationRecord,
    Contribution,
    GroundTruthEntry,
    PredictionRecord,
    build_ground_truth,
    format_timestamp,
    load_dataset,
    record_to_json,
)
from .errors import EthoscanError
from .metrics import cohen_kappa
from .taxonomy import FLAGS, FlagSet, UnknownFlagError, validate_flag_set


class ServiceError(EthoscanError):
    pass


@dataclass
class SubmitOutcome:
    accepted: bool
    reasons: list[str] = field(default_factory=list)
    status: int = 200
    item_complete: bool = False


class AnnotationStore:
    """In-memory annotation state with append-only JSONL persistence.

    All writes go through one lock; agreement and ground truth are
    recomputed inside the same critical section as the triggering
    submission, so readers always see a consistent snapshot.
    """

    def __init__(self, contributions: Sequence[Contribution],
                 annotators: Sequence[str],
                 annotations_path: str | Path | None = None,
                 predictions: Sequence[PredictionRecord] = ()):
        if not annotators:
            raise ServiceError("at least one annotator id is required")
        self._contributions = {c.id: c for c in contributions}
        self._queue_order = sorted(self._contributions)
        self._annotators = list(dict.fromkeys(annotators))
        self._annotations: dict[tuple[str, str], AnnotationRecord] = {}
        self._predictions = list(predictions)
        self._path = Path(annotations_path) if annotations_path else None
        self._lock = threading.Lock()
        if self._path and self._path.exists():
            for record in load_dataset(self._path):
                if isinstance(record, AnnotationRecord):
                    self._annotations[(record.contribution_id,
                                       record.annotator_id)] = record

    @property
    def annotators(self) -> list[str]:
        return list(self._annotators)

    def is_registered(self, annotator_id: str) -> bool:
        return annotator_id in self._annotators

    def has_contribution(self, contribution_id: str) -> bool:
        return contribution_id in self._contributions

    def next_item(self, annotator_id: str) -> dict | None:
        """Lowest-id contribution this annotator has not labeled yet.

        Never reveals other annotators' labels.
        """
        with self._lock:
            for cid in self._queue_order:
                if (cid, annotator_id) in self._annotations:
                    continue
                contribution = self._contributions[cid]
                pending = [a for a in self._annotators
                           if (cid, a) not in self._annotations]
                remaining = sum(
                    1 for other in self._queue_order
                    if (other, annotator_id) not in self._annotations)
                return {
                    "contribution": {
                        "id": contribution.id,
                        "repo": contribution.repo,
                        "kind": contribution.kind,
                        "body": contribution.body,
                        "created_at": format_timestamp(contribution.created_at),
                        "source": contribution.source,
                    },
                    "pending_annotators": pending,
                    "remaining_for_annotator": remaining,
                }
            return None

    def submit(self, annotator_id: str, contribution_id: str,
               flags: Sequence[str]) -> SubmitOutcome:
        with self._lock:
            if (contribution_id, annotator_id) in self._annotations:
                return SubmitOutcome(False, ["already labeled"], status=409)
            try:
                verdict = validate_flag_set(flags)
            except UnknownFlagError as exc:
                return SubmitOutcome(False, [str(exc)], status=422)
            if not verdict.valid:
                return SubmitOutcome(False, list(verdict.violations), status=422)
            record = AnnotationRecord(
                contribution_id=contribution_id,
                annotator_id=annotator_id,
                labels=FlagSet.from_ids(flags),
                annotated_at=datetime.now(timezone.utc),
            )
            self._annotations[(contribution_id, annotator_id)] = record
            if self._path:
                with self._path.open("a", encoding="utf-8") as out:
                    import json

                    out.write(json.dumps(record_to_json(record),
                                         ensure_ascii=False) + "\n")
            complete = all((contribution_id, a) in self._annotations
                           for a in self._annotators)
            return SubmitOutcome(True, item_complete=complete)

    def _complete_records(self) -> list[AnnotationRecord]:
        complete_ids = [
            cid for cid in self._queue_order
            if all((cid, a) in self._annotations for a in self._annotators)
        ]
        return [self._annotations[(cid, a)] for cid in complete_ids
                for a in self._annotators]

    def ground_truth(self) -> list[GroundTruthEntry]:
        with self._lock:
            records = self._complete_records()
        if not records:
            return []
        return build_ground_truth(records, annotators=self._annotators).entries

    def agreement_payload(self) -> dict:
        with self._lock:
            records = self._complete_records()
        if not records:
            return {"complete_items": 0, "unanimity_pct": None,
                    "macro_kappa": None, "per_flag_kappa": {},
                    "disagreements": []}
        result = build_ground_truth(records, annotators=self._annotators)
        n = result.total
        disagreements = []
        unanimous_ids = {e.contribution_id for e in result.entries}
        for cid in result.contribution_ids:
            if cid not in unanimous_ids:
                disagreements.append({
                    "contribution_id": cid,
                    "labels": {a: result.labels_by_annotator[a][cid].sorted_ids()
                               for a in self._annotators},
                })
        payload = {
            "complete_items": n,
            "unanimity_pct": round(100.0 * len(result.entries) / n, 2),
            "macro_kappa": None,
            "per_flag_kappa": {},
            "disagreements": disagreements,
        }
        if len(self._annotators) == 2:
            a, b = self._annotators
            report = cohen_kappa(result.labels_by_annotator[a],
                                 result.labels_by_annotator[b])
            payload["macro_kappa"] = report.macro_kappa
            payload["per_flag_kappa"] = {
                f: agreement.kappa
                for f, agreement in report.per_flag.items() if agreement.used
            }
        return payload

    def review_records(self) -> list[dict]:
        """Predictions that were repaired or flagged for review."""
        out = []
        for record in self._predictions:
            if not (record.repaired or record.needs_review):
                continue
            contribution = self._contributions.get(record.contribution_id)
            out.append({
                "contribution_id": record.contribution_id,
                "body": contribution.body if contribution else None,
                "labels": record.labels.sorted_ids(),
                "rationale": dict(record.rationale),
                "raw_output": record.raw_output,
                "repaired": record.repaired,
                "needs_review": record.needs_review,
                "notes": list(record.notes),
            })
        return out


class LabelSubmission(BaseModel):
    annotator: str
    contribution_id: str
    flags: list[str]


def flags_payload() -> dict:
    return {
        "flags": [
            {"id": f.id, "name": f.name, "description": f.description,
             "group": f.group.value, "active": f.active}
            for f in FLAGS.values()
        ]
    }


def create_app(store: AnnotationStore) -> FastAPI:
    app = FastAPI(title="ethoscan annotation service")

    @app.get("/flags")
    def get_flags():
        return flags_payload()

    @app.get("/queue/next")
    def queue_next(annotator: str):
        if not store.is_registered(annotator):
            return JSONResponse({"error": f"unknown annotator {annotator!r}"},
                                status_code=404)
        item = store.next_item(annotator)
        return {"item": item, "done": item is None}

    @app.post("/labels")
    def post_labels(submission: LabelSubmission):
        if not store.is_registered(submission.annotator):
            return JSONResponse(
                {"error": f"unknown annotator {submission.annotator!r}"},
                status_code=404)
        if not store.has_contribution(submission.contribution_id):
            return JSONResponse(
                {"error": f"unknown contribution {submission.contribution_id!r}"},
                status_code=404)
        outcome = store.submit(submission.annotator, submission.contribution_id,
                               submission.flags)
        body = {"accepted": outcome.accepted, "reasons": outcome.reasons,
                "item_complete": outcome.item_complete}
        return JSONResponse(body, status_code=outcome.status)

    @app.get("/agreement")
    def get_agreement():
        return store.agreement_payload()

    @app.get("/review")
    def get_review():
        return {"records": store.review_records()}

    return app


def load_store(dataset_path: str | Path, annotators: Sequence[str],
               annotations_path: str | Path | None = None,
               predictions_path: str | Path | None = None) -> AnnotationStore:
    """Build a store from dataset files (contributions + optional predictions)."""
    records = load_dataset(dataset_path)
    contributions = [r for r in records if isinstance(r, Contribution)]
    if not contributions:
        raise ServiceError(f"{dataset_path} contains no contributions")
    predictions: list[PredictionRecord] = []
    if predictions_path:
        predictions = [r for r in load_dataset(predictions_path)
                       if isinstance(r, PredictionRecord)]
    if annotations_path is None:
        dataset_path = Path(dataset_path)
        annotations_path = dataset_path.with_name(
            dataset_path.stem + ".annotations.jsonl")
    return AnnotationStore(contributions, annotators,
                           annotations_path=annotations_path,
                           predictions=predictions)
