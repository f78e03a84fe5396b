"""Corpus data model and persistence.

Datasets are UTF-8 line-delimited JSON: one record per line, each line
carrying a "record" discriminator (contribution, annotation,
ground_truth, prediction).  A sibling <stem>.manifest.json documents
counts and provenance.  Flags serialize everywhere as string arrays
like ["F1", "F3"].
"""

from __future__ import annotations

import hashlib
import hmac
import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import EthoscanError
from .taxonomy import FlagSet, UnknownFlagError, validate_flag_set

MINED = "mined"
SYNTHETIC = "synthetic"


class CorpusError(EthoscanError):
    pass


class DatasetError(CorpusError):
    """A dataset file line failed schema or flag validation."""


def parse_timestamp(value: str) -> datetime:
    """ISO-8601 parse tolerant of a trailing Z; result is UTC-aware."""
    try:
        ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError as exc:
        raise DatasetError(f"bad timestamp {value!r}: {exc}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat()


def pseudonymize_author(login: str, key: str) -> str:
    """Keyed one-way hash of a platform login (12 hex chars)."""
    digest = hmac.new(key.encode("utf-8"), login.encode("utf-8"),
                      hashlib.sha256).hexdigest()
    return digest[:12]


@dataclass(frozen=True)
class Contribution:
    """One non-coding contribution: an issue (title+body) or a comment."""

    id: str
    repo: str
    kind: str  # "issue" | "comment"
    body: str
    created_at: datetime
    author_key: str
    source: str = MINED  # "mined" | "synthetic"
    url: str | None = None
    target_flags: FlagSet | None = None  # synthetic only: flag(s) it was written to exhibit

    def __post_init__(self):
        if self.kind not in ("issue", "comment"):
            raise CorpusError(f"contribution {self.id}: bad kind {self.kind!r}")
        if self.source not in (MINED, SYNTHETIC):
            raise CorpusError(f"contribution {self.id}: bad source {self.source!r}")
        if not self.body.strip():
            raise CorpusError(f"contribution {self.id}: empty body")
        if self.source == SYNTHETIC and self.target_flags is None:
            raise CorpusError(
                f"contribution {self.id}: synthetic records need target_flags")


@dataclass(frozen=True)
class AnnotationRecord:
    contribution_id: str
    annotator_id: str
    labels: FlagSet
    annotated_at: datetime


@dataclass(frozen=True)
class GroundTruthEntry:
    contribution_id: str
    labels: FlagSet
    agreement: str = "full"


@dataclass(frozen=True)
class PredictionRecord:
    """One parsed, validated classifier verdict for one contribution."""

    contribution_id: str
    run_id: int
    labels: FlagSet
    rationale: Mapping[str, str]
    raw_output: str
    spec_version: str
    model: str
    repaired: bool = False
    needs_review: bool = False
    latency: float = 0.0
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.run_id < 1:
            raise CorpusError(f"{self.contribution_id}: run_id must be >= 1")
        extra = set(self.rationale) - set(self.labels.flags)
        if extra:
            raise CorpusError(
                f"{self.contribution_id}: rationale for unassigned flags {sorted(extra)}")


Record = Contribution | AnnotationRecord | GroundTruthEntry | PredictionRecord


def _labels_to_json(labels: FlagSet) -> list[str]:
    return labels.sorted_ids()


def _labels_from_json(value, where: str) -> FlagSet:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise DatasetError(f"{where}: labels must be an array of strings")
    try:
        verdict = validate_flag_set(value)
    except UnknownFlagError as exc:
        raise DatasetError(f"{where}: {exc}") from None
    if not verdict.valid:
        raise DatasetError(f"{where}: {', '.join(verdict.violations)}")
    return FlagSet.from_ids(value)


def record_to_json(record: Record) -> dict:
    if isinstance(record, Contribution):
        return {
            "record": "contribution",
            "id": record.id,
            "repo": record.repo,
            "kind": record.kind,
            "body": record.body,
            "created_at": format_timestamp(record.created_at),
            "author_key": record.author_key,
            "source": record.source,
            "url": record.url,
            "target_flags": (_labels_to_json(record.target_flags)
                             if record.target_flags else None),
        }
    if isinstance(record, AnnotationRecord):
        return {
            "record": "annotation",
            "contribution_id": record.contribution_id,
            "annotator_id": record.annotator_id,
            "labels": _labels_to_json(record.labels),
            "annotated_at": format_timestamp(record.annotated_at),
        }
    if isinstance(record, GroundTruthEntry):
        return {
            "record": "ground_truth",
            "contribution_id": record.contribution_id,
            "labels": _labels_to_json(record.labels),
            "agreement": record.agreement,
        }
    if isinstance(record, PredictionRecord):
        return {
            "record": "prediction",
            "contribution_id": record.contribution_id,
            "run_id": record.run_id,
            "labels": _labels_to_json(record.labels),
            "rationale": dict(record.rationale),
            "raw_output": record.raw_output,
            "spec_version": record.spec_version,
            "model": record.model,
            "repaired": record.repaired,
            "needs_review": record.needs_review,
            "latency": record.latency,
            "notes": list(record.notes),
        }
    raise CorpusError(f"unserializable record type {type(record).__name__}")


def _require(obj: dict, keys: Sequence[str], where: str) -> None:
    missing = [k for k in keys if k not in obj]
    if missing:
        raise DatasetError(f"{where}: missing field(s) {', '.join(missing)}")


def record_from_json(obj: dict, where: str = "record") -> Record:
    kind = obj.get("record")
    if kind == "contribution":
        _require(obj, ["id", "repo", "kind", "body", "created_at",
                       "author_key", "source"], where)
        target = obj.get("target_flags")
        try:
            return Contribution(
                id=obj["id"],
                repo=obj["repo"],
                kind=obj["kind"],
                body=obj["body"],
                created_at=parse_timestamp(obj["created_at"]),
                author_key=obj["author_key"],
                source=obj["source"],
                url=obj.get("url"),
                target_flags=(_labels_from_json(target, where)
                              if target else None),
            )
        except CorpusError as exc:
            raise DatasetError(f"{where}: {exc}") from None
    if kind == "annotation":
        _require(obj, ["contribution_id", "annotator_id", "labels",
                       "annotated_at"], where)
        return AnnotationRecord(
            contribution_id=obj["contribution_id"],
            annotator_id=obj["annotator_id"],
            labels=_labels_from_json(obj["labels"], where),
            annotated_at=parse_timestamp(obj["annotated_at"]),
        )
    if kind == "ground_truth":
        _require(obj, ["contribution_id", "labels"], where)
        return GroundTruthEntry(
            contribution_id=obj["contribution_id"],
            labels=_labels_from_json(obj["labels"], where),
            agreement=obj.get("agreement", "full"),
        )
    if kind == "prediction":
        _require(obj, ["contribution_id", "run_id", "labels", "raw_output",
                       "spec_version", "model"], where)
        try:
            return PredictionRecord(
                contribution_id=obj["contribution_id"],
                run_id=obj["run_id"],
                labels=_labels_from_json(obj["labels"], where),
                rationale=obj.get("rationale") or {},
                raw_output=obj["raw_output"],
                spec_version=obj["spec_version"],
                model=obj["model"],
                repaired=obj.get("repaired", False),
                needs_review=obj.get("needs_review", False),
                latency=obj.get("latency", 0.0),
                notes=tuple(obj.get("notes") or ()),
            )
        except CorpusError as exc:
            raise DatasetError(f"{where}: {exc}") from None
    raise DatasetError(f"{where}: unknown record type {kind!r}")


def _dedup_key(record: Record):
    if isinstance(record, Contribution):
        return ("contribution", record.id)
    if isinstance(record, AnnotationRecord):
        return ("annotation", record.contribution_id, record.annotator_id)
    if isinstance(record, GroundTruthEntry):
        return ("ground_truth", record.contribution_id)
    return ("prediction", record.contribution_id, record.run_id)


def save_dataset(entries: Iterable[Record], path: str | Path) -> int:
    """Write records as JSONL; returns the number of lines written."""
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8") as out:
        for record in entries:
            out.write(json.dumps(record_to_json(record), ensure_ascii=False))
            out.write("\n")
            n += 1
    return n


def load_dataset(path: str | Path) -> list[Record]:
    """Read a JSONL dataset, validating every line.

    Rejects malformed JSON, schema violations, invalid flag sets, and
    duplicate record keys, always naming the offending line.
    """
    path = Path(path)
    records: list[Record] = []
    seen: set = set()
    try:
        src = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from None
    with src:
        for lineno, line in enumerate(src, start=1):
            if not line.strip():
                continue
            where = f"line {lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DatasetError(f"{where}: expected a JSON object")
            record = record_from_json(obj, where)
            key = _dedup_key(record)
            if key in seen:
                raise DatasetError(
                    f"{where}: duplicate {key[0]} id {'/'.join(str(k) for k in key[1:])}")
            seen.add(key)
            records.append(record)
    return records


@dataclass
class DatasetManifest:
    """Sidecar document describing a dataset file's contents."""

    dataset_id: str
    created_at: datetime
    sample_seed: int | None = None
    counts_by_record: dict[str, int] = field(default_factory=dict)
    counts_by_source: dict[str, int] = field(default_factory=dict)
    counts_by_flag: dict[str, int] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "created_at": format_timestamp(self.created_at),
            "sample_seed": self.sample_seed,
            "counts": {
                "by_record": self.counts_by_record,
                "by_source": self.counts_by_source,
                "by_flag": self.counts_by_flag,
            },
            "notes": self.notes,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetManifest":
        counts = obj.get("counts", {})
        return cls(
            dataset_id=obj["dataset_id"],
            created_at=parse_timestamp(obj["created_at"]),
            sample_seed=obj.get("sample_seed"),
            counts_by_record=dict(counts.get("by_record", {})),
            counts_by_source=dict(counts.get("by_source", {})),
            counts_by_flag=dict(counts.get("by_flag", {})),
            notes=list(obj.get("notes", [])),
        )


def build_manifest(entries: Sequence[Record], dataset_id: str,
                   sample_seed: int | None = None,
                   notes: Iterable[str] = ()) -> DatasetManifest:
    by_record: dict[str, int] = {}
    by_source: dict[str, int] = {}
    by_flag: dict[str, int] = {}
    for record in entries:
        by_record[_dedup_key(record)[0]] = by_record.get(_dedup_key(record)[0], 0) + 1
        if isinstance(record, Contribution):
            by_source[record.source] = by_source.get(record.source, 0) + 1
        labels = getattr(record, "labels", None) or getattr(record, "target_flags", None)
        if labels is not None:
            for flag_id in labels:
                by_flag[flag_id] = by_flag.get(flag_id, 0) + 1
    return DatasetManifest(
        dataset_id=dataset_id,
        created_at=datetime.now(timezone.utc),
        sample_seed=sample_seed,
        counts_by_record=by_record,
        counts_by_source=by_source,
        counts_by_flag=by_flag,
        notes=list(notes),
    )


def manifest_path_for(dataset_path: str | Path) -> Path:
    dataset_path = Path(dataset_path)
    return dataset_path.with_name(dataset_path.stem + ".manifest.json")


def save_manifest(manifest: DatasetManifest, dataset_path: str | Path) -> Path:
    path = manifest_path_for(dataset_path)
    path.write_text(json.dumps(manifest.to_json(), indent=2) + "\n",
                    encoding="utf-8")
    return path


def load_manifest(dataset_path: str | Path) -> DatasetManifest:
    path = manifest_path_for(dataset_path)
    return DatasetManifest.from_json(json.loads(path.read_text(encoding="utf-8")))


def sample_contributions(pool: Sequence[Contribution], n: int, seed: int,
                         kind_quota: Mapping[str, int] | None = None,
                         ) -> list[Contribution]:
    """Seeded uniform sample without replacement, independent of pool order.

    The pool is sorted by contribution id before drawing, so refetching
    in a different order cannot change the sample.  kind_quota optionally
    stratifies by record kind (e.g. {"issue": 600, "comment": 400}); the
    quotas must sum to n.  Default is unstratified.
    """
    if n > len(pool):
        raise CorpusError(f"sample size {n} exceeds pool size {len(pool)}")
    ordered = sorted(pool, key=lambda c: c.id)
    rng = random.Random(seed)
    if kind_quota is None:
        picked = rng.sample(ordered, n)
        return sorted(picked, key=lambda c: c.id)

    if sum(kind_quota.values()) != n:
        raise CorpusError(
            f"kind quotas {dict(kind_quota)} do not sum to n={n}")
    picked = []
    for kind, quota in sorted(kind_quota.items()):
        of_kind = [c for c in ordered if c.kind == kind]
        if quota > len(of_kind):
            raise CorpusError(
                f"quota {quota} exceeds the {len(of_kind)} available "
                f"{kind} records")
        picked.extend(rng.sample(of_kind, quota))
    return sorted(picked, key=lambda c: c.id)


@dataclass
class GroundTruthResult:
    entries: list[GroundTruthEntry]
    dropped: int
    contribution_ids: list[str]
    # annotator id -> {contribution id -> labels}; the paired matrix the
    # kappa computation consumes.
    labels_by_annotator: dict[str, dict[str, FlagSet]]

    @property
    def total(self) -> int:
        return len(self.entries) + self.dropped


def build_ground_truth(annotations: Iterable[AnnotationRecord],
                       annotators: Sequence[str] | None = None) -> GroundTruthResult:
    """Keep only unanimously labeled contributions as ground truth.

    Every contribution must carry exactly one record per annotator
    (default: the set of annotator ids seen anywhere in the input);
    anything else is a coverage error listing the offending ids.
    """
    records = list(annotations)
    annotator_set = (set(annotators) if annotators is not None
                     else {r.annotator_id for r in records})
    if len(annotator_set) < 1:
        raise CorpusError("no annotations supplied")

    by_contribution: dict[str, dict[str, AnnotationRecord]] = {}
    for record in records:
        if record.annotator_id not in annotator_set:
            raise CorpusError(
                f"annotator {record.annotator_id!r} outside configured set "
                f"{sorted(annotator_set)}")
        per = by_contribution.setdefault(record.contribution_id, {})
        if record.annotator_id in per:
            raise CorpusError(
                f"duplicate annotation for {record.contribution_id} "
                f"by {record.annotator_id}")
        per[record.annotator_id] = record

    incomplete = sorted(cid for cid, per in by_contribution.items()
                        if set(per) != annotator_set)
    if incomplete:
        raise CorpusError(
            f"contributions missing annotators: {', '.join(incomplete)}")

    ids = sorted(by_contribution)
    entries: list[GroundTruthEntry] = []
    dropped = 0
    for cid in ids:
        label_sets = {per.labels.flags for per in by_contribution[cid].values()}
        if len(label_sets) == 1:
            entries.append(GroundTruthEntry(cid, FlagSet(label_sets.pop())))
        else:
            dropped += 1

    labels_by_annotator = {
        annotator: {cid: by_contribution[cid][annotator].labels for cid in ids}
        for annotator in sorted(annotator_set)
    }
    return GroundTruthResult(entries, dropped, ids, labels_by_annotator)
