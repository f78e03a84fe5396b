"""Repo-level ethical-profile reporting: flag distribution percentages
and cross-repo comparison tables.

The denominator is total flag occurrences, not total contributions: a
multi-label record contributes one occurrence per assigned flag, which
is what makes the rows sum to ~100.  Repaired and needs_review records
are included in the distribution but tallied separately in the quality
sidebar.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Iterable, Sequence

from .corpus import PredictionRecord
from .errors import EthoscanError
from .taxonomy import ACTIVE_FLAG_IDS, NEGATIVE_ACTIVE_FLAG_IDS


class ReportError(EthoscanError):
    pass


def _fmt_window(window: tuple[datetime | date, datetime | date] | None) -> str:
    if window is None:
        return ""
    start, end = window
    return f"{start.isoformat()}/{end.isoformat()}"


@dataclass
class DistributionReport:
    """Share of total flag occurrences per flag, two-decimal percentages."""

    repo: str
    percentages: dict[str, float]
    total_contributions: int
    total_flag_occurrences: int
    window: str = ""  # ISO "start/end", empty when unbounded
    n_repaired: int = 0
    n_needs_review: int = 0

    def __post_init__(self):
        missing = [f for f in ACTIVE_FLAG_IDS if f not in self.percentages]
        if missing:
            raise ReportError(f"distribution missing flags: {missing}")
        total = sum(self.percentages.values())
        if self.total_flag_occurrences and abs(total - 100.0) > 0.2:
            raise ReportError(
                f"distribution percentages sum to {total:.2f}, outside 100±0.2")

    def negative_share(self) -> float:
        return round(sum(self.percentages[f] for f in NEGATIVE_ACTIVE_FLAG_IDS), 2)

    def to_json(self) -> dict:
        return {
            "repo": self.repo,
            "window": self.window,
            "percentages": {f: self.percentages[f] for f in ACTIVE_FLAG_IDS},
            "total_contributions": self.total_contributions,
            "total_flag_occurrences": self.total_flag_occurrences,
            "quality": {
                "repaired": self.n_repaired,
                "needs_review": self.n_needs_review,
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DistributionReport":
        quality = obj.get("quality", {})
        return cls(
            repo=obj["repo"],
            percentages={f: float(v) for f, v in obj["percentages"].items()},
            total_contributions=obj["total_contributions"],
            total_flag_occurrences=obj["total_flag_occurrences"],
            window=obj.get("window", ""),
            n_repaired=quality.get("repaired", 0),
            n_needs_review=quality.get("needs_review", 0),
        )


CSV_HEADER = (["repo", "window"] + list(ACTIVE_FLAG_IDS)
              + ["negative_share", "total_contributions",
                 "total_flag_occurrences", "repaired", "needs_review"])


def distribution_csv(reports: Sequence[DistributionReport]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(CSV_HEADER)
    for report in reports:
        writer.writerow(
            [report.repo, report.window]
            + [f"{report.percentages[f]:.2f}" for f in ACTIVE_FLAG_IDS]
            + [f"{report.negative_share():.2f}", report.total_contributions,
               report.total_flag_occurrences, report.n_repaired,
               report.n_needs_review])
    return out.getvalue()


def distribution_from_csv(text: str) -> list[DistributionReport]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != CSV_HEADER:
        raise ReportError("unexpected distribution CSV header")
    reports = []
    for row in reader:
        if not row:
            continue
        values = dict(zip(header, row))
        reports.append(DistributionReport(
            repo=values["repo"],
            window=values["window"],
            percentages={f: float(values[f]) for f in ACTIVE_FLAG_IDS},
            total_contributions=int(values["total_contributions"]),
            total_flag_occurrences=int(values["total_flag_occurrences"]),
            n_repaired=int(values["repaired"]),
            n_needs_review=int(values["needs_review"]),
        ))
    return reports


def flag_distribution(records: Sequence[PredictionRecord], repo: str,
                      window: tuple[datetime | date, datetime | date] | None = None,
                      ) -> DistributionReport:
    """Distribution of flag occurrences over one repo's predictions."""
    if not records:
        raise ReportError("no prediction records to summarize")
    occurrences = {f: 0 for f in ACTIVE_FLAG_IDS}
    repaired = review = 0
    for record in records:
        for flag_id in record.labels:
            occurrences[flag_id] += 1
        repaired += record.repaired
        review += record.needs_review
    total = sum(occurrences.values())
    return DistributionReport(
        repo=repo,
        percentages={f: round(100.0 * c / total, 2)
                     for f, c in occurrences.items()},
        total_contributions=len(records),
        total_flag_occurrences=total,
        window=_fmt_window(window),
        n_repaired=repaired,
        n_needs_review=review,
    )


@dataclass
class ComparisonTable:
    """One row per repo, one column per flag, plus the negative-flag share."""

    rows: list[DistributionReport] = field(default_factory=list)

    def to_csv(self) -> str:
        return distribution_csv(self.rows)

    def to_json(self) -> dict:
        return {
            "flags": list(ACTIVE_FLAG_IDS),
            "rows": [
                {
                    "repo": r.repo,
                    "percentages": [r.percentages[f] for f in ACTIVE_FLAG_IDS],
                    "negative_share": r.negative_share(),
                }
                for r in self.rows
            ],
        }


def compare_repos(reports: Iterable[DistributionReport]) -> ComparisonTable:
    rows = list(reports)
    if len(rows) < 2:
        raise ReportError("comparison needs at least two repo reports")
    seen: set[str] = set()
    for report in rows:
        if report.repo in seen:
            raise ReportError(f"duplicate repo row: {report.repo}")
        seen.add(report.repo)
    return ComparisonTable(rows)
