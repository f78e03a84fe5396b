"""Evaluation metric suite: per-flag counts, micro/macro aggregation,
multi-label metrics, annotator agreement, and run-consistency statistics.

All operations are pure functions over mappings from contribution id to
a flag set.  Conventions pinned here: a flag with no predictions (or no
occurrences) contributes precision (or recall) 0 to macro averages and
is listed in zero_denominator_flags; micro F1 is the harmonic mean of
micro precision and recall; macro F1 is the arithmetic mean of per-flag
F1 values.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import AbstractSet, Mapping, Sequence

from .errors import EthoscanError
from .taxonomy import (
    ACTIVE_FLAG_IDS,
    NEGATIVE_ACTIVE_FLAG_IDS,
    NEUTRAL_FLAG_ID,
    POSITIVE_FLAG_IDS,
)

LabelMap = Mapping[str, AbstractSet[str]]

SCOPE_POSITIVE_NEUTRAL = "positive_neutral"
SCOPE_NEGATIVE = "negative"
SCOPE_OVERALL = "overall"

SCOPES: dict[str, tuple[str, ...]] = {
    SCOPE_POSITIVE_NEUTRAL: POSITIVE_FLAG_IDS + (NEUTRAL_FLAG_ID,),
    SCOPE_NEGATIVE: NEGATIVE_ACTIVE_FLAG_IDS,
    SCOPE_OVERALL: ACTIVE_FLAG_IDS,
}

SCOPE_TITLES = {
    SCOPE_POSITIVE_NEUTRAL: "F1-F5, F11",
    SCOPE_NEGATIVE: "F6-F9",
    SCOPE_OVERALL: "Overall",
}


class MetricsError(EthoscanError):
    pass


def _check_alignment(predictions: LabelMap, truth: LabelMap) -> None:
    if predictions.keys() != truth.keys():
        only_pred = sorted(predictions.keys() - truth.keys())
        only_truth = sorted(truth.keys() - predictions.keys())
        raise MetricsError(
            f"prediction/truth id mismatch: only in predictions {only_pred}, "
            f"only in truth {only_truth}")


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class FlagCounts:
    per_flag: dict[str, Counts]
    n_items: int


def per_flag_counts(predictions: LabelMap, truth: LabelMap) -> FlagCounts:
    """Per-flag confusion counts over aligned contribution ids."""
    _check_alignment(predictions, truth)
    tallies = {f: [0, 0, 0, 0] for f in ACTIVE_FLAG_IDS}
    for cid, predicted in predictions.items():
        actual = truth[cid]
        for flag_id in ACTIVE_FLAG_IDS:
            in_pred = flag_id in predicted
            in_truth = flag_id in actual
            if in_pred and in_truth:
                tallies[flag_id][0] += 1
            elif in_pred:
                tallies[flag_id][1] += 1
            elif in_truth:
                tallies[flag_id][2] += 1
            else:
                tallies[flag_id][3] += 1
    return FlagCounts(
        per_flag={f: Counts(*t) for f, t in tallies.items()},
        n_items=len(predictions),
    )


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def _harmonic(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if (p + r) else 0.0


def flag_prf(counts: Counts) -> PRF:
    p = _safe_div(counts.tp, counts.tp + counts.fp)
    r = _safe_div(counts.tp, counts.tp + counts.fn)
    return PRF(p, r, _harmonic(p, r))


def aggregate(counts: FlagCounts, flag_subset: Sequence[str],
              mode: str) -> PRF:
    """Micro pools counts across the subset; macro averages per-flag values.

    Zero-denominator flags contribute 0 under macro (see
    flags_with_zero_denominator for which ones those were).
    """
    if not flag_subset:
        raise MetricsError("flag subset must be non-empty")
    if mode == "micro":
        tp = sum(counts.per_flag[f].tp for f in flag_subset)
        fp = sum(counts.per_flag[f].fp for f in flag_subset)
        fn = sum(counts.per_flag[f].fn for f in flag_subset)
        p = _safe_div(tp, tp + fp)
        r = _safe_div(tp, tp + fn)
        return PRF(p, r, _harmonic(p, r))
    if mode == "macro":
        values = [flag_prf(counts.per_flag[f]) for f in flag_subset]
        n = len(values)
        return PRF(
            sum(v.precision for v in values) / n,
            sum(v.recall for v in values) / n,
            sum(v.f1 for v in values) / n,
        )
    raise MetricsError(f"unknown aggregation mode {mode!r}")


def flags_with_zero_denominator(counts: FlagCounts) -> list[str]:
    """Flags whose precision or recall denominator pooled to zero."""
    out = []
    for flag_id, c in counts.per_flag.items():
        if c.tp + c.fp == 0 or c.tp + c.fn == 0:
            out.append(flag_id)
    return sorted(out, key=lambda f: int(f[1:]))


@dataclass(frozen=True)
class MultilabelMetrics:
    subset_accuracy: float
    example_precision: float
    example_recall: float
    example_f1: float


def multilabel_metrics(predictions: LabelMap, truth: LabelMap) -> MultilabelMetrics:
    """Subset accuracy plus example-based P/R/F1 averaged over items.

    Flag sets are non-empty by construction, so the per-item denominators
    never vanish.
    """
    _check_alignment(predictions, truth)
    if not predictions:
        raise MetricsError("cannot evaluate an empty item set")
    n = len(predictions)
    exact = 0
    p_sum = r_sum = f_sum = 0.0
    for cid, predicted in predictions.items():
        actual = truth[cid]
        inter = len(set(predicted) & set(actual))
        if set(predicted) == set(actual):
            exact += 1
        p = inter / len(predicted)
        r = inter / len(actual)
        p_sum += p
        r_sum += r
        f_sum += _harmonic(p, r)
    return MultilabelMetrics(exact / n, p_sum / n, r_sum / n, f_sum / n)


@dataclass
class EvaluationReport:
    """Everything the evaluation rendering needs, one per run comparison."""

    evaluated: int
    per_flag: dict[str, PRF]
    counts: FlagCounts
    scopes: dict[str, dict[str, PRF]]  # scope -> {"micro": PRF, "macro": PRF}
    subset_accuracy: float
    example_precision: float
    example_recall: float
    example_f1: float
    zero_denominator_flags: list[str] = field(default_factory=list)

    def metric(self, selector: str) -> float:
        """Resolve a metric selector like "macro_precision_overall"."""
        flat = {
            "subset_accuracy": self.subset_accuracy,
            "example_precision": self.example_precision,
            "example_recall": self.example_recall,
            "example_f1": self.example_f1,
        }
        if selector in flat:
            return flat[selector]
        for scope, modes in self.scopes.items():
            for mode, prf in modes.items():
                flat[f"{mode}_precision_{scope}"] = prf.precision
                flat[f"{mode}_recall_{scope}"] = prf.recall
                flat[f"{mode}_f1_{scope}"] = prf.f1
        try:
            return flat[selector]
        except KeyError:
            raise MetricsError(
                f"unknown metric selector {selector!r}; one of "
                f"{', '.join(sorted(flat))}") from None

    def to_json(self) -> dict:
        return {
            "evaluated": self.evaluated,
            "per_flag": {
                f: {"precision": v.precision, "recall": v.recall, "f1": v.f1,
                    "tp": self.counts.per_flag[f].tp,
                    "fp": self.counts.per_flag[f].fp,
                    "fn": self.counts.per_flag[f].fn,
                    "tn": self.counts.per_flag[f].tn}
                for f, v in self.per_flag.items()
            },
            "scopes": {
                scope: {
                    mode: {"precision": prf.precision, "recall": prf.recall,
                           "f1": prf.f1}
                    for mode, prf in modes.items()
                }
                for scope, modes in self.scopes.items()
            },
            "subset_accuracy": self.subset_accuracy,
            "example_precision": self.example_precision,
            "example_recall": self.example_recall,
            "example_f1": self.example_f1,
            "zero_denominator_flags": self.zero_denominator_flags,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EvaluationReport":
        per_flag = {}
        counts = {}
        for f, v in obj["per_flag"].items():
            per_flag[f] = PRF(v["precision"], v["recall"], v["f1"])
            counts[f] = Counts(v.get("tp", 0), v.get("fp", 0),
                               v.get("fn", 0), v.get("tn", 0))
        return cls(
            evaluated=obj["evaluated"],
            per_flag=per_flag,
            counts=FlagCounts(counts, obj["evaluated"]),
            scopes={
                scope: {mode: PRF(prf["precision"], prf["recall"], prf["f1"])
                        for mode, prf in modes.items()}
                for scope, modes in obj["scopes"].items()
            },
            subset_accuracy=obj["subset_accuracy"],
            example_precision=obj["example_precision"],
            example_recall=obj["example_recall"],
            example_f1=obj["example_f1"],
            zero_denominator_flags=list(obj.get("zero_denominator_flags", [])),
        )

    def to_scope_csv(self) -> str:
        """Scope rows with micro/macro P/R/F1 columns."""
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["flags", "micro_precision", "macro_precision",
                         "micro_recall", "macro_recall",
                         "micro_f1", "macro_f1"])
        for scope in (SCOPE_POSITIVE_NEUTRAL, SCOPE_NEGATIVE, SCOPE_OVERALL):
            micro, macro = self.scopes[scope]["micro"], self.scopes[scope]["macro"]
            writer.writerow([
                SCOPE_TITLES[scope],
                f"{micro.precision:.4f}", f"{macro.precision:.4f}",
                f"{micro.recall:.4f}", f"{macro.recall:.4f}",
                f"{micro.f1:.4f}", f"{macro.f1:.4f}",
            ])
        return out.getvalue()

    def to_flag_matrix(self) -> dict:
        """Per-flag metric matrix for external heatmap rendering."""
        return {
            "flags": list(ACTIVE_FLAG_IDS),
            "metrics": ["precision", "recall", "f1"],
            "values": [
                [self.per_flag[f].precision, self.per_flag[f].recall,
                 self.per_flag[f].f1]
                for f in ACTIVE_FLAG_IDS
            ],
        }

    def to_flag_matrix_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["flag", "precision", "recall", "f1"])
        for f in ACTIVE_FLAG_IDS:
            v = self.per_flag[f]
            writer.writerow([f, f"{v.precision:.4f}", f"{v.recall:.4f}",
                             f"{v.f1:.4f}"])
        return out.getvalue()


def evaluate(predictions: LabelMap, truth: LabelMap) -> EvaluationReport:
    """Full report: per-flag metrics, the three scopes, multi-label metrics."""
    counts = per_flag_counts(predictions, truth)
    multi = multilabel_metrics(predictions, truth)
    return EvaluationReport(
        evaluated=counts.n_items,
        per_flag={f: flag_prf(c) for f, c in counts.per_flag.items()},
        counts=counts,
        scopes={
            scope: {"micro": aggregate(counts, flags, "micro"),
                    "macro": aggregate(counts, flags, "macro")}
            for scope, flags in SCOPES.items()
        },
        subset_accuracy=multi.subset_accuracy,
        example_precision=multi.example_precision,
        example_recall=multi.example_recall,
        example_f1=multi.example_f1,
        zero_denominator_flags=flags_with_zero_denominator(counts),
    )


@dataclass(frozen=True)
class FlagAgreement:
    kappa: float | None  # None when expected agreement is 1 (undefined)
    observed: float
    expected: float
    used: bool  # at least one annotator applied the flag somewhere


@dataclass
class AgreementReport:
    per_flag: dict[str, FlagAgreement]
    macro_kappa: float | None
    n_items: int

    def to_json(self) -> dict:
        return {
            "n_items": self.n_items,
            "macro_kappa": self.macro_kappa,
            "per_flag": {
                f: {"kappa": a.kappa, "observed": a.observed,
                    "expected": a.expected, "used": a.used}
                for f, a in self.per_flag.items()
            },
        }


def cohen_kappa(annotations_a: LabelMap, annotations_b: LabelMap) -> AgreementReport:
    """Chance-corrected agreement, per flag as a binary presence task.

    The macro mean covers flags used by at least one annotator whose
    expected agreement is below 1; degenerate flags are reported with
    kappa None and excluded.
    """
    if annotations_a.keys() != annotations_b.keys():
        only_a = sorted(annotations_a.keys() - annotations_b.keys())
        only_b = sorted(annotations_b.keys() - annotations_a.keys())
        raise MetricsError(
            f"annotator coverage mismatch: only A {only_a}, only B {only_b}")
    if not annotations_a:
        raise MetricsError("no items to compare")

    n = len(annotations_a)
    ids = list(annotations_a)
    per_flag: dict[str, FlagAgreement] = {}
    usable: list[float] = []
    for flag_id in ACTIVE_FLAG_IDS:
        both = a_only = b_only = neither = 0
        for cid in ids:
            in_a = flag_id in annotations_a[cid]
            in_b = flag_id in annotations_b[cid]
            if in_a and in_b:
                both += 1
            elif in_a:
                a_only += 1
            elif in_b:
                b_only += 1
            else:
                neither += 1
        used = (both + a_only + b_only) > 0
        p_o = (both + neither) / n
        p_a1 = (both + a_only) / n
        p_b1 = (both + b_only) / n
        p_e = p_a1 * p_b1 + (1 - p_a1) * (1 - p_b1)
        kappa = None if p_e == 1.0 else (p_o - p_e) / (1 - p_e)
        per_flag[flag_id] = FlagAgreement(kappa, p_o, p_e, used)
        if used and kappa is not None:
            usable.append(kappa)
    macro = sum(usable) / len(usable) if usable else None
    return AgreementReport(per_flag, macro, n)


IDENTICAL = "identical"
OVERLAPPING = "overlapping"
DISJOINT = "disjoint"


@dataclass
class ConsistencyReport:
    k: int
    n_items: int
    exact_match_pct: float  # all runs identical (headline)
    flag_match_pct: float   # non-empty intersection across all runs
    pairwise_exact_pct: float  # averaged over run pairs
    pairwise_flag_pct: float
    detail: dict[str, str]  # contribution id -> identical|overlapping|disjoint

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "n_items": self.n_items,
            "exact_match_pct": self.exact_match_pct,
            "flag_match_pct": self.flag_match_pct,
            "pairwise_exact_pct": self.pairwise_exact_pct,
            "pairwise_flag_pct": self.pairwise_flag_pct,
            "detail": self.detail,
        }


def consistency(runs: Mapping[str, Sequence[AbstractSet[str]]]) -> ConsistencyReport:
    """Stability of flag assignments across k runs of the classifier.

    `runs` maps each contribution id to its k flag sets in run order.
    Both the all-runs percentages and pairwise-averaged variants are
    reported; the all-runs numbers are the headline.
    """
    if not runs:
        raise MetricsError("empty run set")
    ks = {len(sets) for sets in runs.values()}
    if len(ks) != 1:
        raise MetricsError(f"incomplete run set: differing run counts {sorted(ks)}")
    k = ks.pop()
    if k < 2:
        raise MetricsError("consistency requires at least 2 runs")

    n = len(runs)
    exact = overlap = 0
    detail: dict[str, str] = {}
    pair_count = k * (k - 1) // 2
    pair_exact_sum = pair_flag_sum = 0
    for cid, sets in runs.items():
        normalized = [set(s) for s in sets]
        if all(s == normalized[0] for s in normalized[1:]):
            exact += 1
            overlap += 1
            detail[cid] = IDENTICAL
        else:
            common = set.intersection(*normalized)
            if common:
                overlap += 1
                detail[cid] = OVERLAPPING
            else:
                detail[cid] = DISJOINT
        for i in range(k):
            for j in range(i + 1, k):
                if normalized[i] == normalized[j]:
                    pair_exact_sum += 1
                if normalized[i] & normalized[j]:
                    pair_flag_sum += 1

    return ConsistencyReport(
        k=k,
        n_items=n,
        exact_match_pct=100.0 * exact / n,
        flag_match_pct=100.0 * overlap / n,
        pairwise_exact_pct=100.0 * pair_exact_sum / (n * pair_count),
        pairwise_flag_pct=100.0 * pair_flag_sum / (n * pair_count),
        detail=detail,
    )


DEFAULT_GATE_SELECTOR = "macro_precision_overall"
DEFAULT_GATE_THRESHOLD = 0.80


@dataclass(frozen=True)
class GateResult:
    passed: bool
    selector: str
    value: float
    threshold: float

    @property
    def margin(self) -> float:
        return self.value - self.threshold


def threshold_gate(report: EvaluationReport,
                   selector: str = DEFAULT_GATE_SELECTOR,
                   threshold: float = DEFAULT_GATE_THRESHOLD) -> GateResult:
    """Pass/fail check on one report metric, for scripting the refine loop."""
    value = report.metric(selector)
    return GateResult(value >= threshold, selector, value, threshold)


def labels_from_records(records, key="contribution_id") -> dict[str, frozenset]:
    """Adapter: any records with .labels into an id -> flag set map."""
    out: dict[str, frozenset] = {}
    for record in records:
        cid = getattr(record, key)
        if cid in out:
            raise MetricsError(f"duplicate labels for {cid}")
        out[cid] = frozenset(record.labels)
    return out


def save_report_json(payload: dict, path) -> None:
    from pathlib import Path

    Path(path).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")
