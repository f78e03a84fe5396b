"""Ethical flag taxonomy: flag registry, label-set validation, and repair.

A contribution is labeled with a set of flag ids.  Valid sets are
group-homogeneous: any combination of positive flags, any combination of
negative flags, or the neutral flag F11 alone.  F10 exists in the
registry so datasets mentioning it still parse, but it is inactive and
can never appear in a valid set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

from .errors import EthoscanError


class Group(str, Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    NEUTRAL = "Neutral"


@dataclass(frozen=True)
class Flag:
    """One ethical flag: stable id, display texts, polarity group."""

    id: str
    name: str
    description: str
    group: Group
    active: bool = True


FLAGS: dict[str, Flag] = {
    f.id: f
    for f in [
        Flag("F1", "Empathy and Kindness",
             "Demonstrating understanding and compassion towards others.",
             Group.POSITIVE),
        Flag("F2", "Respect for Differences",
             "Valuing diverse perspectives and backgrounds.",
             Group.POSITIVE),
        Flag("F3", "Constructive Feedback",
             "Providing feedback that is helpful and aimed at improvement.",
             Group.POSITIVE),
        Flag("F4", "Responsibility and Apology",
             "Taking responsibility for one's actions and apologizing when necessary.",
             Group.POSITIVE),
        Flag("F5", "Common Good",
             "Acting in ways that benefit the broader community.",
             Group.POSITIVE),
        Flag("F6", "Sexualized Language",
             "Using language that is inappropriate and sexual in nature.",
             Group.NEGATIVE),
        Flag("F7", "Insulting or Derogatory Comments",
             "Making comments that insult or demean others.",
             Group.NEGATIVE),
        Flag("F8", "Public Harassment",
             "Engaging in behavior that intimidates or harasses others.",
             Group.NEGATIVE),
        Flag("F9", "Publishing Private Information",
             "Sharing private information about others without consent.",
             Group.NEGATIVE),
        Flag("F10", "Inappropriate Conduct",
             "Behaving in a manner that is not suitable in a professional setting.",
             Group.NEGATIVE, active=False),
        Flag("F11", "No Flag",
             "Comments that do not exhibit any ethical behaviors.",
             Group.NEUTRAL),
    ]
}

ALL_FLAG_IDS: tuple[str, ...] = tuple(FLAGS)
ACTIVE_FLAG_IDS: tuple[str, ...] = tuple(f.id for f in FLAGS.values() if f.active)
POSITIVE_FLAG_IDS: tuple[str, ...] = tuple(
    f.id for f in FLAGS.values() if f.group is Group.POSITIVE)
NEGATIVE_ACTIVE_FLAG_IDS: tuple[str, ...] = tuple(
    f.id for f in FLAGS.values() if f.group is Group.NEGATIVE and f.active)
NEUTRAL_FLAG_ID = "F11"

# Violation rule names, used verbatim in verdicts, error messages, and the
# annotation-service API.
EMPTY_SET = "empty-set"
MIXED_GROUP = "mixed-group"
NEUTRAL_COMBINED = "neutral-combined"
INACTIVE_FLAG = "inactive-flag"


class UnknownFlagError(EthoscanError):
    """An id outside F1..F11 was encountered."""

    def __init__(self, token: str):
        self.token = token
        super().__init__(f"unknown flag id {token!r}")


class InvalidFlagSetError(EthoscanError):
    def __init__(self, violations: tuple[str, ...]):
        self.violations = violations
        super().__init__(f"invalid flag set ({', '.join(violations)})")


def flag_group(flag_id: str) -> Group:
    """Polarity group of a flag id; raises UnknownFlagError otherwise."""
    try:
        return FLAGS[flag_id].group
    except KeyError:
        raise UnknownFlagError(flag_id) from None


def _sort_key(flag_id: str) -> int:
    return int(flag_id[1:])


@dataclass(frozen=True)
class Verdict:
    valid: bool
    violations: tuple[str, ...] = ()


def validate_flag_set(raw: Iterable[str]) -> Verdict:
    """Check a raw id set against the group-homogeneity rules.

    Returns every violated rule, not just the first.  Ids outside the
    registry are a parse problem, not a rule violation, and raise
    UnknownFlagError naming the offending token.
    """
    ids = set(raw)
    for token in ids:
        if token not in FLAGS:
            raise UnknownFlagError(token)

    violations: list[str] = []
    if not ids:
        violations.append(EMPTY_SET)
    if any(not FLAGS[i].active for i in ids):
        violations.append(INACTIVE_FLAG)
    if NEUTRAL_FLAG_ID in ids and len(ids) > 1:
        violations.append(NEUTRAL_COMBINED)
    groups = {FLAGS[i].group for i in ids}
    if Group.POSITIVE in groups and Group.NEGATIVE in groups:
        violations.append(MIXED_GROUP)
    return Verdict(valid=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class FlagSet:
    """A validated, non-empty, group-homogeneous set of active flag ids.

    Construction fails on any rule violation, so a FlagSet held anywhere
    in the system is valid by definition.
    """

    flags: frozenset[str]

    def __post_init__(self):
        verdict = validate_flag_set(self.flags)
        if not verdict.valid:
            raise InvalidFlagSetError(verdict.violations)

    @classmethod
    def of(cls, *flag_ids: str) -> "FlagSet":
        return cls(frozenset(flag_ids))

    @classmethod
    def from_ids(cls, flag_ids: Iterable[str]) -> "FlagSet":
        return cls(frozenset(flag_ids))

    def sorted_ids(self) -> list[str]:
        return sorted(self.flags, key=_sort_key)

    def group(self) -> Group:
        return FLAGS[next(iter(self.flags))].group

    def __iter__(self) -> Iterator[str]:
        return iter(self.sorted_ids())

    def __contains__(self, flag_id: str) -> bool:
        return flag_id in self.flags

    def __len__(self) -> int:
        return len(self.flags)


NEUTRAL_SET = FlagSet.of(NEUTRAL_FLAG_ID)


@dataclass(frozen=True)
class RepairPolicy:
    """Tunables for deterministic repair of invalid sets.

    tie_break picks the surviving group when positive and negative
    members tie in count; the default surfaces potential harm for human
    review rather than hiding it.
    """

    tie_break: Group = Group.NEGATIVE
    review_on_tie: bool = True


DEFAULT_POLICY = RepairPolicy()


@dataclass(frozen=True)
class RepairResult:
    flag_set: FlagSet
    notes: tuple[str, ...] = ()
    needs_review: bool = False

    @property
    def note(self) -> str | None:
        return "; ".join(self.notes) if self.notes else None

    @property
    def changed(self) -> bool:
        return bool(self.notes)


def repair_flag_set(raw: Iterable[str],
                    policy: RepairPolicy = DEFAULT_POLICY) -> RepairResult:
    """Normalize an id set into a valid FlagSet, recording what changed.

    Rules apply in order: empty set becomes the neutral verdict; a
    neutral flag mixed with others is dropped; inactive flags are
    dropped (falling back to neutral if nothing remains); a mixed
    positive/negative set keeps the larger group, ties resolved by
    policy and marked for review.  Already-valid input comes back
    unchanged, so repair is idempotent.  Never raises: the worst case is
    the neutral set flagged needs_review.
    """
    ids = {i for i in raw if i in FLAGS}
    notes: list[str] = []
    needs_review = False

    dropped_unknown = sorted(set(raw) - ids)
    if dropped_unknown:
        notes.append(f"dropped unknown ids {', '.join(dropped_unknown)}")

    if not ids:
        notes.append("empty→neutral")
        return RepairResult(NEUTRAL_SET, tuple(notes), needs_review=bool(dropped_unknown))

    if NEUTRAL_FLAG_ID in ids and len(ids) > 1:
        ids.discard(NEUTRAL_FLAG_ID)
        notes.append("dropped F11")

    inactive = sorted(i for i in ids if not FLAGS[i].active)
    if inactive:
        ids.difference_update(inactive)
        notes.append(f"dropped inactive {', '.join(inactive)}")
        if not ids:
            notes.append("empty→neutral")
            return RepairResult(NEUTRAL_SET, tuple(notes), needs_review=True)

    positives = {i for i in ids if FLAGS[i].group is Group.POSITIVE}
    negatives = {i for i in ids if FLAGS[i].group is Group.NEGATIVE}
    if positives and negatives:
        if len(positives) > len(negatives):
            kept, dropped = positives, negatives
        elif len(negatives) > len(positives):
            kept, dropped = negatives, positives
        else:
            kept = negatives if policy.tie_break is Group.NEGATIVE else positives
            dropped = positives if kept is negatives else negatives
            needs_review = policy.review_on_tie
        ids = kept
        notes.append(
            "dropped "
            + ", ".join(sorted(dropped, key=_sort_key))
            + f" (kept {FLAGS[next(iter(kept))].group.value.lower()} group)")

    return RepairResult(FlagSet.from_ids(ids), tuple(notes), needs_review)
