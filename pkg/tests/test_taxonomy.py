"""Flag registry, validation, and repair behavior."""

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ethoscan.taxonomy import (
    ACTIVE_FLAG_IDS,
    DEFAULT_POLICY,
    EMPTY_SET,
    FLAGS,
    INACTIVE_FLAG,
    MIXED_GROUP,
    NEGATIVE_ACTIVE_FLAG_IDS,
    NEUTRAL_COMBINED,
    NEUTRAL_FLAG_ID,
    POSITIVE_FLAG_IDS,
    FlagSet,
    Group,
    InvalidFlagSetError,
    UnknownFlagError,
    flag_group,
    repair_flag_set,
    validate_flag_set,
)


def brute_force_valid(ids: frozenset) -> bool:
    """Independent rule oracle: non-empty and group-homogeneous."""
    if not ids:
        return False
    pos = set(POSITIVE_FLAG_IDS)
    neg = set(NEGATIVE_ACTIVE_FLAG_IDS)
    return ids <= pos or ids <= neg or ids == {NEUTRAL_FLAG_ID}


def test_registry_shape():
    assert len(FLAGS) == 11
    assert [f for f in FLAGS.values() if not f.active] == [FLAGS["F10"]]
    assert all(FLAGS[f"F{i}"].group is Group.POSITIVE for i in range(1, 6))
    assert all(FLAGS[f"F{i}"].group is Group.NEGATIVE for i in range(6, 11))
    assert FLAGS["F11"].group is Group.NEUTRAL
    assert FLAGS["F4"].name == "Responsibility and Apology"
    assert FLAGS["F9"].name == "Publishing Private Information"
    assert FLAGS["F11"].name == "No Flag"


def test_flag_group_lookup():
    assert flag_group("F4") is Group.POSITIVE
    assert flag_group("F9") is Group.NEGATIVE
    assert flag_group("F11") is Group.NEUTRAL
    with pytest.raises(UnknownFlagError):
        flag_group("F12")


@pytest.mark.parametrize(
    "ids,expected",
    [
        ({"F1", "F3"}, ()),
        ({"F11"}, ()),
        ({"F11", "F2"}, (NEUTRAL_COMBINED,)),
        ({"F1", "F7"}, (MIXED_GROUP,)),
        (set(), (EMPTY_SET,)),
        ({"F10"}, (INACTIVE_FLAG,)),
        ({"F1", "F10"}, (INACTIVE_FLAG, MIXED_GROUP)),
        ({"F11", "F1", "F7"}, (NEUTRAL_COMBINED, MIXED_GROUP)),
    ],
)
def test_validate_flag_set_cases(ids, expected):
    verdict = validate_flag_set(ids)
    assert verdict.valid == (not expected)
    assert set(verdict.violations) == set(expected)


def test_validate_unknown_token_is_a_parse_error():
    with pytest.raises(UnknownFlagError) as err:
        validate_flag_set({"F1", "F99"})
    assert "F99" in str(err.value)


def test_validate_agrees_with_oracle_on_all_active_subsets():
    for r in range(len(ACTIVE_FLAG_IDS) + 1):
        for combo in itertools.combinations(ACTIVE_FLAG_IDS, r):
            ids = frozenset(combo)
            assert validate_flag_set(ids).valid == brute_force_valid(ids), ids


def test_flagset_construction_enforces_rules():
    assert FlagSet.of("F1", "F3").sorted_ids() == ["F1", "F3"]
    assert FlagSet.of("F2", "F1").sorted_ids() == ["F1", "F2"]
    with pytest.raises(InvalidFlagSetError):
        FlagSet.of("F1", "F7")
    with pytest.raises(InvalidFlagSetError):
        FlagSet.of()
    with pytest.raises(InvalidFlagSetError):
        FlagSet.of("F10")


def test_repair_empty_becomes_neutral():
    result = repair_flag_set(set())
    assert result.flag_set == FlagSet.of("F11")
    assert result.note == "empty→neutral"
    assert not result.needs_review


def test_repair_drops_neutral_when_mixed():
    result = repair_flag_set({"F11", "F1", "F3"})
    assert result.flag_set == FlagSet.of("F1", "F3")
    assert "dropped F11" in result.note


def test_repair_mixed_group_tie_keeps_negative_and_flags_review():
    result = repair_flag_set({"F1", "F7"})
    assert result.flag_set == FlagSet.of("F7")
    assert result.needs_review


def test_repair_mixed_group_majority_wins():
    result = repair_flag_set({"F1", "F3", "F7"})
    assert result.flag_set == FlagSet.of("F1", "F3")
    assert not result.needs_review


def test_repair_inactive_only_falls_back_to_neutral_with_review():
    result = repair_flag_set({"F10"})
    assert result.flag_set == FlagSet.of("F11")
    assert result.needs_review


def test_repair_drops_unknown_ids():
    result = repair_flag_set({"F1", "F42"})
    assert result.flag_set == FlagSet.of("F1")
    assert "F42" in result.note


active_subsets = st.frozensets(st.sampled_from(ACTIVE_FLAG_IDS), max_size=10)
any_subsets = st.frozensets(st.sampled_from(list(FLAGS)), max_size=11)


@given(any_subsets)
def test_repair_output_always_validates(ids):
    result = repair_flag_set(ids)
    assert validate_flag_set(result.flag_set.flags).valid


@given(active_subsets.filter(brute_force_valid))
def test_repair_is_identity_on_valid_sets(ids):
    result = repair_flag_set(ids)
    assert result.flag_set.flags == ids
    assert not result.changed
    assert not result.needs_review


@given(any_subsets)
def test_repair_is_idempotent(ids):
    once = repair_flag_set(ids)
    twice = repair_flag_set(once.flag_set.flags)
    assert twice.flag_set == once.flag_set
    assert not twice.changed
