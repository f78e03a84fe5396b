"""Versioned prompt documents and deterministic prompt rendering.

A PromptSpec is a structured document (task description, per-flag
definitions with criteria and snippets, logical constraint rules, JSON
output instruction, worked exemplars) persisted as JSON so operators
can edit it between refinement iterations without touching code.
Rendering is a pure function: same spec + same contribution always
produce byte-identical text and therefore the same content hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .corpus import Contribution
from .errors import EthoscanError
from .taxonomy import (
    ACTIVE_FLAG_IDS,
    FLAGS,
    Group,
    UnknownFlagError,
    validate_flag_set,
)

REQUIRED_OUTPUT_FIELDS = ("flags", "rationale")

BLOCK_OPEN = "<<<CONTRIBUTION"
BLOCK_CLOSE = "CONTRIBUTION>>>"

SECTION_TASK = "## Task"
SECTION_DEFINITIONS = "## Flag definitions"
SECTION_CONSTRAINTS = "## Classification constraints"
SECTION_OUTPUT = "## Output format"
SECTION_EXAMPLES = "## Worked examples"


class PromptSpecError(EthoscanError):
    pass


@dataclass(frozen=True)
class FlagDefinition:
    flag_id: str
    definition: str
    criteria: tuple[str, ...] = ()
    examples: tuple[str, ...] = ()


@dataclass(frozen=True)
class Exemplar:
    """A worked input/output demonstration with per-flag rationale."""

    input_text: str
    flags: tuple[str, ...]
    rationale: Mapping[str, str] = field(default_factory=dict)

    def output_json(self) -> str:
        return json.dumps(
            {"flags": list(self.flags), "rationale": dict(self.rationale)},
            ensure_ascii=False)


@dataclass(frozen=True)
class PromptSpec:
    version: str
    task_description: str
    flag_definitions: tuple[FlagDefinition, ...]
    constraint_rules: tuple[str, ...]
    output_instruction: str
    exemplars: tuple[Exemplar, ...]


@dataclass(frozen=True)
class SpecVerdict:
    ok: bool
    defects: tuple[str, ...] = ()


def _mentions_neutral_exclusivity(rule: str) -> bool:
    lower = rule.lower()
    return "f11" in lower and any(
        marker in lower for marker in ("exclusive", "alone", "cannot be combined",
                                       "never combine", "only flag"))


def _mentions_group_exclusion(rule: str) -> bool:
    lower = rule.lower()
    return ("positive" in lower and "negative" in lower and any(
        marker in lower for marker in ("exclusive", "exclusion", "combin",
                                       "mix", "never", "same group")))


def validate_spec(spec: PromptSpec) -> SpecVerdict:
    """Report every structural defect; defects are data, not exceptions."""
    defects: list[str] = []

    if not spec.task_description.strip():
        defects.append("task description empty")
    if not spec.output_instruction.strip():
        defects.append("output instruction empty")
    for fld in REQUIRED_OUTPUT_FIELDS:
        if fld not in spec.output_instruction:
            defects.append(f"output instruction does not name the {fld!r} field")

    seen: dict[str, int] = {}
    for definition in spec.flag_definitions:
        if definition.flag_id not in FLAGS or not FLAGS[definition.flag_id].active:
            defects.append(f"unknown or inactive flag {definition.flag_id} defined")
            continue
        seen[definition.flag_id] = seen.get(definition.flag_id, 0) + 1
        if not definition.definition.strip():
            defects.append(f"flag {definition.flag_id} has an empty definition")
    for flag_id in ACTIVE_FLAG_IDS:
        if flag_id not in seen:
            defects.append(f"flag {flag_id} undefined")
    for flag_id, count in seen.items():
        if count > 1:
            defects.append(f"flag {flag_id} defined {count} times")

    if not any(_mentions_neutral_exclusivity(r) for r in spec.constraint_rules):
        defects.append("neutral exclusivity rule absent")
    if not any(_mentions_group_exclusion(r) for r in spec.constraint_rules):
        defects.append("positive/negative mutual-exclusion rule absent")

    groups_covered: set[Group] = set()
    for i, exemplar in enumerate(spec.exemplars, start=1):
        try:
            verdict = validate_flag_set(exemplar.flags)
        except UnknownFlagError as exc:
            defects.append(f"exemplar {i}: {exc}")
            continue
        if not verdict.valid:
            defects.append(
                f"exemplar {i}: invalid flag set ({', '.join(verdict.violations)})")
            continue
        groups_covered.add(FLAGS[exemplar.flags[0]].group)
    for group in Group:
        if group not in groups_covered:
            defects.append(f"no exemplar for the {group.value.lower()} group")

    return SpecVerdict(ok=not defects, defects=tuple(defects))


@dataclass(frozen=True)
class PromptRendering:
    system_text: str
    user_text: str
    spec_version: str
    content_hash: str


def _wrap_block(text: str) -> str:
    return f"{BLOCK_OPEN}\n{text}\n{BLOCK_CLOSE}"


def render_system_text(spec: PromptSpec) -> str:
    parts = [SECTION_TASK, spec.task_description.strip(), ""]

    parts.append(SECTION_DEFINITIONS)
    for definition in spec.flag_definitions:
        flag = FLAGS[definition.flag_id]
        parts.append(f"{definition.flag_id} ({flag.name}, {flag.group.value}): "
                     f"{definition.definition}")
        for criterion in definition.criteria:
            parts.append(f"  - {criterion}")
        for example in definition.examples:
            parts.append(f"  - e.g. {example!r}")
    parts.append("")

    parts.append(SECTION_CONSTRAINTS)
    for i, rule in enumerate(spec.constraint_rules, start=1):
        parts.append(f"{i}. {rule}")
    parts.append("")

    parts.append(SECTION_OUTPUT)
    parts.append(spec.output_instruction.strip())
    parts.append("")

    parts.append(SECTION_EXAMPLES)
    for i, exemplar in enumerate(spec.exemplars, start=1):
        parts.append(f"Example {i}")
        parts.append("Input:")
        parts.append(_wrap_block(exemplar.input_text))
        parts.append("Output:")
        parts.append(exemplar.output_json())
    return "\n".join(parts).rstrip() + "\n"


def render_user_text(contribution: Contribution) -> str:
    return ("Classify this contribution:\n"
            + _wrap_block(contribution.body) + "\n")


def content_hash(system_text: str, user_text: str) -> str:
    digest = hashlib.sha256()
    digest.update(system_text.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(user_text.encode("utf-8"))
    return digest.hexdigest()


def render_prompt(spec: PromptSpec, contribution: Contribution) -> PromptRendering:
    """Render the two-part chat prompt; fails on an invalid spec."""
    verdict = validate_spec(spec)
    if not verdict.ok:
        raise PromptSpecError(
            "prompt spec has defects: " + "; ".join(verdict.defects))
    system_text = render_system_text(spec)
    user_text = render_user_text(contribution)
    return PromptRendering(
        system_text=system_text,
        user_text=user_text,
        spec_version=spec.version,
        content_hash=content_hash(system_text, user_text),
    )


def default_spec() -> PromptSpec:
    """The shipped baseline spec covering all ten active flags."""
    definitions = (
        FlagDefinition(
            "F1", FLAGS["F1"].description,
            criteria=(
                "Assign on any expression of gratitude, including short tokens "
                "such as \"thanks\", \"thx\", \"thanks for\", or \"thank you\".",
                "Warm, encouraging, or supportive wording toward another person.",
            ),
            examples=("Thanks a lot for looking into this, that fixed my build!",)),
        FlagDefinition(
            "F2", FLAGS["F2"].description,
            criteria=(
                "Explicitly welcomes or credits a differing viewpoint, background, "
                "or way of working.",
            ),
            examples=("I see it differently, but your approach makes sense for "
                      "smaller repos; let's document both.",)),
        FlagDefinition(
            "F3", FLAGS["F3"].description,
            criteria=(
                "Covers substantial contributions: error descriptions, solution "
                "suggestions, tool recommendations, relevant links, or "
                "configuration advice.",
                "Any clarification that moves the issue toward resolution counts, "
                "even without emotive wording.",
            ),
            examples=("Repro: set LANG=C and run make -j1; the race disappears, "
                      "so the cache key is missing the locale.",)),
        FlagDefinition(
            "F4", FLAGS["F4"].description,
            criteria=(
                "Any admission of a mistake or explicit apology, however brief.",
            ),
            examples=("My bad, I misread the stack trace; sorry for the noise.",)),
        FlagDefinition(
            "F5", FLAGS["F5"].description,
            criteria=(
                "Promotes the sustainability or collective well-being of the "
                "project rather than a single person's issue.",
            ),
            examples=("Happy to mentor new triagers so the backlog stays "
                      "manageable for everyone.",)),
        FlagDefinition(
            "F6", FLAGS["F6"].description,
            criteria=(
                "Sexual remarks, innuendo, or imagery in any technical context.",
            ),
            examples=("Nice merge, now the modules are finally sleeping together.",)),
        FlagDefinition(
            "F7", FLAGS["F7"].description,
            criteria=(
                "Belittles a person or their work; mockery, name-calling, or "
                "contemptuous dismissals.",
            ),
            examples=("Only someone clueless would ship a parser this sloppy.",)),
        FlagDefinition(
            "F8", FLAGS["F8"].description,
            criteria=(
                "Excessive insistence, pressure, or disregard for another "
                "person's stated boundaries, including repeated demands after "
                "a refusal.",
                "Intimidating monitoring of someone's activity.",
            ),
            examples=("You ignored my last three pings. I will keep commenting "
                      "on every commit until you answer me.",)),
        FlagDefinition(
            "F9", FLAGS["F9"].description,
            criteria=(
                "Reveals someone's personal details (legal name, employer, "
                "address, contact data) without consent.",
            ),
            examples=("FYI the maintainer is actually J. Smith who works at "
                      "BigCorp, here is their phone number.",)),
        FlagDefinition(
            "F11", FLAGS["F11"].description,
            criteria=(
                "Use only when no positive or negative behavior is present: "
                "bare questions, logs, or status notes without substance.",
            ),
            examples=("Any update on this?",)),
    )
    constraint_rules = (
        "F11 is mutually exclusive with every other flag: if F11 applies, it "
        "must be the only flag in the output.",
        "Positive flags and negative flags are mutually exclusive groups: never "
        "combine a positive flag with a negative flag in one output.",
        "Within one group, assign every flag that applies (multiple positive "
        "flags or multiple negative flags are allowed together).",
        "Never output an empty flag list; when nothing applies, output F11.",
    )
    output_instruction = (
        "Respond with a single JSON object and nothing else. It must contain a "
        "\"flags\" array of flag id strings and a \"rationale\" object mapping "
        "each assigned flag id to a one-sentence justification quoting or "
        "pointing at the triggering wording. Example shape: "
        "{\"flags\": [\"F3\"], \"rationale\": {\"F3\": \"...\"}}")
    exemplars = (
        Exemplar(
            "Thanks so much for the quick turnaround, the nightly build works "
            "again on my machine!",
            ("F1",),
            {"F1": "Opens with explicit gratitude (\"Thanks so much\") toward "
                   "the maintainer's work."}),
        Exemplar(
            "The crash happens only when the config omits `timeout`; adding a "
            "default of 30s in loader.py would fix it. See the linked stack "
            "trace.",
            ("F3",),
            {"F3": "Describes the error, proposes a concrete fix, and links "
                   "supporting evidence."}),
        Exemplar(
            "Apologies, the regression came from my patch; thanks for catching "
            "it so fast.",
            ("F1", "F4"),
            {"F1": "Thanks the reviewer explicitly.",
             "F4": "Owns the mistake (\"the regression came from my patch\") "
                   "with an apology."}),
        Exemplar(
            "This is amateur hour. Whoever wrote this scheduler should stay "
            "away from keyboards.",
            ("F7",),
            {"F7": "Demeans the author personally rather than critiquing the "
                   "code."}),
        Exemplar(
            "Answer me today. I know where your team posts their standups and "
            "I will keep replying there until you respond.",
            ("F8",),
            {"F8": "Applies pressure and disregards boundaries by threatening "
                   "to follow the team across channels."}),
        Exemplar(
            "Which version of the SDK are you on?",
            ("F11",),
            {"F11": "A bare clarifying question with no positive or negative "
                    "behavior."}),
    )
    return PromptSpec(
        version="1.0.0",
        task_description=(
            "You analyze one non-coding contribution (an issue or a comment) "
            "from an open-source project and assign the ethical flags it "
            "exhibits, judging only the text provided. Think through which "
            "definitions apply, then report the flags with a short rationale "
            "per flag as JSON."),
        flag_definitions=definitions,
        constraint_rules=constraint_rules,
        output_instruction=output_instruction,
        exemplars=exemplars,
    )


def spec_to_json(spec: PromptSpec) -> dict:
    return {
        "version": spec.version,
        "task_description": spec.task_description,
        "flag_definitions": [
            {
                "flag_id": d.flag_id,
                "definition": d.definition,
                "criteria": list(d.criteria),
                "examples": list(d.examples),
            }
            for d in spec.flag_definitions
        ],
        "constraint_rules": list(spec.constraint_rules),
        "output_instruction": spec.output_instruction,
        "exemplars": [
            {
                "input_text": e.input_text,
                "flags": list(e.flags),
                "rationale": dict(e.rationale),
            }
            for e in spec.exemplars
        ],
    }


def spec_from_json(obj: dict) -> PromptSpec:
    try:
        return PromptSpec(
            version=obj["version"],
            task_description=obj["task_description"],
            flag_definitions=tuple(
                FlagDefinition(
                    flag_id=d["flag_id"],
                    definition=d["definition"],
                    criteria=tuple(d.get("criteria", ())),
                    examples=tuple(d.get("examples", ())),
                )
                for d in obj["flag_definitions"]
            ),
            constraint_rules=tuple(obj["constraint_rules"]),
            output_instruction=obj["output_instruction"],
            exemplars=tuple(
                Exemplar(
                    input_text=e["input_text"],
                    flags=tuple(e["flags"]),
                    rationale=dict(e.get("rationale", {})),
                )
                for e in obj["exemplars"]
            ),
        )
    except (KeyError, TypeError) as exc:
        raise PromptSpecError(f"malformed prompt spec document: {exc}") from None


def save_spec(spec: PromptSpec, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(spec_to_json(spec), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8")


def load_spec(path: str | Path) -> PromptSpec:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PromptSpecError(f"{path}: invalid JSON ({exc.msg})") from None
    return spec_from_json(obj)


def diff_specs(old: PromptSpec, new: PromptSpec) -> list[str]:
    """Section-by-section differences between two spec versions."""
    changes: list[str] = []
    if old.version != new.version:
        changes.append(f"version: {old.version} -> {new.version}")
    if old.task_description != new.task_description:
        changes.append("task description changed")

    old_defs = {d.flag_id: d for d in old.flag_definitions}
    new_defs = {d.flag_id: d for d in new.flag_definitions}
    for flag_id in sorted(set(old_defs) | set(new_defs), key=lambda f: int(f[1:])):
        if flag_id not in new_defs:
            changes.append(f"definition removed: {flag_id}")
        elif flag_id not in old_defs:
            changes.append(f"definition added: {flag_id}")
        elif old_defs[flag_id] != new_defs[flag_id]:
            changes.append(f"definition changed: {flag_id}")

    if old.constraint_rules != new.constraint_rules:
        changes.append(
            f"constraint rules changed ({len(old.constraint_rules)} -> "
            f"{len(new.constraint_rules)} rules)")
    if old.output_instruction != new.output_instruction:
        changes.append("output instruction changed")
    if old.exemplars != new.exemplars:
        changes.append(
            f"exemplars changed ({len(old.exemplars)} -> {len(new.exemplars)})")
    return changes
