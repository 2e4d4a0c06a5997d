"""Prompt rendering and reply parsing.

Templates are plain UTF-8 files with ``{{slot}}`` placeholders. A line holding
nothing but a placeholder whose value is empty is dropped, which is how
optional sections (prior comments, analyses) disappear cleanly.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

from .backend import Message
from .core import Comment, Document, LabelSpace, ProbabilityVector
from .errors import LabelMismatch, MissingPredecessor, MissingSteps, NonNumeric, ParseFailure

TEMPLATE_DIR = Path(__file__).parent / "templates"
TEMPLATE_KINDS = ("kcs", "ibc", "single", "judge")

REASK_INSTRUCTION = (
    "Your previous reply could not be read. Respond with only the fenced JSON "
    "block containing one probability per label."
)
NO_REASONING = "(no reasoning given)"

_SLOT = re.compile(r"\{\{(\w+)\}\}")
_FENCE = re.compile(r"```[ \t]*(?:json|JSON)?[ \t]*\n?(.*?)```", re.DOTALL)
_REASONING_LINE = re.compile(r"^[\s*_>-]*reasoning[\s*_]*:[\s*_]*(.+?)\s*$", re.I | re.M)
_ANALYSIS_LINE = re.compile(r"^[\s*_>-]*analysis[\s*_]*:[\s*_]*(.+?)\s*$", re.I | re.M)
_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")

Prompt = tuple[Message, ...]


class PromptTemplate:
    def __init__(self, text: str, name: str = "<inline>"):
        self.text = text
        self.name = name
        self.slots = tuple(dict.fromkeys(_SLOT.findall(text)))

    def render(self, **values: str) -> str:
        missing = [s for s in self.slots if s not in values]
        if missing:
            raise KeyError(f"template {self.name} has unfilled slots: {missing}")
        lines = []
        for line in self.text.splitlines():
            m = _SLOT.fullmatch(line.strip())
            if m and values[m.group(1)] == "":
                continue
            lines.append(_SLOT.sub(lambda mm: values[mm.group(1)], line))
        out = "\n".join(lines)
        out = re.sub(r"\n{3,}", "\n\n", out)
        return out.strip() + "\n"


@dataclass(frozen=True)
class TemplateSet:
    system: dict
    user: dict

    @classmethod
    def load(cls, directory: str | Path = TEMPLATE_DIR) -> TemplateSet:
        directory = Path(directory)
        system, user = {}, {}
        for kind in TEMPLATE_KINDS:
            for part, store in (("system", system), ("user", user)):
                path = directory / f"{kind}.{part}.txt"
                store[kind] = PromptTemplate(path.read_text(encoding="utf-8"), path.name)
        return cls(system, user)

    def prompt(self, kind: str, **values: str) -> Prompt:
        sys_t, user_t = self.system[kind], self.user[kind]
        return (
            Message("system", sys_t.render(**{s: values[s] for s in sys_t.slots})),
            Message("user", user_t.render(**{s: values[s] for s in user_t.slots})),
        )


@lru_cache(maxsize=None)
def default_templates() -> TemplateSet:
    return TemplateSet.load()


def format_distribution(p: ProbabilityVector, space: LabelSpace) -> str:
    return json.dumps({lab: round(x, 4) for lab, x in zip(space.labels, p.entries)})


def block_skeleton(space: LabelSpace) -> str:
    return "{" + ", ".join(f'"{lab}": <probability>' for lab in space.labels) + "}"


def _labels(space: LabelSpace) -> str:
    return ", ".join(space.labels)


def _comments_section(comments: Sequence[Comment]) -> str:
    if not comments:
        return ""
    lines = ["Comments from the informal chat session:"]
    lines += [f"- Agent {c.agent_index}: {c.text.strip()}" for c in comments]
    return "\n".join(lines)


def render_kcs_prompt(
    doc: Document,
    agent_index: int,
    space: LabelSpace,
    n_agents: int | None = None,
    templates: TemplateSet | None = None,
) -> Prompt:
    if agent_index < 1 or not doc.has_step(agent_index - 1):
        raise MissingPredecessor(f"no step {agent_index - 1} to hand to agent {agent_index}")
    templates = templates or default_templates()
    prev = doc.steps[agent_index - 1]
    prev_section = "\n".join([
        f"Result from the previous agent (Agent {prev.agent_index}):",
        f"Analysis: {prev.analysis}",
        f"Probability distribution: {format_distribution(prev.distribution, space)}",
    ])
    opinions = ["Opinions of all prior agents, in order:"]
    opinions += [f"- Agent {s.agent_index}: {s.reasoning}" for s in doc.steps[:agent_index]]
    return templates.prompt(
        "kcs",
        agent_index=str(agent_index),
        n_agents=str(n_agents if n_agents is not None else "N"),
        input_text=doc.input_text,
        prev_analysis=prev_section,
        prior_opinions="\n".join(opinions),
        comments=_comments_section(doc.comments),
        labels=_labels(space),
        block_skeleton=block_skeleton(space),
    )


@dataclass(frozen=True)
class IbcInputs:
    """What agent ``agent_index`` is shown during the chat session.

    ``analyses`` holds ``(agent, analysis_text)`` pairs, already selected by
    the caller for this agent's position relative to the session point.
    """

    agent_index: int
    analyses: tuple[tuple[int, str], ...] = ()
    comments: tuple[Comment, ...] = ()


def render_ibc_prompt(
    x: str,
    inputs: IbcInputs,
    space: LabelSpace,
    templates: TemplateSet | None = None,
) -> Prompt:
    templates = templates or default_templates()
    analyses = "\n\n".join(
        f"Analysis by Agent {idx}:\n{text}" for idx, text in inputs.analyses
    )
    return templates.prompt(
        "ibc",
        agent_index=str(inputs.agent_index),
        input_text=x,
        analyses=analyses,
        comments=_comments_section(inputs.comments),
        labels=_labels(space),
    )


def render_single_prompt(
    x: str, space: LabelSpace, templates: TemplateSet | None = None
) -> Prompt:
    templates = templates or default_templates()
    return templates.prompt(
        "single",
        input_text=x,
        labels=_labels(space),
        block_skeleton=block_skeleton(space),
    )


def render_judge_prompt(
    doc: Document,
    space: LabelSpace,
    n_agents: int | None = None,
    templates: TemplateSet | None = None,
) -> Prompt:
    n = doc.last_index if n_agents is None else n_agents
    if n < 1 or not doc.has_step(n):
        raise MissingSteps(f"judge needs steps 0..{n}, document has {len(doc.steps)}")
    templates = templates or default_templates()
    views = ["Final views of every agent, in order:"]
    for s in doc.steps[1 : n + 1]:
        views.append(
            f"- Agent {s.agent_index}: {s.reasoning} "
            f"Distribution: {format_distribution(s.distribution, space)}"
        )
    return templates.prompt(
        "judge",
        n_agents=str(n),
        input_text=doc.input_text,
        prior_opinions="\n".join(views),
        comments=_comments_section(doc.comments),
        labels=_labels(space),
        block_skeleton=block_skeleton(space),
    )


def reask_prompt(prompt: Prompt, reply: str) -> Prompt:
    return tuple(prompt) + (Message("assistant", reply), Message("user", REASK_INSTRUCTION))


@dataclass(frozen=True)
class ParsedAgentOutput:
    analysis: str
    reasoning: str
    raw_probs: dict


def _to_number(value, label: str) -> float:
    if isinstance(value, bool):
        raise NonNumeric(f"{label}: boolean is not a probability")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        try:
            out = float(value.strip().rstrip("%"))
        except ValueError:
            raise NonNumeric(f"{label}: {value!r} is not a number") from None
    else:
        raise NonNumeric(f"{label}: {value!r} is not a number")
    if not math.isfinite(out):
        raise NonNumeric(f"{label}: {value!r} is not finite")
    return out


def _first_sentence(text: str) -> str:
    for line in text.strip().splitlines():
        line = line.strip()
        if line:
            return _SENTENCE_END.split(line, maxsplit=1)[0]
    return ""


def parse_agent_output(text: str, space: LabelSpace) -> ParsedAgentOutput:
    """Pull the fenced probability block, reasoning line and analysis from a reply.

    The last fenced block wins. Labels match case-insensitively; values are
    returned as given and left for the caller to normalize.
    """
    blocks = list(_FENCE.finditer(text))
    if not blocks:
        raise ParseFailure("no fenced block in reply")
    block = blocks[-1]
    try:
        obj = json.loads(block.group(1))
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"fenced block is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseFailure("fenced block must be a JSON object keyed by label")

    lookup = {lab.lower(): lab for lab in space.labels}
    raw: dict = {}
    for key, value in obj.items():
        label = lookup.get(str(key).strip().lower())
        if label is None:
            raise LabelMismatch(f"unknown label {key!r}")
        if label in raw:
            raise LabelMismatch(f"label {label!r} given twice")
        raw[label] = _to_number(value, label)
    missing = [lab for lab in space.labels if lab not in raw]
    if missing:
        raise LabelMismatch(f"missing labels: {missing}")

    outside = (text[: block.start()] + text[block.end():]).strip()
    m = _REASONING_LINE.search(outside)
    reasoning = m.group(1).strip() if m else _first_sentence(outside)
    reasoning = reasoning or NO_REASONING
    a = _ANALYSIS_LINE.search(outside)
    return ParsedAgentOutput(
        analysis=a.group(1).strip() if a else (outside or reasoning),
        reasoning=reasoning,
        raw_probs={lab: raw[lab] for lab in space.labels},
    )


def format_agent_reply(
    analysis: str,
    reasoning: str,
    probs: Sequence[float],
    space: LabelSpace,
    comparison: str | None = None,
) -> str:
    """Write a reply in the shape the KCS prompt asks for."""
    block = json.dumps(dict(zip(space.labels, (float(p) for p in probs))))
    lines = [f"Analysis: {analysis}", f"Reasoning: {reasoning}"]
    if comparison:
        lines.append(f"Comparison: {comparison}")
    return "\n".join(lines) + f"\n```json\n{block}\n```"
