"""Domain types and probability-vector algebra.

Everything here is immutable; documents grow by returning extended copies,
so an earlier step or comment can never be rewritten.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import AllZero, NegativeEntry, PlaceholderInput

SUM_TOLERANCE = 1e-6

# Fixed seed hypothesis and analysis for the agent-0 record. They exist only to
# keep the prompt structure intact and must never carry task information.
SENTINEL_ANALYSIS = "(initial placeholder: no analysis has been made yet)"
SENTINEL_REASONING = "(initial placeholder hypothesis: none)"
DEGRADED_ANALYSIS = "(no parseable output)"


@dataclass(frozen=True)
class LabelSpace:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("a label space needs at least two labels")
        if any(not isinstance(lab, str) or not lab.strip() for lab in labels):
            raise ValueError("labels must be non-empty strings")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in {labels}")

    @property
    def k(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def __iter__(self):
        return iter(self.labels)

    def __len__(self):
        return len(self.labels)


THREE_CLASS = LabelSpace(("negative", "neutral", "positive"))
FIVE_CLASS = LabelSpace(
    ("very negative", "negative", "neutral", "positive", "very positive")
)


@dataclass(frozen=True)
class ProbabilityVector:
    """A distribution over a label space, or the all-zero placeholder."""

    entries: tuple[float, ...]
    placeholder: bool = False

    def __post_init__(self):
        entries = tuple(float(e) for e in self.entries)
        object.__setattr__(self, "entries", entries)
        if self.placeholder:
            if any(e != 0.0 for e in entries):
                raise ValueError("placeholder vectors must be all zeros")
            return
        if any(not (0.0 <= e <= 1.0) for e in entries):
            raise ValueError(f"entries out of [0, 1]: {entries}")
        if abs(math.fsum(entries) - 1.0) > SUM_TOLERANCE:
            raise ValueError(f"entries sum to {math.fsum(entries)}, not 1")

    @property
    def k(self) -> int:
        return len(self.entries)

    def as_dict(self, space: LabelSpace) -> dict[str, float]:
        return dict(zip(space.labels, self.entries))

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


def placeholder(space: LabelSpace) -> ProbabilityVector:
    return ProbabilityVector((0.0,) * space.k, placeholder=True)


def make_uniform(space: LabelSpace) -> ProbabilityVector:
    return ProbabilityVector((1.0 / space.k,) * space.k)


def one_hot(index: int, k: int) -> ProbabilityVector:
    return ProbabilityVector(tuple(1.0 if i == index else 0.0 for i in range(k)))


def normalize(raw: Iterable[float]) -> ProbabilityVector:
    """Divide non-negative weights by their sum."""
    values = [float(v) for v in raw]
    if any(v < 0 or math.isnan(v) for v in values):
        raise NegativeEntry(f"negative or NaN entry in {values}")
    total = math.fsum(values)
    if total <= 0:
        raise AllZero("cannot normalize an all-zero vector")
    return ProbabilityVector(tuple(v / total for v in values))


def _require_real(p: ProbabilityVector) -> None:
    if p.placeholder:
        raise PlaceholderInput("operation undefined on the placeholder distribution")


def entropy(p: ProbabilityVector) -> float:
    """Shannon entropy in nats, with 0 ln 0 = 0."""
    _require_real(p)
    return -math.fsum(x * math.log(x) for x in p.entries if x > 0)


def dist_variance(p: ProbabilityVector) -> float:
    """Population variance of the entries around their mean 1/k."""
    _require_real(p)
    mean = 1.0 / p.k
    return math.fsum((x - mean) ** 2 for x in p.entries) / p.k


def argmax_index(p: ProbabilityVector) -> int:
    _require_real(p)
    best = 0
    for i, x in enumerate(p.entries):
        if x > p.entries[best]:
            best = i
    return best


def argmax_label(p: ProbabilityVector, space: LabelSpace) -> str:
    """Most probable label; ties go to the lowest index."""
    return space.labels[argmax_index(p)]


@dataclass(frozen=True)
class AgentStepRecord:
    agent_index: int
    analysis: str
    reasoning: str
    distribution: ProbabilityVector
    degraded: bool = False

    def __post_init__(self):
        if self.agent_index < 0:
            raise ValueError("agent_index must be >= 0")
        if self.agent_index == 0:
            if self.reasoning != SENTINEL_REASONING or not self.distribution.placeholder:
                raise ValueError("the agent-0 record must hold the sentinel and placeholder")
        elif self.distribution.placeholder:
            raise ValueError("only the agent-0 record may hold the placeholder")


@dataclass(frozen=True)
class Comment:
    agent_index: int
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("comment text must be non-empty")


@dataclass(frozen=True)
class Document:
    input_text: str
    steps: tuple[AgentStepRecord, ...] = ()
    comments: tuple[Comment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "comments", tuple(self.comments))
        for i, step in enumerate(self.steps):
            if step.agent_index != i:
                raise ValueError(f"step {i} has agent_index {step.agent_index}")

    @property
    def last_index(self) -> int:
        return len(self.steps) - 1

    def has_step(self, i: int) -> bool:
        return 0 <= i < len(self.steps)

    def with_step(self, step: AgentStepRecord) -> Document:
        return Document(self.input_text, self.steps + (step,), self.comments)

    def with_comments(self, comments: Sequence[Comment]) -> Document:
        return Document(self.input_text, self.steps, self.comments + tuple(comments))
