"""The three inference systems run as explicit state transitions over a Document.

single   : one call, one distribution.
kcs      : agents 1..N extend the circulating document in turn, then a judge
           fuses the finished document.
kcs_ibc  : as kcs, but after agent m-1 the circulation pauses for one informal
           chat round (agents 0..N each comment once); the comments join the
           document and agents m..N see them.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any

from . import prompting
from .backend import CompletionRequest, Message
from .core import (
    DEGRADED_ANALYSIS,
    SENTINEL_ANALYSIS,
    SENTINEL_REASONING,
    AgentStepRecord,
    Comment,
    Document,
    LabelSpace,
    ProbabilityVector,
    make_uniform,
    normalize,
    placeholder,
)
from .errors import (
    AllZero,
    ConfigError,
    EmptyInstance,
    MissingAnalysis,
    MissingPredecessor,
    MissingSteps,
    NegativeEntry,
    ParseError,
)
from .prompting import IbcInputs, ParsedAgentOutput, Prompt, TemplateSet

log = logging.getLogger(__name__)

SYSTEMS = ("single", "kcs", "kcs_ibc")
FINALIZE_MODES = ("judge", "last_step")
DEGRADED_COMMENT = "(no comment)"


@dataclass(frozen=True)
class PipelineConfig:
    system: str
    space: LabelSpace
    n_agents: int = 6
    ibc_index: int = 3
    finalize: str = "judge"
    model: str = "default"
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}; expected one of {SYSTEMS}")
        if self.finalize not in FINALIZE_MODES:
            raise ConfigError(f"unknown finalize mode {self.finalize!r}")
        if self.n_agents < 1:
            raise ConfigError("n_agents must be >= 1")
        if not 1 <= self.ibc_index <= self.n_agents:
            raise ConfigError(
                f"ibc_index must lie in [1, n_agents={self.n_agents}], got {self.ibc_index}"
            )
        if self.max_tokens <= 0:
            raise ConfigError("max_tokens must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["space"] = list(self.space.labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> PipelineConfig:
        d = dict(d)
        d["space"] = LabelSpace(tuple(d["space"]))
        return cls(**d)


@dataclass
class CallRecord:
    phase: str  # kcs | ibc | judge | single
    agent_index: int
    prompt: Prompt
    response: str
    parsed: dict | None = None
    degraded: bool = False
    attempt: int = 1
    latency_ms: int = 0

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "agent_index": self.agent_index,
            "prompt": [{"role": m.role, "content": m.content} for m in self.prompt],
            "response": self.response,
            "parsed": self.parsed,
            "degraded": self.degraded,
            "attempt": self.attempt,
            "latency_ms": self.latency_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CallRecord:
        d = dict(d)
        d["prompt"] = tuple(Message(m["role"], m["content"]) for m in d["prompt"])
        return cls(**d)


def _vec_to_json(p: ProbabilityVector) -> dict:
    return {"entries": list(p.entries), "placeholder": p.placeholder}


def _vec_from_json(d: dict) -> ProbabilityVector:
    return ProbabilityVector(tuple(d["entries"]), d.get("placeholder", False))


@dataclass
class Transcript:
    instance_id: str
    config: dict
    input_text: str
    calls: list[CallRecord]
    comments: list[Comment]
    final_distribution: ProbabilityVector
    per_step_distributions: list[ProbabilityVector]
    gold_label_index: int | None = None

    @property
    def degraded_any(self) -> bool:
        return any(c.degraded for c in self.calls)

    @property
    def phases(self) -> list[str]:
        """Phase tag per logical call (re-asks folded into their first attempt)."""
        return [c.phase for c in self.calls if c.attempt == 1]

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "config": self.config,
            "input_text": self.input_text,
            "gold_label_index": self.gold_label_index,
            "calls": [c.to_dict() for c in self.calls],
            "comments": [{"agent_index": c.agent_index, "text": c.text} for c in self.comments],
            "final_distribution": _vec_to_json(self.final_distribution),
            "per_step_distributions": [_vec_to_json(p) for p in self.per_step_distributions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Transcript:
        return cls(
            instance_id=d["instance_id"],
            config=d["config"],
            input_text=d["input_text"],
            gold_label_index=d.get("gold_label_index"),
            calls=[CallRecord.from_dict(c) for c in d["calls"]],
            comments=[Comment(c["agent_index"], c["text"]) for c in d["comments"]],
            final_distribution=_vec_from_json(d["final_distribution"]),
            per_step_distributions=[_vec_from_json(p) for p in d["per_step_distributions"]],
        )


def _call(backend, prompt: Prompt, cfg: PipelineConfig):
    req = CompletionRequest(cfg.model, prompt, cfg.temperature, cfg.max_tokens)
    return backend.complete(req)


def _try_parse(text: str, space: LabelSpace):
    try:
        parsed = prompting.parse_agent_output(text, space)
        dist = normalize(parsed.raw_probs[lab] for lab in space.labels)
    except (ParseError, AllZero, NegativeEntry) as exc:
        return None, None, str(exc)
    return parsed, dist, None


def _parsed_json(parsed: ParsedAgentOutput, dist: ProbabilityVector) -> dict:
    return {
        "analysis": parsed.analysis,
        "reasoning": parsed.reasoning,
        "raw_probs": parsed.raw_probs,
        "distribution": list(dist.entries),
    }


def _ask_distribution(prompt, phase, agent_index, cfg, backend, calls):
    """Ask for a probability block, re-asking once; fall back to uniform.

    Returns ``(parsed or None, distribution, degraded)``.
    """
    resp = _call(backend, prompt, cfg)
    parsed, dist, err = _try_parse(resp.text, cfg.space)
    rec = CallRecord(phase, agent_index, prompt, resp.text, latency_ms=resp.latency_ms)
    calls.append(rec)
    if parsed is not None:
        rec.parsed = _parsed_json(parsed, dist)
        return parsed, dist, False

    log.info("%s agent %d: unparseable reply (%s); re-asking", phase, agent_index, err)
    retry_prompt = prompting.reask_prompt(prompt, resp.text)
    resp2 = _call(backend, retry_prompt, cfg)
    parsed, dist, err = _try_parse(resp2.text, cfg.space)
    rec2 = CallRecord(phase, agent_index, retry_prompt, resp2.text, attempt=2,
                      latency_ms=resp2.latency_ms)
    calls.append(rec2)
    if parsed is not None:
        rec2.parsed = _parsed_json(parsed, dist)
        return parsed, dist, False

    log.warning("%s agent %d: degraded to uniform (%s)", phase, agent_index, err)
    rec2.degraded = True
    return None, make_uniform(cfg.space), True


def init_document(x: str, cfg: PipelineConfig) -> Document:
    """Seed document: sentinel analysis and hypothesis, all-zero placeholder distribution."""
    if not x or not x.strip():
        raise EmptyInstance("instance text is empty")
    seed = AgentStepRecord(0, SENTINEL_ANALYSIS, SENTINEL_REASONING, placeholder(cfg.space))
    return Document(x, (seed,), ())


def kcs_step(
    doc: Document,
    i: int,
    cfg: PipelineConfig,
    backend,
    calls: list | None = None,
    templates: TemplateSet | None = None,
) -> Document:
    calls = calls if calls is not None else []
    if not 1 <= i <= cfg.n_agents:
        raise ValueError(f"agent index {i} outside 1..{cfg.n_agents}")
    if not doc.has_step(i - 1):
        raise MissingPredecessor(f"document lacks step {i - 1}")
    if doc.has_step(i):
        raise ValueError(f"document already holds step {i}")
    prompt = prompting.render_kcs_prompt(doc, i, cfg.space, cfg.n_agents, templates)
    parsed, dist, degraded = _ask_distribution(prompt, "kcs", i, cfg, backend, calls)
    if degraded:
        step = AgentStepRecord(i, DEGRADED_ANALYSIS, DEGRADED_ANALYSIS, dist, degraded=True)
    else:
        step = AgentStepRecord(i, parsed.analysis, parsed.reasoning, dist)
    return doc.with_step(step)


def _analysis(doc: Document, j: int) -> tuple[int, str]:
    if not doc.has_step(j):
        raise MissingAnalysis(f"document has no analysis from agent {j}")
    return (j, doc.steps[j].analysis)


def ibc_inputs(doc: Document, j: int, m: int, comments: tuple[Comment, ...]) -> IbcInputs:
    """Select what agent ``j`` sees, given the session point ``m``.

    ``comments`` are those already produced in this session (agents < j).
    """
    if j == 0:
        return IbcInputs(0, (_analysis(doc, 0),), ())
    if j < m:
        return IbcInputs(j, (_analysis(doc, j), _analysis(doc, j - 1)), comments)
    if j == m:
        return IbcInputs(j, (_analysis(doc, m - 1),), comments)
    return IbcInputs(j, (), comments)


def ibc_session(
    doc: Document,
    cfg: PipelineConfig,
    backend,
    calls: list | None = None,
    templates: TemplateSet | None = None,
) -> Document:
    calls = calls if calls is not None else []
    m = cfg.ibc_index
    if doc.comments:
        raise ValueError("the chat session runs at most once per document")
    if not doc.has_step(m - 1):
        raise MissingAnalysis(f"chat session at m={m} needs steps 0..{m - 1}")
    if doc.has_step(m):
        raise ValueError(f"chat session must run before step {m}")
    session: list[Comment] = []
    for j in range(cfg.n_agents + 1):
        inputs = ibc_inputs(doc, j, m, tuple(session))
        prompt = prompting.render_ibc_prompt(doc.input_text, inputs, cfg.space, templates)
        resp = _call(backend, prompt, cfg)
        text = resp.text.strip()
        degraded = not text
        calls.append(CallRecord("ibc", j, prompt, resp.text, parsed={"comment": text},
                                degraded=degraded, latency_ms=resp.latency_ms))
        session.append(Comment(j, text or DEGRADED_COMMENT))
    return doc.with_comments(session)


def judge_finalize(
    doc: Document,
    cfg: PipelineConfig,
    backend,
    calls: list | None = None,
    templates: TemplateSet | None = None,
) -> ProbabilityVector:
    calls = calls if calls is not None else []
    if not doc.has_step(cfg.n_agents):
        raise MissingSteps(f"judge needs steps 0..{cfg.n_agents}")
    prompt = prompting.render_judge_prompt(doc, cfg.space, cfg.n_agents, templates)
    _, dist, _ = _ask_distribution(prompt, "judge", 0, cfg, backend, calls)
    return dist


def run_single(
    x: str,
    cfg: PipelineConfig,
    backend,
    instance_id: str = "",
    gold_label_index: int | None = None,
    templates: TemplateSet | None = None,
) -> Transcript:
    if cfg.system != "single":
        raise ConfigError("run_single needs system='single'")
    if not x or not x.strip():
        raise EmptyInstance("instance text is empty")
    calls: list[CallRecord] = []
    prompt = prompting.render_single_prompt(x, cfg.space, templates)
    _, dist, _ = _ask_distribution(prompt, "single", 0, cfg, backend, calls)
    return Transcript(instance_id, cfg.to_dict(), x, calls, [], dist, [dist], gold_label_index)


def run_pipeline(
    x: str,
    cfg: PipelineConfig,
    backend,
    instance_id: str = "",
    gold_label_index: int | None = None,
    templates: TemplateSet | None = None,
) -> Transcript:
    if cfg.system not in ("kcs", "kcs_ibc"):
        raise ConfigError("run_pipeline needs system 'kcs' or 'kcs_ibc'")
    calls: list[CallRecord] = []
    doc = init_document(x, cfg)
    pause = cfg.ibc_index if cfg.system == "kcs_ibc" else None
    for i in range(1, cfg.n_agents + 1):
        if i == pause:
            doc = ibc_session(doc, cfg, backend, calls, templates)
        doc = kcs_step(doc, i, cfg, backend, calls, templates)
    if cfg.finalize == "judge":
        final = judge_finalize(doc, cfg, backend, calls, templates)
    else:
        final = doc.steps[cfg.n_agents].distribution
    return Transcript(
        instance_id,
        cfg.to_dict(),
        x,
        calls,
        list(doc.comments),
        final,
        [s.distribution for s in doc.steps[1:]],
        gold_label_index,
    )


def run_instance(x: str, cfg: PipelineConfig, backend, **kwargs: Any) -> Transcript:
    if cfg.system == "single":
        return run_single(x, cfg, backend, **kwargs)
    return run_pipeline(x, cfg, backend, **kwargs)
