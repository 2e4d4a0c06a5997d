"""Canned reply scripts that drive the pipelines without any model.

The packaged scripts under ``fixtures/`` are generated by this module and
checked in; a test keeps the two in sync.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .backend import ScriptedBackend
from .core import FIVE_CLASS, THREE_CLASS, LabelSpace
from .prompting import format_agent_reply

FIXTURE_DIR = Path(__file__).parent / "fixtures"


@dataclass(frozen=True)
class Reply:
    text: str
    fingerprint: str | None = None
    malformed: bool = False


@dataclass(frozen=True)
class Script:
    replies: tuple[Reply, ...]

    def backend(self) -> ScriptedBackend:
        queue = [r.text for r in self.replies if r.fingerprint is None]
        mapped = {r.fingerprint: r.text for r in self.replies if r.fingerprint}
        return ScriptedBackend(queue, mapped)

    def __len__(self):
        return len(self.replies)


def write_script(script: Script, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in script.replies:
            row = {"reply": r.text}
            if r.fingerprint:
                row["fingerprint"] = r.fingerprint
            if r.malformed:
                row["malformed"] = True
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def load_script(path: str | Path) -> Script:
    replies = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                replies.append(Reply(row["reply"], row.get("fingerprint"), row.get("malformed", False)))
    return Script(tuple(replies))


def peak_distribution(peak: float, target: int, k: int) -> list[float]:
    rest = round((1.0 - peak) / (k - 1), 6)
    return [peak if i == target else rest for i in range(k)]


def converging_peaks(n_agents: int, low: float = 0.45, high: float = 0.85) -> list[float]:
    """Peak mass per step, rising linearly so entropy falls and variance rises."""
    if n_agents == 1:
        return [round((low + high) / 2, 4)]
    return [round(low + (high - low) * s / (n_agents - 1), 4) for s in range(n_agents)]


def _kcs_reply(step: int, probs: Sequence[float], space: LabelSpace, target: str) -> str:
    return format_agent_reply(
        analysis=f"Agent {step} reads the text as leaning {target}.",
        reasoning=f"The wording is mostly {target} and the earlier doubts look weaker now.",
        probs=probs,
        space=space,
        comparison="I agree with the previous agent but hold the view a little more firmly.",
    )


def _ibc_reply(j: int, target: str) -> str:
    return (f"Honestly it feels {target} to me overall, though agent {j} notices "
            f"a small note of reservation in the tone.")


def _judge_reply(probs, space, target) -> str:
    return format_agent_reply(
        analysis=f"The agents converge on {target}.",
        reasoning=f"Most agents and the chat support a {target} reading.",
        probs=probs,
        space=space,
    )


def _assemble(step_probs, judge_probs, n_agents, m, space, system, target) -> Script:
    kcs = [_kcs_reply(s + 1, p, space, target) for s, p in enumerate(step_probs)]
    judge = _judge_reply(judge_probs, space, target)
    if system == "single":
        texts = [judge]
    elif system == "kcs":
        texts = kcs + [judge]
    elif system == "kcs_ibc":
        chat = [_ibc_reply(j, target) for j in range(n_agents + 1)]
        texts = kcs[: m - 1] + chat + kcs[m - 1:] + [judge]
    else:
        raise ValueError(f"unknown system {system!r}")
    return Script(tuple(Reply(t) for t in texts))


def converging_script(
    n_agents: int = 6,
    m: int = 3,
    space: LabelSpace = THREE_CLASS,
    system: str = "kcs_ibc",
) -> Script:
    """Replies in call order whose step blocks grow steadily more confident."""
    if not 1 <= m <= n_agents:
        raise ValueError("need 1 <= m <= n_agents")
    target = space.k - 1
    peaks = converging_peaks(n_agents)
    step_probs = [peak_distribution(a, target, space.k) for a in peaks]
    return _assemble(step_probs, step_probs[-1], n_agents, m, space, system,
                     space.labels[target])


def uniform_script(
    n_agents: int = 6,
    m: int = 3,
    space: LabelSpace = THREE_CLASS,
    system: str = "kcs_ibc",
) -> Script:
    probs = [1.0 / space.k] * space.k
    return _assemble([probs] * n_agents, probs, n_agents, m, space, system, "mixed")


def fixture_path(system: str, k: int) -> Path:
    return FIXTURE_DIR / f"{system}__k{k}.jsonl"


def regenerate_fixtures(directory: str | Path = FIXTURE_DIR) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for space in (THREE_CLASS, FIVE_CLASS):
        for system in ("single", "kcs", "kcs_ibc"):
            path = directory / f"{system}__k{space.k}.jsonl"
            write_script(converging_script(6, 3, space, system), path)
            written.append(path)
    return written


if __name__ == "__main__":
    for p in regenerate_fixtures():
        print(p)
