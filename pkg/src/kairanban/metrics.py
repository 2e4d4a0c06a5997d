"""Classification, calibration and per-step dynamics statistics."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .core import LabelSpace, ProbabilityVector, argmax_index, dist_variance, entropy
from .errors import EmptyRecords, LengthMismatch

LOG_LOSS_CLIP = 1e-10
BRIER_MODES = ("mean", "sum")


@dataclass(frozen=True)
class EvalRecord:
    instance_id: str
    gold_label_index: int
    final_distribution: ProbabilityVector
    per_step_distributions: tuple[ProbabilityVector, ...] = ()
    degraded_any: bool = False

    def __post_init__(self):
        object.__setattr__(self, "per_step_distributions", tuple(self.per_step_distributions))
        if any(p.placeholder for p in self.per_step_distributions):
            raise ValueError("step distributions must not be placeholders")

    @classmethod
    def from_transcript(cls, t) -> EvalRecord:
        if t.gold_label_index is None:
            raise ValueError(f"transcript {t.instance_id} carries no gold label")
        return cls(
            t.instance_id,
            t.gold_label_index,
            t.final_distribution,
            tuple(t.per_step_distributions),
            t.degraded_any,
        )


def select(records: Sequence[EvalRecord], exclude_degraded: bool = False) -> list[EvalRecord]:
    return [r for r in records if not (exclude_degraded and r.degraded_any)]


def _check(records) -> None:
    if not records:
        raise EmptyRecords("no records to score")


def _probs(records) -> np.ndarray:
    return np.array([r.final_distribution.entries for r in records], dtype=float)


def _golds(records) -> np.ndarray:
    return np.array([r.gold_label_index for r in records], dtype=int)


def confusion_matrix(records: Sequence[EvalRecord], k: int) -> np.ndarray:
    """Rows are gold labels, columns predictions."""
    _check(records)
    preds = np.array([argmax_index(r.final_distribution) for r in records])
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (_golds(records), preds), 1)
    return cm


def per_class_f1(records: Sequence[EvalRecord], space: LabelSpace) -> np.ndarray:
    cm = confusion_matrix(records, space.k)
    tp = np.diag(cm).astype(float)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    return np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


def macro_f1(records: Sequence[EvalRecord], space: LabelSpace) -> float:
    """Unweighted mean over every label in the space; absent classes score 0."""
    return float(per_class_f1(records, space).mean())


def micro_f1(records: Sequence[EvalRecord], space: LabelSpace) -> float:
    cm = confusion_matrix(records, space.k)
    tp = np.trace(cm)
    total = cm.sum()
    # single-label: FP total == FN total == total - tp
    return float(2 * tp / (2 * tp + 2 * (total - tp)))


def log_loss(records: Sequence[EvalRecord], clip: float = LOG_LOSS_CLIP) -> float:
    _check(records)
    p = _probs(records)[np.arange(len(records)), _golds(records)]
    return float(np.mean(-np.log(np.clip(p, clip, 1.0))))


def brier(records: Sequence[EvalRecord], mode: str = "mean") -> float:
    """Squared distance to the one-hot gold; ``mean`` divides by k, ``sum`` does not."""
    _check(records)
    if mode not in BRIER_MODES:
        raise ValueError(f"brier mode must be one of {BRIER_MODES}")
    p = _probs(records)
    y = np.zeros_like(p)
    y[np.arange(len(records)), _golds(records)] = 1.0
    per = ((p - y) ** 2).sum(axis=1)
    if mode == "mean":
        per = per / p.shape[1]
    return float(per.mean())


def headline(records, space: LabelSpace, brier_mode: str = "mean") -> dict:
    return {
        "macro_f1": macro_f1(records, space),
        "micro_f1": micro_f1(records, space),
        "logloss": log_loss(records),
        "brier": brier(records, brier_mode),
    }


@dataclass(frozen=True)
class StepStats:
    """Per-agent-step means, deltas and standard errors (index 0 is agent 1)."""

    mean_entropy: tuple[float, ...]
    delta_entropy: tuple[float, ...]
    se_entropy: tuple[float, ...]
    mean_variance: tuple[float, ...]
    delta_variance: tuple[float, ...]
    se_variance: tuple[float, ...]
    n_records: int = 0

    @property
    def n_agents(self) -> int:
        return len(self.mean_entropy)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> StepStats:
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


def _deltas(means: np.ndarray) -> np.ndarray:
    d = np.zeros_like(means)
    d[1:] = means[1:] - means[:-1]
    return d


def _se(values: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    if n < 2:
        return np.zeros(values.shape[1])
    return values.std(axis=0, ddof=1) / np.sqrt(n)


def step_stats(records: Sequence[EvalRecord], n_agents: int) -> StepStats:
    _check(records)
    for r in records:
        if len(r.per_step_distributions) != n_agents:
            raise LengthMismatch(
                f"{r.instance_id}: {len(r.per_step_distributions)} steps, expected {n_agents}"
            )
    ent = np.array([[entropy(p) for p in r.per_step_distributions] for r in records])
    var = np.array([[dist_variance(p) for p in r.per_step_distributions] for r in records])
    me, mv = ent.mean(axis=0), var.mean(axis=0)
    return StepStats(
        tuple(me.tolist()), tuple(_deltas(me).tolist()), tuple(_se(ent).tolist()),
        tuple(mv.tolist()), tuple(_deltas(mv).tolist()), tuple(_se(var).tolist()),
        len(records),
    )


def cross_dataset_average(stats: Sequence[StepStats]) -> StepStats:
    """Unweighted per-step average; SEs are averaged too (descriptive only)."""
    if not stats:
        raise EmptyRecords("nothing to average")
    n = stats[0].n_agents
    if any(s.n_agents != n for s in stats):
        raise LengthMismatch("step counts differ across inputs")

    def avg(name):
        return tuple(np.mean([getattr(s, name) for s in stats], axis=0).tolist())

    return StepStats(
        avg("mean_entropy"), avg("delta_entropy"), avg("se_entropy"),
        avg("mean_variance"), avg("delta_variance"), avg("se_variance"),
        sum(s.n_records for s in stats),
    )


def format_cell(mean: float, delta: float) -> str:
    return f"{mean:.4f}({delta:+.4f})"


def format_step_table(by_system: dict, quantity: str = "entropy") -> str:
    """Render ``Agent | <system> ...`` rows as ``value(+delta)`` cells."""
    if quantity not in ("entropy", "variance"):
        raise ValueError("quantity must be 'entropy' or 'variance'")
    names = list(by_system)
    n = max(s.n_agents for s in by_system.values())
    rows = [["Agent"] + names]
    for step in range(n):
        row = [str(step + 1)]
        for name in names:
            s = by_system[name]
            if step < s.n_agents:
                row.append(format_cell(getattr(s, f"mean_{quantity}")[step],
                                       getattr(s, f"delta_{quantity}")[step]))
            else:
                row.append("")
        rows.append(row)
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    return "\n".join(
        "  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows
    ) + "\n"
