"""Run system x dataset grids, persist transcripts, and emit tables and plot data.

Output tree under ``out``::

    transcripts/<system>__<dataset>.jsonl   one transcript per line, sample order
    summary_<dataset>.csv                   model,macro_f1,micro_f1,logloss,brier
    summary.txt                             human-readable tables
    summary.json                            everything, including config and timing
    plot_<dataset>.csv, plot_average.csv    per-step entropy/variance means and SEs
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import metrics
from .backend import HttpBackend, ScriptedBackend
from .core import LabelSpace
from .datasets import DATASETS, SPACES, DatasetSpec, default_spec, load_dataset, sample_instances
from .errors import ConfigError, KairanbanError
from .orchestrator import FINALIZE_MODES, SYSTEMS, PipelineConfig, Transcript, run_instance

log = logging.getLogger(__name__)

DISPLAY_NAMES = {"single": "single", "kcs": "KCS", "kcs_ibc": "KCS+IBC"}
SUMMARY_COLUMNS = ("model", "macro_f1", "micro_f1", "logloss", "brier")
PLOT_COLUMNS = ("step", "mean_entropy", "se_entropy", "mean_variance", "se_variance", "system")
MULTI_AGENT = ("kcs", "kcs_ibc")


@dataclass
class RunConfig:
    systems: tuple[str, ...] = SYSTEMS
    datasets: tuple[str, ...] = DATASETS
    n_agents: int = 6
    ibc_index: int = 3
    sample_size: int = 500
    seed: int = 42
    data_dir: Path = Path("data")
    data_paths: dict = field(default_factory=dict)
    backend_url: str | None = None
    model: str = "default"
    max_tokens: int = 512
    max_in_flight: int = 4
    mock_script: Path | None = None
    out: Path = Path("runs/latest")
    finalize: str = "judge"
    brier: str = "mean"
    exclude_degraded: bool = False
    sst5_split: str = "test"
    phrasebank_agreement: str = "75"

    def __post_init__(self):
        self.systems = tuple(self.systems)
        self.datasets = tuple(self.datasets)
        self.data_dir = Path(self.data_dir)
        self.out = Path(self.out)
        if self.mock_script is not None:
            self.mock_script = Path(self.mock_script)

    def validate(self) -> None:
        bad = [s for s in self.systems if s not in SYSTEMS]
        if bad or not self.systems:
            raise ConfigError(f"systems must be a non-empty subset of {SYSTEMS}, got {self.systems}")
        bad = [d for d in self.datasets if d not in DATASETS]
        if bad or not self.datasets:
            raise ConfigError(f"datasets must be a non-empty subset of {DATASETS}, got {self.datasets}")
        if self.sample_size < 1:
            raise ConfigError("sample_size must be >= 1")
        if self.brier not in metrics.BRIER_MODES:
            raise ConfigError(f"brier must be one of {metrics.BRIER_MODES}")
        if self.finalize not in FINALIZE_MODES:
            raise ConfigError(f"finalize must be one of {FINALIZE_MODES}")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        for system in self.systems:
            for dataset in self.datasets:
                self.pipeline_config(system, SPACES[dataset])

    def pipeline_config(self, system: str, space: LabelSpace) -> PipelineConfig:
        return PipelineConfig(system, space, self.n_agents, self.ibc_index, self.finalize,
                              self.model, 0.0, self.max_tokens)

    def dataset_spec(self, name: str) -> DatasetSpec:
        if name in self.data_paths:
            path = Path(self.data_paths[name])
            fmt = {".csv": "csv", ".tsv": "tsv"}.get(path.suffix.lower())
            if fmt is None:
                fmt = "at" if name == "financial_phrasebank" else "tsv"
            return DatasetSpec(name, SPACES[name], path, fmt)
        split = self.sst5_split if name == "sst5" else "test"
        return default_spec(name, self.data_dir, split, self.phrasebank_agreement)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key, value in d.items():
            if isinstance(value, Path):
                d[key] = str(value)
            elif isinstance(value, tuple):
                d[key] = list(value)
        d["data_paths"] = {k: str(v) for k, v in self.data_paths.items()}
        return d


@dataclass
class CellResult:
    system: str
    dataset: str
    n: int = 0
    metrics: dict = field(default_factory=dict)
    degraded: int = 0
    step_stats: metrics.StepStats | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["step_stats"] = self.step_stats.to_dict() if self.step_stats else None
        return d


@dataclass
class RunSummary:
    config: dict
    cells: list[CellResult]
    average_step_stats: dict = field(default_factory=dict)  # system -> StepStats
    wall_clock_s: float = 0.0
    log_loss_clip: float = metrics.LOG_LOSS_CLIP

    @property
    def failed(self) -> list[CellResult]:
        return [c for c in self.cells if c.error]

    def cell(self, system: str, dataset: str) -> CellResult:
        for c in self.cells:
            if c.system == system and c.dataset == dataset:
                return c
        raise KeyError((system, dataset))

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "cells": [c.to_dict() for c in self.cells],
            "average_step_stats": {k: v.to_dict() for k, v in self.average_step_stats.items()},
            "wall_clock_s": self.wall_clock_s,
            "log_loss_clip": self.log_loss_clip,
        }


# -- persistence ------------------------------------------------------------

def transcript_path(out: Path, system: str, dataset: str) -> Path:
    return Path(out) / "transcripts" / f"{system}__{dataset}.jsonl"


def _dumps(t: Transcript) -> str:
    return json.dumps(t.to_dict(), ensure_ascii=False)


def write_transcripts(path: str | Path, transcripts: Iterable[Transcript]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in transcripts:
            fh.write(_dumps(t) + "\n")


def read_transcripts(path: str | Path) -> list[Transcript]:
    """Read a transcript file, dropping (and trimming away) a torn final line."""
    path = Path(path)
    if not path.exists():
        return []
    good, torn = [], False
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                good.append(Transcript.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                torn = True
    if torn:
        log.warning("%s: discarding unreadable lines", path)
        write_transcripts(path, good)
    return good


def _fmt(x: float) -> str:
    return repr(float(x))


def write_summary(out: str | Path, summary: RunSummary) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    datasets = list(dict.fromkeys(c.dataset for c in summary.cells))
    text = []
    for dataset in datasets:
        cells = [c for c in summary.cells if c.dataset == dataset and not c.error]
        with open(out / f"summary_{dataset}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for c in cells:
                w.writerow([DISPLAY_NAMES[c.system]] + [_fmt(c.metrics[k]) for k in SUMMARY_COLUMNS[1:]])
        text.append(format_metrics_table(dataset, cells))
    if summary.average_step_stats:
        named = {DISPLAY_NAMES[s]: st for s, st in summary.average_step_stats.items()}
        text.append("Changes in entropy\n" + metrics.format_step_table(named, "entropy"))
        text.append("Changes in variance\n" + metrics.format_step_table(named, "variance"))
    for c in summary.failed:
        text.append(f"FAILED {c.system} / {c.dataset}: {c.error}\n")
    (out / "summary.txt").write_text("\n".join(text), encoding="utf-8")
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2), encoding="utf-8")


def format_metrics_table(dataset: str, cells: Sequence[CellResult]) -> str:
    rows = [["model", "macro-F1", "micro-F1", "logloss", "brier"]]
    for c in cells:
        rows.append([DISPLAY_NAMES[c.system]] + [f"{c.metrics[k]:.4f}" for k in SUMMARY_COLUMNS[1:]])
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = [dataset]
    for r in rows:
        lines.append("  ".join([r[0].ljust(widths[0])] + [v.rjust(w) for v, w in zip(r[1:], widths[1:])]))
    return "\n".join(lines) + "\n"


def emit_plot_data(path: str | Path, by_system: dict) -> None:
    """One row per agent step per system."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for system, st in by_system.items():
            for s in range(st.n_agents):
                w.writerow([s + 1, _fmt(st.mean_entropy[s]), _fmt(st.se_entropy[s]),
                            _fmt(st.mean_variance[s]), _fmt(st.se_variance[s]),
                            DISPLAY_NAMES.get(system, system)])


# -- running ----------------------------------------------------------------

def make_backend(cfg: RunConfig, system: str, dataset: str):
    if cfg.mock_script is None:
        return HttpBackend(cfg.backend_url, max_in_flight=cfg.max_in_flight)
    path = cfg.mock_script
    if path.is_dir():
        k = SPACES[dataset].k
        for name in (f"{system}__{dataset}.jsonl", f"{system}__k{k}.jsonl", f"{system}.jsonl"):
            if (path / name).exists():
                path = path / name
                break
        else:
            raise FileNotFoundError(f"no mock script for {system}/{dataset} in {cfg.mock_script}")
    return ScriptedBackend.from_file(path)


def summarize_cell(
    system: str,
    dataset: str,
    transcripts: Sequence[Transcript],
    space: LabelSpace,
    n_agents: int,
    brier_mode: str = "mean",
    exclude_degraded: bool = False,
) -> CellResult:
    records = [metrics.EvalRecord.from_transcript(t) for t in transcripts]
    degraded = sum(r.degraded_any for r in records)
    records = metrics.select(records, exclude_degraded)
    cell = CellResult(system, dataset, len(records), metrics.headline(records, space, brier_mode),
                      degraded)
    if system in MULTI_AGENT:
        cell.step_stats = metrics.step_stats(records, n_agents)
    return cell


def _run_cell(cfg: RunConfig, system: str, dataset: str, backend) -> CellResult:
    spec = cfg.dataset_spec(dataset)
    pcfg = cfg.pipeline_config(system, spec.space)
    sample = sample_instances(load_dataset(spec), cfg.sample_size, cfg.seed)

    path = transcript_path(cfg.out, system, dataset)
    done = {t.instance_id: t for t in read_transcripts(path)}
    echo = pcfg.to_dict()
    for t in done.values():
        if t.config != echo:
            raise ConfigError(f"{path} was written under a different pipeline config")
    todo = [inst for inst in sample if inst.id not in done]
    log.info("%s/%s: %d of %d instances to run", system, dataset, len(todo), len(sample))

    def work(inst):
        return run_instance(inst.text, pcfg, backend.session(), instance_id=inst.id,
                            gold_label_index=inst.gold_label_index)

    if todo:
        path.parent.mkdir(parents=True, exist_ok=True)
        workers = max(1, int(getattr(backend, "max_in_flight", 1)))
        with ThreadPoolExecutor(max_workers=workers) as pool, \
                open(path, "a", encoding="utf-8", newline="\n") as fh:
            # map yields in submission order, so the file is always a prefix of the sample
            for t in pool.map(work, todo):
                fh.write(_dumps(t) + "\n")
                fh.flush()
                done[t.instance_id] = t

    transcripts = [done[inst.id] for inst in sample]
    return summarize_cell(system, dataset, transcripts, spec.space, cfg.n_agents, cfg.brier,
                          cfg.exclude_degraded)


def _average_step_stats(cells: Sequence[CellResult]) -> dict:
    out = {}
    for system in MULTI_AGENT:
        stats = [c.step_stats for c in cells if c.system == system and c.step_stats and not c.error]
        if stats:
            out[system] = metrics.cross_dataset_average(stats)
    return out


def write_outputs(cfg_out: Path, summary: RunSummary) -> None:
    write_summary(cfg_out, summary)
    for dataset in dict.fromkeys(c.dataset for c in summary.cells):
        by_system = {c.system: c.step_stats for c in summary.cells
                     if c.dataset == dataset and c.step_stats and not c.error}
        if by_system:
            emit_plot_data(Path(cfg_out) / f"plot_{dataset}.csv", by_system)
    if summary.average_step_stats:
        emit_plot_data(Path(cfg_out) / "plot_average.csv", summary.average_step_stats)


def run_experiment(cfg: RunConfig, backend=None) -> RunSummary:
    """Run every (system, dataset) cell; a failing cell is recorded, not raised.

    ``backend`` overrides per-cell backend construction (handy for tests).
    Cells resume from whatever transcripts already exist under ``cfg.out``.
    """
    cfg.validate()
    start = time.monotonic()
    cells = []
    for system in cfg.systems:
        for dataset in cfg.datasets:
            try:
                b = backend if backend is not None else make_backend(cfg, system, dataset)
                cells.append(_run_cell(cfg, system, dataset, b))
            except (KairanbanError, OSError) as exc:
                log.error("cell %s/%s failed: %s", system, dataset, exc)
                cells.append(CellResult(system, dataset, error=f"{type(exc).__name__}: {exc}"))
    summary = RunSummary(cfg.to_dict(), cells, _average_step_stats(cells),
                         time.monotonic() - start)
    write_outputs(cfg.out, summary)
    return summary


def report(out: str | Path, brier_mode: str = "mean", exclude_degraded: bool = False) -> RunSummary:
    """Recompute every metric from stored transcripts; no backend calls."""
    out = Path(out)
    cells = []
    for path in sorted((out / "transcripts").glob("*__*.jsonl")):
        system, dataset = path.stem.split("__", 1)
        try:
            transcripts = read_transcripts(path)
            if not transcripts:
                raise KairanbanError("no transcripts")
            pcfg = PipelineConfig.from_dict(transcripts[0].config)
            cells.append(summarize_cell(system, dataset, transcripts, pcfg.space, pcfg.n_agents,
                                        brier_mode, exclude_degraded))
        except (KairanbanError, OSError, ValueError) as exc:
            cells.append(CellResult(system, dataset, error=f"{type(exc).__name__}: {exc}"))
    order = {s: i for i, s in enumerate(SYSTEMS)}
    cells.sort(key=lambda c: (order.get(c.system, 99), c.dataset))
    summary = RunSummary({"out": str(out), "brier": brier_mode,
                          "exclude_degraded": exclude_degraded},
                         cells, _average_step_stats(cells))
    write_outputs(out, summary)
    return summary


# -- CLI --------------------------------------------------------------------

_LIST_KEYS = {"system": "systems", "systems": "systems", "dataset": "datasets",
              "datasets": "datasets"}
_INT_KEYS = {"n_agents", "ibc_index", "sample_size", "seed", "max_tokens", "max_in_flight"}
_BOOL_KEYS = {"exclude_degraded"}


def parse_config_file(path: str | Path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment; lists are comma-separated."""
    values: dict = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        _assign(values, key, value)
    return values


def _assign(values: dict, key: str, value) -> None:
    if key in _LIST_KEYS:
        items = value if isinstance(value, list) else [value]
        values[_LIST_KEYS[key]] = tuple(x.strip() for v in items for x in str(v).split(",") if x.strip())
    elif key == "data_path":
        items = value if isinstance(value, list) else [value]
        paths = values.setdefault("data_paths", {})
        for item in items:
            for part in str(item).split(","):
                if "=" not in part:
                    raise ConfigError(f"data_path needs NAME=PATH, got {part!r}")
                name, p = part.split("=", 1)
                paths[name.strip()] = p.strip()
    elif key in _INT_KEYS:
        try:
            values[key] = int(value)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {value!r}") from None
    elif key in _BOOL_KEYS:
        values[key] = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
    elif key in {f.name for f in dataclasses.fields(RunConfig)}:
        values[key] = value
    else:
        raise ConfigError(f"unknown config key {key!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kairanban",
        description="Sequential multi-agent sentiment inference: run, report, validate.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def grid_flags(p):
        p.add_argument("--config", help="flat key = value file; flags override it")
        p.add_argument("--system", action="append", help="single, kcs, kcs_ibc (repeatable or comma list)")
        p.add_argument("--dataset", action="append", help="sst5, tweeteval, financial_phrasebank")
        p.add_argument("--n-agents", type=int)
        p.add_argument("--ibc-index", type=int)
        p.add_argument("--sample-size", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--backend-url")
        p.add_argument("--model")
        p.add_argument("--max-tokens", type=int)
        p.add_argument("--max-in-flight", type=int)
        p.add_argument("--mock-script", help="JSON-lines script file, or a directory of them")
        p.add_argument("--out")
        p.add_argument("--finalize", choices=FINALIZE_MODES)
        p.add_argument("--brier", choices=metrics.BRIER_MODES)
        p.add_argument("--exclude-degraded", action="store_true", default=None)
        p.add_argument("--data-dir")
        p.add_argument("--data-path", action="append", help="NAME=PATH override (repeatable)")
        p.add_argument("--sst5-split")
        p.add_argument("--phrasebank-agreement", choices=("50", "66", "75", "all"))

    grid_flags(sub.add_parser("run", help="run the experiment grid"))
    grid_flags(sub.add_parser("validate-config", help="check a configuration without running"))
    rep = sub.add_parser("report", help="recompute metrics from stored transcripts")
    rep.add_argument("--out", required=True)
    rep.add_argument("--brier", choices=metrics.BRIER_MODES, default="mean")
    rep.add_argument("--exclude-degraded", action="store_true")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = parse_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ("config", "command", "verbose") or value is None:
            continue
        _assign(values, key, value)
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report":
        summary = report(args.out, args.brier, args.exclude_degraded)
        print((Path(args.out) / "summary.txt").read_text(encoding="utf-8"))
        return 1 if summary.failed or not summary.cells else 0

    try:
        cfg = config_from_args(args)
        cfg.validate()
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate-config":
        print(json.dumps(cfg.to_dict(), indent=2))
        return 0

    summary = run_experiment(cfg)
    print((cfg.out / "summary.txt").read_text(encoding="utf-8"))
    return 1 if summary.failed else 0


if __name__ == "__main__":
    sys.exit(main())
