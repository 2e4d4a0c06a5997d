"""Local-file ingestion for SST-5, TweetEval (sentiment) and Financial PhraseBank.

Nothing here touches the network; fetch the corpora separately and point
:func:`default_spec` (or a hand-built :class:`DatasetSpec`) at the files.
"""
from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .core import FIVE_CLASS, THREE_CLASS, LabelSpace
from .errors import MalformedRow, SampleTooLarge, UnknownLabel

DATASETS = ("sst5", "tweeteval", "financial_phrasebank")
SPACES = {
    "sst5": FIVE_CLASS,
    "tweeteval": THREE_CLASS,
    "financial_phrasebank": THREE_CLASS,
}
FORMATS = ("tsv", "paired", "csv", "at")
PHRASEBANK_TIERS = {"50": "50Agree", "66": "66Agree", "75": "75Agree", "all": "AllAgree"}


@dataclass(frozen=True)
class Instance:
    id: str
    text: str
    gold_label_index: int

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError(f"{self.id}: empty text")
        if self.gold_label_index < 0:
            raise ValueError(f"{self.id}: negative label index")


@dataclass(frozen=True)
class DatasetSpec:
    """Where a corpus lives and how to read it.

    ``fmt`` is one of ``tsv`` (text TAB label), ``paired`` (one text file and
    a parallel ``label_path`` file), ``csv`` (header with a text/sentence and a
    label column) or ``at`` (``sentence@label`` lines). Labels may be names
    (case-insensitive) or integer indices into ``space``.
    """

    name: str
    space: LabelSpace
    path: Path
    fmt: str = "tsv"
    label_path: Path | None = None

    def __post_init__(self):
        if self.name not in DATASETS:
            raise ValueError(f"unknown dataset {self.name!r}")
        if self.fmt not in FORMATS:
            raise ValueError(f"unknown format {self.fmt!r}")
        object.__setattr__(self, "path", Path(self.path))
        if self.label_path is not None:
            object.__setattr__(self, "label_path", Path(self.label_path))


def default_spec(
    name: str,
    data_dir: str | Path,
    split: str = "test",
    phrasebank_agreement: str = "75",
) -> DatasetSpec:
    base = Path(data_dir) / name
    space = SPACES[name]
    if name == "financial_phrasebank":
        tier = PHRASEBANK_TIERS[str(phrasebank_agreement).lower()]
        return DatasetSpec(name, space, base / f"Sentences_{tier}.txt", "at")
    tsv = base / f"{split}.tsv"
    if name == "tweeteval":
        text_file = base / f"{split}_text.txt"
        if not tsv.exists() and text_file.exists():
            return DatasetSpec(name, space, text_file, "paired", base / f"{split}_labels.txt")
        return DatasetSpec(name, space, tsv, "tsv")
    csv_file = base / f"{split}.csv"
    if not tsv.exists() and csv_file.exists():
        return DatasetSpec(name, space, csv_file, "csv")
    return DatasetSpec(name, space, tsv, "tsv")


def _read_text(path: Path) -> str:
    raw = path.read_bytes()
    try:
        return raw.decode("utf-8-sig")
    except UnicodeDecodeError:
        # PhraseBank ships as Latin-1.
        return raw.decode("latin-1")


def resolve_label(token: str, space: LabelSpace, row_number: int | None = None) -> int:
    tok = token.strip()
    if tok.lstrip("-").isdigit():
        idx = int(tok)
        if 0 <= idx < space.k:
            return idx
        raise UnknownLabel(f"label index {idx} outside 0..{space.k - 1}" + _at(row_number))
    norm = tok.lower().replace("_", " ").replace("-", " ")
    norm = " ".join(norm.split())
    for i, lab in enumerate(space.labels):
        if lab.lower() == norm:
            return i
    raise UnknownLabel(f"unknown label {token!r}" + _at(row_number))


def _at(row_number: int | None) -> str:
    return f" (row {row_number})" if row_number is not None else ""


def _rows(spec: DatasetSpec):
    """Yield ``(row_number, text, label_token)`` with 1-based physical row numbers."""
    if spec.fmt == "paired":
        if spec.label_path is None:
            raise ValueError("paired format needs label_path")
        texts = _read_text(spec.path).splitlines()
        labels = _read_text(spec.label_path).splitlines()
        if len(texts) != len(labels):
            raise MalformedRow(
                f"{len(texts)} texts vs {len(labels)} labels", min(len(texts), len(labels)) + 1
            )
        for n, (text, label) in enumerate(zip(texts, labels), start=1):
            if text.strip() or label.strip():
                yield n, text, label
        return

    content = _read_text(spec.path)
    if spec.fmt == "csv":
        reader = csv.DictReader(io.StringIO(content))
        fields = {f.lower(): f for f in reader.fieldnames or []}
        text_col = fields.get("text") or fields.get("sentence")
        label_col = fields.get("label")
        if text_col is None or label_col is None:
            raise MalformedRow("csv header needs text/sentence and label columns", 1)
        for n, row in enumerate(reader, start=2):
            yield n, row[text_col] or "", row[label_col] or ""
        return

    for n, line in enumerate(content.splitlines(), start=1):
        if not line.strip():
            continue
        sep = "\t" if spec.fmt == "tsv" else "@"
        if sep not in line:
            raise MalformedRow(f"no {sep!r} separator", n)
        text, label = line.rsplit(sep, 1)
        if spec.fmt == "tsv" and n == 1 and label.strip().lower() == "label":
            continue
        yield n, text, label


def load_dataset(spec: DatasetSpec) -> list[Instance]:
    if not spec.path.exists():
        raise FileNotFoundError(spec.path)
    out = []
    for n, text, label in _rows(spec):
        text = text.strip()
        if not text:
            raise MalformedRow("empty text", n)
        idx = resolve_label(label, spec.space, n)
        out.append(Instance(f"{spec.name}:{n}", text, idx))
    return out


def sample_instances(data: Sequence[Instance], n: int, seed: int = 42) -> list[Instance]:
    """Draw ``n`` instances without replacement, in draw order."""
    if n < 0:
        raise ValueError("sample size must be non-negative")
    if n > len(data):
        raise SampleTooLarge(f"asked for {n} instances from {len(data)}")
    return random.Random(seed).sample(list(data), n)
