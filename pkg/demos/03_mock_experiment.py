"""
A full experiment grid without a model
======================================

``run_experiment`` walks every (system, dataset) cell, writes one JSONL
transcript per cell, and summarises.  Here the packaged reply scripts
replace the model and two tiny datasets are written to a temp folder.
Rerunning into the same output folder resumes instead of repeating work.
"""

import tempfile
from pathlib import Path

from kairanban.experiment import RunConfig, report, run_experiment
from kairanban.mockfixtures import FIXTURE_DIR

root = Path(tempfile.mkdtemp())
(root / "tweets.tsv").write_text(
    "".join(f"tweet {i}\t{('negative', 'neutral', 'positive')[i % 3]}\n" for i in range(30)))
(root / "reviews.tsv").write_text("".join(f"review {i}\t{i % 5}\n" for i in range(30)))

cfg = RunConfig(
    datasets=("tweeteval", "sst5"),
    sample_size=10,
    data_paths={"tweeteval": root / "tweets.tsv", "sst5": root / "reviews.tsv"},
    mock_script=FIXTURE_DIR,
    out=root / "out",
)

###############################################################################
# First pass: every instance is new.

summary = run_experiment(cfg)
print((cfg.out / "summary.txt").read_text())

###############################################################################
# The scripted model always leans towards the last label, so macro-F1 is
# poor while the per-step entropy falls steadily.  That falling entropy
# is exactly what the plot CSVs hold:

print((cfg.out / "plot_tweeteval.csv").read_text())

###############################################################################
# Resuming and re-reporting
# -------------------------
# A second run finds every instance id already on disk and makes no
# calls.  ``report`` recomputes metrics from the transcripts alone,
# here with the summed Brier convention.

again = run_experiment(cfg)
assert [c.metrics for c in again.cells] == [c.metrics for c in summary.cells]
summed = report(cfg.out, brier_mode="sum")
print("KCS+IBC tweeteval brier (sum):", round(summed.cell("kcs_ibc", "tweeteval").metrics["brier"], 4))
print("outputs in", cfg.out)
