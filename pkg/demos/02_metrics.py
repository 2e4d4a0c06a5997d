"""
Scoring distributions
=====================

The metrics module works on ``EvalRecord`` objects: one gold label, one
final distribution and, for the multi-agent systems, the distribution
after each agent step.
"""

import numpy as np

from kairanban import THREE_CLASS, normalize
from kairanban.metrics import (
    EvalRecord,
    brier,
    format_step_table,
    headline,
    log_loss,
    step_stats,
)

rng = np.random.default_rng(0)

###############################################################################
# Classification scores
# ---------------------
# Forty synthetic records whose predictions agree with the gold label
# about two times in three.

records = []
for i in range(40):
    gold = int(rng.integers(3))
    guess = gold if rng.random() < 0.66 else int(rng.integers(3))
    weights = rng.random(3) * 0.3
    weights[guess] += 1.0
    steps = tuple(normalize(weights + rng.random(3) * (6 - s) * 0.2) for s in range(6))
    records.append(EvalRecord(f"x{i}", gold, normalize(weights), steps))

for name, value in headline(records, THREE_CLASS).items():
    print(f"{name:>9}: {value:.4f}")

###############################################################################
# Two calibration conventions
# ---------------------------
# Brier defaults to the per-class mean of squared errors.  The ``sum``
# mode skips the division and is ``k`` times larger.  Log loss clips
# probabilities at 1e-10, so a confident miss costs about 23 nats.

print("brier mean", round(brier(records), 4), " sum", round(brier(records, "sum"), 4))
print("log loss", round(log_loss(records), 4))

###############################################################################
# Step dynamics
# -------------
# Mean entropy and variance per agent step, laid out with the change
# from the previous step in brackets.  The synthetic steps start noisy
# and sharpen, so entropy falls.

stats = step_stats(records, 6)
print(format_step_table({"synthetic": stats}, "entropy"))
print(format_step_table({"synthetic": stats}, "variance"))
