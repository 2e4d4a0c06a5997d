import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from kairanban.core import FIVE_CLASS, THREE_CLASS, LabelSpace, ProbabilityVector, make_uniform, normalize, one_hot
from kairanban.errors import EmptyRecords, LengthMismatch
from kairanban.metrics import (
    EvalRecord,
    StepStats,
    brier,
    cross_dataset_average,
    format_cell,
    format_step_table,
    log_loss,
    macro_f1,
    micro_f1,
    select,
    step_stats,
)

import oracles


def rec(gold, dist, steps=(), degraded=False, rid="r"):
    if not isinstance(dist, ProbabilityVector):
        dist = ProbabilityVector(tuple(dist))
    return EvalRecord(rid, gold, dist, tuple(steps), degraded)


def random_records(rng, n, k, n_steps=0):
    out = []
    for i in range(n):
        def draw():
            w = [rng.random() ** 3 for _ in range(k)]
            if rng.random() < 0.1:
                w = [0.0] * k
                w[rng.randrange(k)] = 1.0
            return normalize(w)
        out.append(EvalRecord(f"r{i}", rng.randrange(k), draw(), tuple(draw() for _ in range(n_steps))))
    return out


def test_perfect_classifier(abc):
    records = [rec(i % 3, one_hot(i % 3, 3)) for i in range(9)]
    assert macro_f1(records, abc) == 1.0 and micro_f1(records, abc) == 1.0


def test_hand_computed_confusion(abc):
    golds, preds = [0, 0, 1, 2], [0, 1, 1, 2]
    records = [rec(g, one_hot(p, 3)) for g, p in zip(golds, preds)]
    assert micro_f1(records, abc) == pytest.approx(0.75)
    assert macro_f1(records, abc) == pytest.approx((2 / 3 + 2 / 3 + 1) / 3)
    assert macro_f1(records, abc) == pytest.approx(0.7778, abs=1e-4)


def test_constant_predictor_balanced(abc):
    records = [rec(g, one_hot(0, 3)) for g in (0, 1, 2) * 4]
    assert micro_f1(records, abc) == pytest.approx(1 / 3)
    # class a: P=1/3, R=1 -> F1=0.5; absent classes score 0 but still count
    assert macro_f1(records, abc) == pytest.approx(0.5 / 3)


def test_log_loss_examples():
    assert log_loss([rec(1, one_hot(1, 3))] * 3) == 0.0
    assert log_loss([rec(0, make_uniform(THREE_CLASS))] * 4) == pytest.approx(1.098612, abs=1e-6)
    assert log_loss([rec(0, one_hot(1, 3))]) == pytest.approx(-math.log(1e-10))
    assert log_loss([rec(0, one_hot(1, 3))]) == pytest.approx(23.025851, abs=1e-6)


def test_brier_examples():
    assert brier([rec(2, one_hot(2, 3))]) == 0.0
    assert brier([rec(0, make_uniform(THREE_CLASS))]) == pytest.approx(2 / 9)
    assert brier([rec(0, make_uniform(THREE_CLASS))]) == pytest.approx(0.2222, abs=1e-4)
    assert brier([rec(0, one_hot(1, 3))]) == pytest.approx(2 / 3)
    assert brier([rec(0, one_hot(1, 3))], mode="sum") == pytest.approx(2.0)


def test_empty_records(abc):
    for fn in (lambda r: macro_f1(r, abc), lambda r: micro_f1(r, abc), log_loss, brier):
        with pytest.raises(EmptyRecords):
            fn([])


@pytest.mark.parametrize("space", [THREE_CLASS, FIVE_CLASS], ids=["k3", "k5"])
def test_oracle_equivalence(space):
    rng = random.Random(space.k)
    records = random_records(rng, 1000, space.k)
    golds = [r.gold_label_index for r in records]
    dists = [r.final_distribution.entries for r in records]
    assert macro_f1(records, space) == pytest.approx(oracles.macro_f1(golds, dists, space.k), abs=1e-9)
    assert micro_f1(records, space) == pytest.approx(oracles.micro_f1(golds, dists, space.k), abs=1e-9)
    assert micro_f1(records, space) == pytest.approx(oracles.accuracy(golds, dists), abs=1e-12)
    assert log_loss(records) == pytest.approx(oracles.log_loss(golds, dists), abs=1e-9)
    assert brier(records) == pytest.approx(oracles.brier(golds, dists), abs=1e-9)
    assert brier(records, "sum") == pytest.approx(oracles.brier(golds, dists, mean=False), abs=1e-9)


@settings(max_examples=50)
@given(st.integers(0, 10_000), st.sampled_from([2, 3, 5]), st.integers(1, 40))
def test_metric_ranges(seed, k, n):
    space = LabelSpace(tuple(f"l{i}" for i in range(k)))
    records = random_records(random.Random(seed), n, k)
    assert 0 <= macro_f1(records, space) <= 1
    assert 0 <= micro_f1(records, space) <= 1
    assert log_loss(records) >= 0
    assert 0 <= brier(records) <= 2 / k + 1e-12


def test_select_degraded():
    records = [rec(0, one_hot(0, 3), degraded=True), rec(0, one_hot(1, 3))]
    assert len(select(records)) == 2
    assert len(select(records, exclude_degraded=True)) == 1


def test_step_stats_constant_uniform():
    u = make_uniform(THREE_CLASS)
    st_ = step_stats([rec(0, u, [u] * 6) for _ in range(5)], 6)
    assert st_.mean_entropy == pytest.approx((math.log(3),) * 6)
    assert st_.mean_variance == pytest.approx((0.0,) * 6, abs=1e-15)
    assert st_.delta_entropy == pytest.approx((0.0,) * 6, abs=1e-15)
    assert st_.se_entropy == pytest.approx((0.0,) * 6, abs=1e-12)


def test_step_stats_two_points():
    records = [rec(0, one_hot(0, 3), [one_hot(0, 3)]), rec(0, one_hot(0, 3), [make_uniform(THREE_CLASS)])]
    st_ = step_stats(records, 1)
    assert st_.mean_entropy[0] == pytest.approx(0.549306, abs=1e-6)
    assert st_.se_entropy[0] == pytest.approx(0.549306, abs=1e-6)
    assert st_.delta_entropy[0] == 0.0


def test_step_stats_oracle_and_telescoping():
    rng = random.Random(7)
    records = random_records(rng, 200, 3, n_steps=6)
    st_ = step_stats(records, 6)
    for s in range(6):
        ents = [oracles.entropy(r.per_step_distributions[s].entries) for r in records]
        mean = sum(ents) / len(ents)
        sd = math.sqrt(sum((e - mean) ** 2 for e in ents) / (len(ents) - 1))
        assert st_.mean_entropy[s] == pytest.approx(mean, abs=1e-12)
        assert st_.se_entropy[s] == pytest.approx(sd / math.sqrt(len(ents)), abs=1e-12)
    assert sum(st_.delta_entropy) == pytest.approx(st_.mean_entropy[-1] - st_.mean_entropy[0], abs=1e-12)
    assert sum(st_.delta_variance) == pytest.approx(st_.mean_variance[-1] - st_.mean_variance[0], abs=1e-12)


def test_step_stats_length_mismatch():
    with pytest.raises(LengthMismatch):
        step_stats([rec(0, one_hot(0, 3), [one_hot(0, 3)])], 2)


def test_cross_dataset_average():
    rng = random.Random(3)
    a = step_stats(random_records(rng, 30, 3, 6), 6)
    assert cross_dataset_average([a, a, a]).mean_entropy == pytest.approx(a.mean_entropy)
    b = step_stats(random_records(rng, 30, 5, 6), 6)
    c = step_stats(random_records(rng, 30, 3, 6), 6)
    avg = cross_dataset_average([a, b, c])
    for s in range(6):
        means = [x.mean_entropy[s] for x in (a, b, c)]
        assert avg.mean_entropy[s] == pytest.approx(sum(means) / 3)
    # averaging commutes with differencing
    deltas_of_avg = [0.0] + [avg.mean_entropy[s] - avg.mean_entropy[s - 1] for s in range(1, 6)]
    assert avg.delta_entropy == pytest.approx(deltas_of_avg, abs=1e-12)
    with pytest.raises(LengthMismatch):
        cross_dataset_average([a, step_stats(random_records(rng, 3, 3, 2), 2)])


def test_cross_dataset_three_means():
    def flat(v):
        return StepStats((v,), (0.0,), (0.0,), (0.0,), (0.0,), (0.0,), 1)
    assert cross_dataset_average([flat(0.9), flat(1.1), flat(1.0)]).mean_entropy[0] == pytest.approx(1.0)


def test_table_layout():
    assert format_cell(0.8377, 0.0) == "0.8377(+0.0000)"
    assert format_cell(0.8413, -0.0151) == "0.8413(-0.0151)"
    st_ = StepStats((0.8377, 0.8564), (0.0, 0.0187), (0, 0), (0.1106, 0.1105), (0.0, -0.0001), (0, 0))
    table = format_step_table({"KCS": st_}, "entropy").splitlines()
    assert table[0].split() == ["Agent", "KCS"]
    assert table[1].split() == ["1", "0.8377(+0.0000)"]
    assert table[2].split() == ["2", "0.8564(+0.0187)"]
    assert format_step_table({"KCS": st_}, "variance").splitlines()[2].split() == ["2", "0.1105(-0.0001)"]


def test_step_stats_serialization():
    st_ = step_stats(random_records(random.Random(1), 5, 3, 2), 2)
    assert StepStats.from_dict(st_.to_dict()) == st_
