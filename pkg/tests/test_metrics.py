import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smgaa import model as M
from smgaa.errors import ConfigError
from smgaa.features import CONDITIONS
from smgaa.metrics import (
    EvalReport,
    ReportRow,
    ScoreRow,
    build_report,
    compute_eer,
    measure_rtf,
    read_scores,
    write_scores,
)

from oracles import eer_bruteforce


def test_eer_separated():
    assert compute_eer([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])[0] == 0.0


def test_eer_four_point_case():
    scores = [0.9, 0.6, 0.4, 0.7]
    labels = ["spoof", "spoof", "bona_fide", "bona_fide"]
    # at t = 0.7 bona fide 0.7 counts as accepted and spoof 0.6 as rejected: 1/2 each
    assert compute_eer(scores, labels) == (0.5, 0.7)
    assert eer_bruteforce(scores, [1, 1, 0, 0]) == 0.5


def test_eer_all_wrong():
    assert compute_eer([0.9, 0.8, 0.1, 0.2], [0, 0, 1, 1])[0] == 1.0


def test_eer_random_labels_near_half():
    rng = np.random.default_rng(0)
    n = 4000
    eer = compute_eer(rng.standard_normal(n), rng.integers(0, 2, n))[0]
    assert abs(eer - 0.5) <= 3 * math.sqrt(0.25 / (n / 2))


def test_eer_single_class_rejected():
    with pytest.raises(ConfigError):
        compute_eer([0.1, 0.2], [1, 1])
    with pytest.raises(ConfigError):
        compute_eer([0.1, np.nan], [0, 1])


def test_eer_threshold_is_inside_score_range():
    rng = np.random.default_rng(1)
    s = rng.standard_normal(50)
    y = rng.integers(0, 2, 50)
    _, th = compute_eer(s, y)
    assert s.min() <= th <= s.max()


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.tuples(st.integers(-6, 6), st.integers(0, 1)), min_size=2, max_size=200).filter(
        lambda rows: len({lab for _, lab in rows}) == 2
    )
)
def test_eer_matches_bruteforce_with_ties(rows):
    scores = [s / 2 for s, _ in rows]
    labels = [lab for _, lab in rows]
    assert abs(compute_eer(scores, labels)[0] - eer_bruteforce(scores, labels)) <= 1e-12


def test_eer_monotone_and_label_swap_invariance():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(4, 200))
        s = rng.standard_normal(n)
        y = rng.integers(0, 2, n)
        if len(set(y)) < 2:
            continue
        base = compute_eer(s, y)[0]
        assert compute_eer(np.exp(2 * s) + 3, y)[0] == pytest.approx(base, abs=1e-12)
        assert compute_eer(np.arctan(s), y)[0] == pytest.approx(base, abs=1e-12)
        assert compute_eer(-s, 1 - y)[0] == pytest.approx(base, abs=1e-12)


# -------------------------------------------------------------- reports
def sample_report():
    r = EvalReport()
    r.rows[0.5] = ReportRow(0.5, {c: 0.01 * (i + 1) for i, c in enumerate(CONDITIONS)}, 0.04, 702524, 0.14)
    r.rows[2.0] = ReportRow(2.0, {"C0": 0.0, "C3": 0.125}, None, None, None)
    return r


def test_report_average_and_round_trip(tmp_path):
    r = sample_report()
    assert r.rows[0.5].avg == pytest.approx(np.mean([0.01 * (i + 1) for i in range(6)]), abs=1e-12)
    r.save(tmp_path / "report.csv")
    back = EvalReport.load(tmp_path / "report.csv")
    assert back == r
    assert back.rows[2.0].eer == {"C0": 0.0, "C3": 0.125}
    header = (tmp_path / "report.csv").read_text().splitlines()[0]
    assert header == "duration,C0,C1,C2,C3,C4,C5,Avg,RTF,params,GFLOPs"


def test_report_rejects_bad_header():
    with pytest.raises(ConfigError):
        EvalReport.from_csv("duration,C0\n0.5,0.1\n")


def test_scores_csv_round_trip(tmp_path):
    rows = [ScoreRow("a", 0.5, "C0", "spoof", -0.1), ScoreRow("b", 2.0, "C5", "bona_fide", -3.25)]
    write_scores(tmp_path / "s.csv", rows)
    assert read_scores(tmp_path / "s.csv") == rows
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "clip_id,duration,condition,label,score"


def test_build_report_groups_cells():
    rows = [
        ScoreRow("a", 0.5, "C0", "spoof", 0.9),
        ScoreRow("b", 0.5, "C0", "bona_fide", 0.1),
        ScoreRow("c", 0.5, "C2", "spoof", 0.2),
        ScoreRow("d", 0.5, "C2", "bona_fide", 0.7),
        ScoreRow("e", 0.5, "C4", "spoof", 0.3),
    ]
    rep = build_report(rows)
    row = rep.rows[0.5]
    assert row.eer == {"C0": 0.0, "C2": 1.0}
    assert row.avg == 0.5


def test_rtf_positive_and_stable():
    net = M.SMGAANet(M.ModelConfig(), 16)
    a = measure_rtf(net, 0.5, n_trials=5)
    b = measure_rtf(net, 0.5, n_trials=5)
    assert a > 0 and b > 0
    assert abs(a - b) <= 0.5 * max(a, b)


def test_rtf_decreases_with_duration():
    short = measure_rtf(M.SMGAANet(M.ModelConfig(), 16), 0.5, n_trials=5)
    long = measure_rtf(M.SMGAANet(M.ModelConfig(), 63), 2.0, n_trials=5)
    assert long < short
