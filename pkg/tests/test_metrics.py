import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from compandaug.metrics import (EvalResult, MetricError, TdcfCostModel, compute_eer,
                                compute_min_tdcf, det_curve, error_rates, evaluate,
                                read_asv_operating_point, read_key_values, read_scores,
                                split_by_key, tdcf_curve, write_det_csv, write_scores)
from metrics_reference import brute_eer, brute_min_tdcf

COST = TdcfCostModel(p_miss_asv=0.05, p_fa_asv=0.02, p_miss_spoof_asv=0.3)
finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
score_lists = st.lists(finite, min_size=1, max_size=40)


def test_eer_separated():
    assert compute_eer([0.9, 0.8], [0.1, 0.2])[0] == 0.0


def test_eer_identical():
    s = [0.1, 0.5, 0.5, 0.9]
    assert compute_eer(s, s)[0] == 0.5


def test_eer_reversed():
    assert compute_eer([0.1, 0.2], [0.8, 0.9])[0] == 1.0


def test_eer_hand_example():
    # thresholds 1..5,+inf: miss 0,0,1/2,1/2,1,1  fa 1,2/3,2/3,1/3,1/3,0
    bona = [2.0, 4.0]
    spoof = [1.0, 3.0, 5.0]
    eer, thr = compute_eer(bona, spoof)
    assert eer == pytest.approx((2 / 3 + 1 / 2) / 2)
    assert thr == 3.0


def test_empty_class():
    with pytest.raises(MetricError):
        compute_eer([], [1.0])
    with pytest.raises(MetricError):
        compute_min_tdcf([1.0], [])
    with pytest.raises(MetricError):
        det_curve([], [])


def test_nonfinite_scores():
    with pytest.raises(MetricError):
        compute_eer([math.nan], [1.0])
    with pytest.raises(MetricError):
        compute_eer([1.0], [math.inf])


def test_error_rates_shape():
    thr, miss, fa = error_rates([1.0, 2.0, 2.0], [2.0, 3.0])
    assert thr.tolist() == [1.0, 2.0, 3.0, math.inf]
    assert miss.tolist() == [0.0, 1 / 3, 1.0, 1.0]
    assert fa.tolist() == [1.0, 1.0, 0.5, 0.0]


@pytest.mark.parametrize("seed", range(20))
def test_eer_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    nb, ns = rng.integers(1, 60, 2)
    bona = np.round(rng.normal(1, 1, nb), int(rng.integers(0, 3))).tolist()
    spoof = np.round(rng.normal(0, 1, ns), int(rng.integers(0, 3))).tolist()
    assert compute_eer(bona, spoof)[0] == brute_eer(bona, spoof)


@settings(max_examples=60, deadline=None)
@given(bona=score_lists, spoof=score_lists)
def test_eer_brute_force_property(bona, spoof):
    assert compute_eer(bona, spoof)[0] == brute_eer(bona, spoof)


@settings(max_examples=60, deadline=None)
@given(bona=score_lists, spoof=score_lists)
def test_min_tdcf_brute_force_property(bona, spoof):
    got = compute_min_tdcf(bona, spoof, COST)[0]
    assert got == pytest.approx(brute_min_tdcf(bona, spoof, COST.c1, COST.c2), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(bona=score_lists, spoof=score_lists, shift=finite,
       scale=st.floats(0.01, 100), kind=st.sampled_from(["affine", "exp", "cube", "atan"]))
def test_eer_monotone_invariance(bona, spoof, shift, scale, kind):
    f = {"affine": lambda x: scale * x + shift,
         "exp": lambda x: np.exp(x / 50.0),
         "cube": lambda x: x ** 3,
         "atan": lambda x: np.arctan(x / 10.0)}[kind]
    b, s = np.array(bona), np.array(spoof)
    fb, fs = f(b), f(s)
    # keep only transforms that stay strictly increasing in floating point
    merged = np.concatenate([b, s])
    order = np.argsort(merged, kind="stable")
    assume(np.all(np.diff(f(merged[order]))[np.diff(merged[order]) > 0] > 0))
    assert compute_eer(fb, fs)[0] == compute_eer(b, s)[0]


@settings(max_examples=40, deadline=None)
@given(bona=st.lists(st.integers(-50, 50), min_size=1, max_size=30),
       spoof=st.lists(st.integers(-50, 50), min_size=1, max_size=30),
       c=st.integers(-1000, 1000))
def test_shift_invariance(bona, spoof, c):
    b, s = np.array(bona, float), np.array(spoof, float)
    assert compute_eer(b + c, s + c)[0] == compute_eer(b, s)[0]
    assert compute_min_tdcf(b + c, s + c, COST)[0] == compute_min_tdcf(b, s, COST)[0]


@settings(max_examples=60, deadline=None)
@given(bona=score_lists, spoof=score_lists)
def test_min_tdcf_below_eer_point(bona, spoof):
    thr, curve = tdcf_curve(bona, spoof, COST)
    eer_thr = compute_eer(bona, spoof)[1]
    at_eer = curve[np.flatnonzero(thr == eer_thr)[0]]
    assert compute_min_tdcf(bona, spoof, COST)[0] <= at_eer


def test_tdcf_constants():
    cost = TdcfCostModel(p_miss_asv=0.1, p_fa_asv=0.2, p_miss_spoof_asv=0.4)
    assert cost.c1 == pytest.approx(0.9405 * (1 - 0.1) - 0.0095 * 10 * 0.2)
    assert cost.c2 == pytest.approx(10 * 0.05 * (1 - 0.4))
    default = TdcfCostModel()
    assert (default.c1, default.c2) == (pytest.approx(0.9405), pytest.approx(0.5))


def test_tdcf_perfect_cm():
    assert compute_min_tdcf([2.0, 3.0], [0.0, 1.0], COST)[0] == 0.0


def test_tdcf_accept_all_point():
    thr, curve = tdcf_curve([1.0, 2.0], [1.5, 3.0], COST)
    assert curve[0] == pytest.approx(COST.c2 / min(COST.c1, COST.c2))
    assert curve[-1] == pytest.approx(COST.c1 / min(COST.c1, COST.c2))


def test_tdcf_degenerate_cost():
    cost = TdcfCostModel(p_miss_asv=1.0)
    assert cost.c1 <= 0
    with pytest.raises(MetricError):
        compute_min_tdcf([1.0], [0.0], cost)
    with pytest.raises(MetricError):
        compute_min_tdcf([1.0], [0.0], TdcfCostModel(p_miss_spoof_asv=1.0))


@pytest.mark.parametrize("kwargs", [{"pi_tar": 0.5}, {"p_fa_asv": 1.5}, {"c_fa_cm": 0.0},
                                    {"pi_tar": 1.1, "pi_non": -0.15}])
def test_cost_model_validation(kwargs):
    with pytest.raises(MetricError):
        TdcfCostModel(**kwargs)


def test_det_single_scores():
    assert det_curve([1.0], [0.0]) == [(1.0, 0.0), (0.0, 0.0), (0.0, 1.0)]


def test_det_endpoints_and_monotone():
    rng = np.random.default_rng(0)
    pts = det_curve(rng.normal(1, 1, 50), rng.normal(0, 1, 70))
    assert pts[0] == (1.0, 0.0) and pts[-1] == (0.0, 1.0)
    fa = [p[0] for p in pts]
    miss = [p[1] for p in pts]
    assert all(a >= b for a, b in zip(fa, fa[1:]))
    assert all(a <= b for a, b in zip(miss, miss[1:]))


def test_det_separated_touches_origin():
    assert (0.0, 0.0) in det_curve([5.0, 6.0], [1.0, 2.0])


def test_evaluate_separated():
    res = evaluate([3.0, 4.0], [0.0, 1.0])
    assert isinstance(res, EvalResult)
    assert res.eer == 0.0 and res.min_tdcf == 0.0
    assert (res.n_bonafide, res.n_spoof) == (2, 2)
    text = res.to_text()
    assert "eer = 0" in text and "min_tdcf = 0" in text


# --- files -----------------------------------------------------------------

def test_scores_roundtrip(tmp_path):
    pairs = [("a", 0.1), ("b", -2.5e-7), ("c", 1 / 3)]
    write_scores(pairs, tmp_path / "s.txt")
    assert read_scores(tmp_path / "s.txt") == dict(pairs)


@pytest.mark.parametrize("text", ["a 1.0\na 2.0\n", "a\n", "a x\n", "a nan\n", "a 1 2\n"])
def test_read_scores_errors(tmp_path, text):
    (tmp_path / "s.txt").write_text(text)
    with pytest.raises(MetricError):
        read_scores(tmp_path / "s.txt")


def test_split_by_key():
    bona, spoof = split_by_key({"a": 1.0, "b": 2.0, "c": 3.0},
                               {"a": "bonafide", "b": "spoof", "c": "spoof"})
    assert bona.tolist() == [1.0] and spoof.tolist() == [2.0, 3.0]
    with pytest.raises(MetricError):
        split_by_key({"a": 1.0}, {"a": "bonafide", "z": "spoof"})


def test_asv_operating_point(tmp_path):
    path = tmp_path / "asv.txt"
    path.write_text("# ASV\np_miss_asv = 0.1\np_fa_asv 0.05\np_miss_spoof_asv=0.6\n")
    assert read_key_values(path)["p_fa_asv"] == "0.05"
    cost = read_asv_operating_point(path)
    assert (cost.p_miss_asv, cost.p_fa_asv, cost.p_miss_spoof_asv) == (0.1, 0.05, 0.6)
    path.write_text("p_miss_asv = 0.1\n")
    with pytest.raises(MetricError):
        read_asv_operating_point(path)
    path.write_text("p_miss_asv = 0.1\np_fa_asv = 0\np_miss_spoof_asv = 0\nbogus = 1\n")
    with pytest.raises(MetricError):
        read_asv_operating_point(path)


def test_det_csv(tmp_path):
    write_det_csv([(1.0, 0.0), (0.5, 0.25)], tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines == ["p_fa,p_miss", "1,0", "0.5,0.25"]
