import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spotkit.assignment import (InfeasibleAssignmentError, focal_class_cost, hungarian_solve,
                                match_instances, spotting_match_cost)
from spotkit.geometry import BBox
from spotkit.losses import LossWeights

from oracles import brute_force_assignment


def test_examples():
    a = hungarian_solve([[1, 2], [2, 1]])
    assert set(a.pairs) == {(0, 0), (1, 1)} and a.total_cost == 2
    assert hungarian_solve([[7]]).pairs == ((0, 0),)
    b = hungarian_solve([[4, 1, 3], [2, 0, 5], [3, 2, 2]])
    assert b.total_cost == 5 and set(b.pairs) == {(0, 1), (1, 0), (2, 2)}


def test_rectangular_and_empty():
    a = hungarian_solve([[5, 1, 9], [2, 8, 9]])
    assert a.pairs == ((0, 1), (1, 0)) and a.unmatched_cols == (2,)
    t = hungarian_solve([[5, 2], [1, 8], [9, 9]])
    assert t.pairs == ((0, 1), (1, 0)) and t.unmatched_rows == (2,)
    e = hungarian_solve(np.zeros((3, 0)))
    assert e.pairs == () and e.unmatched_rows == (0, 1, 2)


def test_forbidden_pairs_and_infeasibility():
    inf = math.inf
    a = hungarian_solve([[inf, 1], [2, inf]])
    assert a.pairs == ((0, 1), (1, 0))
    with pytest.raises(InfeasibleAssignmentError, match="row 1"):
        hungarian_solve([[1, 2], [inf, inf]])
    with pytest.raises(InfeasibleAssignmentError, match="column 0"):
        hungarian_solve([[inf, 1], [inf, 2], [inf, 3]])
    with pytest.raises(InfeasibleAssignmentError):
        # every row has a finite entry but both need column 0
        hungarian_solve([[1, inf], [2, inf]])


@pytest.mark.parametrize("bad", [[[math.nan]], [[-math.inf, 1]]])
def test_rejects_nan_and_negative_infinity(bad):
    with pytest.raises(ValueError):
        hungarian_solve(bad)


def test_ties_resolve_deterministically():
    a = hungarian_solve(np.ones((4, 4)))
    assert a.pairs == hungarian_solve(np.ones((4, 4))).pairs
    assert sorted(j for _, j in a.pairs) == [0, 1, 2, 3]


def test_brute_force_sweep_with_forbidden_entries():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n, m = rng.integers(1, 6, size=2)
        c = rng.integers(0, 6, size=(n, m)).astype(float)
        c[rng.random((n, m)) < 0.2] = math.inf
        expected = brute_force_assignment(c)
        if math.isinf(expected):
            with pytest.raises(InfeasibleAssignmentError):
                hungarian_solve(c)
        else:
            assert hungarian_solve(c).total_cost == expected


@given(st.integers(1, 6), st.integers(0, 2**32 - 1), st.floats(-100, 100))
def test_constant_shift_keeps_pairing(n, seed, k):
    c = np.random.default_rng(seed).uniform(0, 10, (n, n))
    a, b = hungarian_solve(c), hungarian_solve(c + k)
    assert a.pairs == b.pairs
    assert b.total_cost == pytest.approx(a.total_cost + n * k, abs=1e-9)


# -- match cost ----------------------------------------------------------------

SQ = np.array([[0.1, 0.1], [0.3, 0.1], [0.3, 0.3], [0.1, 0.3]])
BOX = BBox(0.1, 0.1, 0.3, 0.3)


def test_focal_class_cost_floor():
    assert focal_class_cost(1.0) == 0.0
    assert focal_class_cost(0.5) == pytest.approx(0.25 * 0.25 * math.log(2))


def test_perfect_prediction_costs_nothing():
    c = spotting_match_cost([(1.0, SQ, BOX)], [(SQ, BOX)])
    assert c.shape == (1, 1) and c[0, 0] == 0.0


def test_crossed_pairing():
    far = SQ + 0.5
    far_box = BBox(0.6, 0.6, 0.8, 0.8)
    preds = [(0.9, far + 0.01, far_box), (0.9, SQ + 0.01, BOX)]
    gts = [(SQ, BOX), (far, far_box)]
    a = match_instances(preds, gts)
    assert a.pairs == ((0, 1), (1, 0))
    assert a.total_cost == brute_force_assignment(spotting_match_cost(preds, gts))


def test_background_predictions_reported():
    preds = [(0.9, SQ, BOX), (0.2, SQ + 0.5, BBox(0.6, 0.6, 0.8, 0.8)), (0.8, SQ + 0.3, BOX)]
    gts = [(SQ, BOX), (SQ + 0.3, BBox(0.4, 0.4, 0.6, 0.6))]
    a = match_instances(preds, gts)
    assert len(a.pairs) == 2 and a.unmatched_rows == (1,)
    cost = spotting_match_cost(preds, gts)
    assert a.total_cost == pytest.approx(brute_force_assignment(cost), abs=1e-12)


def test_identity_pairing_when_predictions_equal_ground_truth():
    gts = [(SQ + d, BBox(0.1 + d, 0.1 + d, 0.3 + d, 0.3 + d)) for d in (0.0, 0.2, 0.4)]
    preds = [(1.0, p, b) for p, b in gts]
    a = match_instances(preds, gts)
    assert a.pairs == ((0, 0), (1, 1), (2, 2)) and a.total_cost == 0.0


def test_empty_sides():
    assert spotting_match_cost([(0.5, SQ, BOX)], []).shape == (1, 0)
    assert match_instances([], [(SQ, BOX)]).pairs == ()


def test_input_validation():
    with pytest.raises(ValueError, match="normalized"):
        spotting_match_cost([(0.5, SQ * 10, BOX)], [(SQ, BOX)])
    with pytest.raises(ValueError, match="control-point"):
        spotting_match_cost([(0.5, SQ[:3], BOX)], [(SQ, BOX)])


@given(st.floats(0, 0.3), st.floats(0, 0.3))
def test_cost_monotone_in_coordinate_error(d1, d2):
    lo, hi = sorted((d1, d2))
    c_lo = spotting_match_cost([(0.7, np.clip(SQ + lo, 0, 1), BOX)], [(SQ, BOX)])[0, 0]
    c_hi = spotting_match_cost([(0.7, np.clip(SQ + hi, 0, 1), BOX)], [(SQ, BOX)])[0, 0]
    assert c_hi >= c_lo


def test_weight_scaling_keeps_argmin():
    rng = np.random.default_rng(5)
    preds = [(rng.uniform(0.1, 0.9), np.clip(SQ + rng.uniform(-0.1, 0.5), 0, 1),
              BBox(*sorted(rng.uniform(0, 0.5, 2)), *sorted(rng.uniform(0.5, 1, 2))))
             for _ in range(6)]
    gts = [(np.clip(SQ + rng.uniform(0, 0.5), 0, 1), BOX) for _ in range(4)]
    base = match_instances(preds, gts, LossWeights())
    for c in (0.5, 3.0, 17.0):
        assert match_instances(preds, gts, LossWeights().scaled(c)).pairs == base.pairs
