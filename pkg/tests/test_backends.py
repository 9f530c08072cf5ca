import numpy as np
import pytest
from hypothesis import given, strategies as st

from spotkit import _accel

from oracles import brute_force_assignment, star_polygon

if "cython" not in _accel.BACKENDS:
    pytest.skip("compiled extension not built", allow_module_level=True)

CY, PY = _accel.BACKENDS["cython"], _accel.BACKENDS["python"]
words = st.text(alphabet="abcABé中", max_size=12)


def test_default_backend_is_compiled():
    assert _accel.BACKEND == "cython"


@given(words, words)
def test_levenshtein_parity(a, b):
    assert CY.levenshtein(a, b) == PY.levenshtein(a, b)


@given(words, st.lists(words, max_size=20), st.integers(0, 6))
def test_nearest_word_parity(w, cands, cap):
    assert tuple(CY.nearest_word(w, cands, cap)) == tuple(PY.nearest_word(w, cands, cap))


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(0, 3), st.booleans())
def test_assignment_parity(seed, n, extra, forbid):
    rng = np.random.default_rng(seed)
    cost = rng.integers(0, 20, size=(n, n + extra)).astype(float)
    if forbid:
        cost[rng.uniform(size=cost.shape) < 0.2] = np.inf
    try:
        py = PY.solve_assignment(cost)
    except ValueError:
        with pytest.raises(ValueError):
            CY.solve_assignment(cost)
        return
    cy = CY.solve_assignment(cost)
    total = lambda sol: cost[np.arange(n), sol].sum()
    assert total(cy) == total(py) == brute_force_assignment(cost)


@given(st.integers(0, 2**32 - 1), st.integers(3, 12), st.integers(3, 12))
def test_intersection_parity(seed, na, nb):
    rng = np.random.default_rng(seed)
    a = star_polygon(rng, na, (0, 0), 1.0, 0.5)
    b = star_polygon(rng, nb, tuple(rng.uniform(-1, 1, 2)), 1.0, 0.5)
    assert abs(CY.intersection_area(a, b) - PY.intersection_area(a, b)) <= 1e-12


def test_intersection_shared_edges_parity():
    sq = np.array([[0, 0], [2, 0], [2, 2], [0, 2]], float)
    for other in (sq, sq + (2, 0), sq + (1, 0), sq + (1, 1), sq * 0.5):
        assert CY.intersection_area(sq, other) == PY.intersection_area(sq, other)
