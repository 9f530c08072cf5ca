import numpy as np
import pytest
from hypothesis import given, strategies as st

from spotkit.metrics import (Lexicon, MetricReport, SpotInstance, aggregate_report,
                             detection_prf, e2e_score, edit_distance, format_fixed,
                             lexicon_correct, load_lexicon, normalize_text, prf, round_half_up,
                             score_corpus)


def sq(x, y=0.0, s=1.0):
    return [(x, y), (x + s, y), (x + s, y + s), (x, y + s)]


def inst(x, y=0.0, text="A", s=1.0, score=None):
    return SpotInstance(sq(x, y, s), text, score)


def filler(n, prefix="W"):
    return [f"{prefix}{k:03d}XYZ" for k in range(n)]


# -- instances / lexica ------------------------------------------------------------

def test_spot_instance_validation():
    with pytest.raises(ValueError):
        SpotInstance(sq(0), "x" * 101)
    with pytest.raises(ValueError):
        SpotInstance(sq(0), "x" * 26, max_text=25)
    with pytest.raises(ValueError):
        SpotInstance(sq(0), "x", score=1.5)
    with pytest.raises(ValueError):
        SpotInstance([(0, 0), (1, 1), (2, 2)], "x")


def test_lexicon_size_rules(tmp_path):
    with pytest.raises(ValueError, match="100"):
        Lexicon("strong", ["a"])
    Lexicon("strong", filler(100))
    with pytest.warns(UserWarning, match="90000"):
        Lexicon("generic", ["a", "b"])
    with pytest.raises(ValueError):
        Lexicon("fancy", [])
    path = tmp_path / "lex.txt"
    path.write_text("alpha\n\nBeta\n", encoding="utf-8")
    lex = load_lexicon(path, "weak")
    assert lex.words == ("alpha", "Beta")


# -- edit distance and correction --------------------------------------------------------

@pytest.mark.parametrize("a, b, d", [("abc", "abc", 0), ("kitten", "sitting", 3), ("", "ab", 2),
                                     ("flaw", "lawn", 2), ("ü", "u", 1)])
def test_edit_distance_examples(a, b, d):
    assert edit_distance(a, b) == d == edit_distance(b, a)


@given(st.text(max_size=12), st.text(max_size=12), st.text(max_size=12))
def test_edit_distance_is_a_metric(a, b, c):
    assert edit_distance(a, b) == edit_distance(b, a)
    assert (edit_distance(a, b) == 0) == (a == b)
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)
    assert abs(len(a) - len(b)) <= edit_distance(a, b) <= max(len(a), len(b))


def test_lexicon_correct_examples():
    weak = Lexicon("weak", ["Let's", "Lots"])
    assert lexicon_correct("lets", weak) == "Let's"
    assert lexicon_correct("Lots", weak) == "Lots"
    assert lexicon_correct("zzzzzz", weak) == "zzzzzz"
    with pytest.raises(ValueError):
        lexicon_correct("x", Lexicon("none"))
    with pytest.raises(ValueError):
        lexicon_correct("x", Lexicon("weak", []))


def test_lexicon_correct_cap():
    lex = Lexicon("full", ["HOUSE"])
    assert lexicon_correct("MOUSE", lex) == "HOUSE"
    assert lexicon_correct("MOOSY", lex) == "HOUSE"          # distance 3 == ceil(5 / 2)
    assert lexicon_correct("MOOSY", lex, max_distance=2) == "MOOSY"
    assert lexicon_correct("ABXY", lex) == "ABXY"            # distance 5 > 2
    assert lexicon_correct("AB", Lexicon("full", ["XY"])) == "AB"


def test_normalize_text():
    assert normalize_text("Let's go-2!") == "LET'SGO2"
    assert normalize_text("Let's", case_sensitive=True) == "Let's"
    assert normalize_text("  two   words ", keep_whitespace=True) == "TWO WORDS"


# -- P/R/F ---------------------------------------------------------------------------------

def test_prf_conventions():
    assert prf(7, 3, 2)[0] == 0.7
    assert prf(0, 0, 0) == (1.0, 1.0, 1.0)
    assert prf(0, 2, 0) == (0.0, 1.0, 0.0)
    assert prf(0, 0, 3) == (0.0, 0.0, 0.0)


def test_rounding_half_up():
    assert format_fixed(7 / 9) == "0.7778"
    assert format_fixed(0.5) == "0.5000"
    assert format_fixed(0.00005) == "0.0001"
    assert format_fixed(0.12345) == "0.1235"
    assert round_half_up(14 / 19) == 0.7368


def test_detection_examples():
    gt = [inst(0), inst(5)]
    assert detection_prf(gt, gt).fmeasure == 1.0
    # IoU (1-d)/(1+d): d=0.25 -> 0.6, d=2/3 -> 0.2
    pred = [inst(0.25), inst(5 + 2 / 3)]
    r = detection_prf(gt, pred, 0.5)
    assert (r.tp, r.fp, r.fn) == (1, 1, 1)
    assert r.precision == r.recall == r.fmeasure == 0.5


def test_threshold_boundary_counts_as_match():
    r = detection_prf([inst(0)], [inst(0.25)], iou_threshold=0.6)
    assert r.tp == 1
    with pytest.raises(ValueError):
        detection_prf([inst(0)], [inst(0)], iou_threshold=0.0)


def test_optimal_matching_maximizes_pair_count():
    # the single best pair (p0, g0) would strand g1; the optimum matches both
    gt = [SpotInstance(sq(0.0)), SpotInstance(sq(0.3))]
    pred = [SpotInstance(sq(0.12)), SpotInstance(sq(-0.1))]
    opt = detection_prf(gt, pred, 0.5)
    greedy = detection_prf(gt, pred, 0.5, greedy=True)
    assert opt.tp == 2
    assert greedy.tp <= opt.tp


def test_dont_care_regions():
    gt = [inst(0, text="HELLO"), inst(5, text="###")]
    pred = [inst(0, text="HELLO"), inst(5, text="junk"), inst(10, text="x")]
    r = detection_prf(gt, pred)
    assert (r.tp, r.fp, r.fn) == (1, 1, 0)
    # a don't-care never competes with a care ground truth
    gt2 = [inst(0, text="###"), inst(0.1, text="CARE")]
    r2 = detection_prf(gt2, [inst(0.05)])
    assert (r2.tp, r2.fp, r2.fn) == (1, 0, 0)


# -- end to end ------------------------------------------------------------------------------

def test_e2e_examples():
    gt = [inst(0, text="HOUSE"), inst(5, text="TREE")]
    assert e2e_score(gt, gt).e2e_accuracy == 1.0
    pred = [inst(0, text="HOUSF"), inst(5, text="")]
    strong = Lexicon("strong", ["HOUSE", "TREE"] + filler(98))
    r_none = e2e_score(gt, pred, Lexicon("none"))
    r_strong = e2e_score(gt, pred, strong)
    assert r_none.e2e_correct == 0
    assert r_strong.e2e_correct == 1       # empty text stays wrong even with a lexicon
    assert r_strong.e2e_accuracy == 0.5


def test_e2e_case_sensitivity():
    gt = [inst(0, text="Hello")]
    pred = [inst(0, text="HELLO")]
    assert e2e_score(gt, pred).e2e_correct == 1
    assert e2e_score(gt, pred, case_sensitive=True).e2e_correct == 0


def test_aggregate_examples():
    a = MetricReport(1, 0, 1, image_id="a")
    b = MetricReport(1, 1, 0, image_id="b")
    agg = aggregate_report([a, b])
    assert agg.precision == agg.recall == agg.fmeasure == pytest.approx(2 / 3)
    assert aggregate_report([b, a]) == agg
    single = aggregate_report([a])
    assert (single.precision, single.recall, single.fmeasure) == (a.precision, a.recall, a.fmeasure)


def _random_scene(rng, n):
    return [SpotInstance(sq(3 * k + rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)),
                         "".join(rng.choice(list("ABC"), 3))) for k in range(n)]


@given(st.integers(0, 2**32 - 1))
def test_detection_invariant_under_permutation(seed):
    rng = np.random.default_rng(seed)
    gt = _random_scene(rng, int(rng.integers(0, 6)))
    pred = _random_scene(rng, int(rng.integers(0, 6)))
    base = e2e_score(gt, pred)
    pg, pp = rng.permutation(len(gt)), rng.permutation(len(pred))
    perm = e2e_score([gt[i] for i in pg], [pred[i] for i in pp])
    assert (base.tp, base.fp, base.fn) == (perm.tp, perm.fp, perm.fn)
    assert base.e2e_correct <= base.tp


@given(st.integers(0, 2**32 - 1))
def test_micro_average_partition_invariance(seed):
    rng = np.random.default_rng(seed)
    reports = [e2e_score(_random_scene(rng, 3), _random_scene(rng, 3), image_id=f"i{k}")
               for k in range(6)]
    whole = aggregate_report(reports)
    cut = int(rng.integers(0, 7))
    parts = aggregate_report([aggregate_report(reports[:cut]), aggregate_report(reports[cut:])])
    assert (whole.tp, whole.fp, whole.fn, whole.e2e_correct) == \
        (parts.tp, parts.fp, parts.fn, parts.e2e_correct)


@given(st.integers(0, 2**32 - 1))
def test_strong_lexicon_never_hurts(seed):
    rng = np.random.default_rng(seed)
    gt = _random_scene(rng, 4)
    pred = [SpotInstance(g.polygon, "".join(rng.choice(list("ABCD"), int(rng.integers(1, 5)))))
            for g in gt]
    strong = Lexicon("strong", [g.text for g in gt] + filler(100 - len(gt)))
    assert e2e_score(gt, pred, strong).e2e_correct >= e2e_score(gt, pred).e2e_correct


def test_score_corpus_parallel_matches_serial():
    rng = np.random.default_rng(9)
    gt = {f"img{k}": _random_scene(rng, 4) for k in range(8)}
    pred = {f"img{k}": _random_scene(rng, 4) for k in range(7)}
    serial = score_corpus(gt, pred, jobs=1)
    parallel = score_corpus(gt, pred, jobs=4)
    assert serial == parallel
    assert serial.to_dict() == parallel.to_dict()
    assert len(serial.per_image) == 8
    with pytest.raises(KeyError):
        score_corpus(gt, {"ghost": []})


def test_score_corpus_per_image_lexicon():
    gt = {"a": [inst(0, text="ALPHA")], "b": [inst(0, text="BETA")]}
    pred = {"a": [inst(0, text="ALPHX")], "b": [inst(0, text="BETX")]}
    lex = {"a": Lexicon("strong", ["ALPHA"] + filler(99)),
           "b": Lexicon("strong", ["BETA"] + filler(99))}
    assert score_corpus(gt, pred, lex).e2e_correct == 2
    assert score_corpus(gt, pred).e2e_correct == 0
