"""Detection and end-to-end scoring.

Detection counts come from an optimal one-to-one matching between predicted
and ground-truth polygons at an IoU threshold (``>=`` counts). Ground truths
transcribed ``###`` are don't-care: predictions matched to them are dropped
from both true and false positives. End-to-end scoring reuses the detection
matching and additionally asks that the (optionally lexicon-corrected)
transcriptions agree after normalization.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from functools import cached_property
import math
import re
from typing import Mapping, Sequence
import warnings

import numpy as np

from . import _accel
from .assignment import hungarian_solve
from .geometry import Polygon, as_polygon, iou_matrix

DONT_CARE = "###"
MAX_LINE_TEXT = 100
MAX_WORD_TEXT = 25
LEXICON_MODES = ("none", "full", "strong", "weak", "generic")
STRONG_LEXICON_SIZE = 100
GENERIC_LEXICON_SIZE = 90_000


@dataclass(frozen=True)
class SpotInstance:
    """One text instance: polygon, transcription, and a score for predictions."""

    polygon: Polygon
    text: str = ""
    score: float | None = None
    max_text: int = field(default=MAX_LINE_TEXT, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "polygon", as_polygon(self.polygon))
        if len(self.text) > self.max_text:
            raise ValueError(f"text longer than {self.max_text} characters: {self.text[:30]!r}...")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def dont_care(self) -> bool:
        return self.text == DONT_CARE


# -- lexicons -------------------------------------------------------------

@dataclass(frozen=True)
class Lexicon:
    """Word list for one protocol mode.

    ``strong`` lexica are per image and must hold exactly 100 words; the
    ``generic`` list is nominally 90,000 words (other sizes only warn).
    """

    mode: str = "none"
    words: tuple = ()

    def __post_init__(self):
        if self.mode not in LEXICON_MODES:
            raise ValueError(f"unknown lexicon mode {self.mode!r}; expected one of {LEXICON_MODES}")
        object.__setattr__(self, "words", tuple(self.words))
        if self.mode == "strong" and len(self.words) != STRONG_LEXICON_SIZE:
            raise ValueError(f"strong lexicon must have {STRONG_LEXICON_SIZE} words, got {len(self.words)}")
        if self.mode == "generic" and len(self.words) != GENERIC_LEXICON_SIZE:
            warnings.warn(f"generic lexicon has {len(self.words)} words "
                          f"(nominal size {GENERIC_LEXICON_SIZE})", stacklevel=2)

    @cached_property
    def _search_order(self) -> tuple[list, list]:
        ordered = sorted(set(self.words), key=lambda w: (w.lower(), w))
        return [w.lower() for w in ordered], ordered


def load_lexicon(path, mode: str) -> Lexicon:
    """Read a UTF-8 word list, one word per line (blank lines skipped)."""
    with open(path, encoding="utf-8") as fh:
        words = [ln.strip() for ln in fh]
    return Lexicon(mode, tuple(w for w in words if w))


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit costs."""
    return _accel.levenshtein(a, b)


def lexicon_correct(word: str, lex: Lexicon, max_distance: int | None = None) -> str:
    """Closest lexicon word under case-insensitive edit distance.

    Ties go to the lexicographically first word. If the best distance
    exceeds ``max_distance`` (default ``ceil(len(word) / 2)``) the word is
    returned unchanged.
    """
    if lex.mode == "none":
        raise ValueError("lexicon correction needs a lexicon mode other than 'none'")
    if not lex.words:
        raise ValueError("lexicon is empty")
    cap = math.ceil(len(word) / 2) if max_distance is None else max_distance
    keys, ordered = lex._search_order
    idx, _ = _accel.nearest_word(word.lower(), keys, cap)
    return word if idx < 0 else ordered[idx]


_WS = re.compile(r"\s+")


def normalize_text(s: str, case_sensitive: bool = False, keep_whitespace: bool = False) -> str:
    """Comparison form of a transcription.

    Default: uppercase, keep only A-Z, 0-9 and apostrophes. With
    ``keep_whitespace`` runs of whitespace collapse to one space instead of
    being dropped (line-level transcriptions).
    """
    if keep_whitespace:
        s = _WS.sub(" ", s).strip()
    if not case_sensitive:
        s = s.upper()
    return "".join(c for c in s if ("A" <= c <= "Z") or ("0" <= c <= "9") or c == "'"
                   or (case_sensitive and "a" <= c <= "z") or (keep_whitespace and c == " "))


# -- reports ------------------------------------------------------------------

def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F-measure.

    Empty denominators follow the ICDAR convention: with no ground truth
    recall is 1 and precision is 1 only if nothing was predicted either.
    """
    n_gt, n_pred = tp + fn, tp + fp
    if n_gt == 0:
        r = 1.0
        p = 1.0 if n_pred == 0 else 0.0
    else:
        r = tp / n_gt
        p = _ratio(tp, n_pred)
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


@dataclass(frozen=True)
class MetricReport:
    tp: int
    fp: int
    fn: int
    e2e_correct: int | None = None
    image_id: str = ""
    per_image: tuple = ()

    @property
    def precision(self) -> float:
        return prf(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self) -> float:
        return prf(self.tp, self.fp, self.fn)[1]

    @property
    def fmeasure(self) -> float:
        return prf(self.tp, self.fp, self.fn)[2]

    def _e2e(self):
        if self.e2e_correct is None:
            return None
        c = self.e2e_correct
        return prf(c, self.tp + self.fp - c, self.tp + self.fn - c)

    @property
    def e2e_precision(self):
        e = self._e2e()
        return None if e is None else e[0]

    @property
    def e2e_recall(self):
        e = self._e2e()
        return None if e is None else e[1]

    @property
    def e2e_accuracy(self):
        """End-to-end F-measure (the figure reported under None/Full/S/W/G)."""
        e = self._e2e()
        return None if e is None else e[2]

    def to_dict(self, decimals: int = 4, per_image: bool = True) -> dict:
        d = {
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "precision": round_half_up(self.precision, decimals),
            "recall": round_half_up(self.recall, decimals),
            "fmeasure": round_half_up(self.fmeasure, decimals),
        }
        if self.e2e_correct is not None:
            d["e2e_correct"] = self.e2e_correct
            d["e2e_precision"] = round_half_up(self.e2e_precision, decimals)
            d["e2e_recall"] = round_half_up(self.e2e_recall, decimals)
            d["e2e_fmeasure"] = round_half_up(self.e2e_accuracy, decimals)
        if self.image_id:
            d = {"id": self.image_id, **d}
        if per_image and self.per_image:
            d["per_image"] = [r.to_dict(decimals, per_image=False) for r in self.per_image]
        return d


def round_half_up(x: float, decimals: int = 4) -> float:
    q = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def format_fixed(x: float, decimals: int = 4) -> str:
    q = Decimal(1).scaleb(-decimals)
    return str(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


# -- matching -------------------------------------------------------------------

def _max_matching(iou: np.ndarray, threshold: float, greedy: bool) -> list:
    """Most pairs with IoU >= threshold; among those, the largest IoU sum."""
    n, m = iou.shape
    if n == 0 or m == 0:
        return []
    ok = iou >= threshold
    if not ok.any():
        return []
    if greedy:
        cand = sorted(((-iou[i, j], i, j) for i, j in np.argwhere(ok).tolist()))
        used_p, used_g, pairs = set(), set(), []
        for _, i, j in cand:
            if i not in used_p and j not in used_g:
                used_p.add(i)
                used_g.add(j)
                pairs.append((i, j))
        return sorted(pairs)
    big = min(n, m) + 1.0
    cost = np.where(ok, -(big + iou), 0.0)
    return [(i, j) for i, j in hungarian_solve(cost).pairs if ok[i, j]]


@dataclass(frozen=True)
class _ImageMatch:
    pairs: list            # (pred index, care-gt index) in original indices
    ignored_preds: set
    n_care_gt: int
    n_care_pred: int


def _match_image(gt: Sequence[SpotInstance], pred: Sequence[SpotInstance],
                 iou_threshold: float, greedy: bool) -> _ImageMatch:
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    care = [k for k, g in enumerate(gt) if not g.dont_care]
    dc = [k for k, g in enumerate(gt) if g.dont_care]
    polys_p = [p.polygon for p in pred]
    iou = iou_matrix(polys_p, [gt[k].polygon for k in care])
    pairs = [(i, care[j]) for i, j in _max_matching(iou, iou_threshold, greedy)]
    matched = {i for i, _ in pairs}
    ignored: set = set()
    rest = [i for i in range(len(pred)) if i not in matched]
    if dc and rest:
        iou_dc = iou_matrix([polys_p[i] for i in rest], [gt[k].polygon for k in dc])
        ignored = {rest[i] for i, _ in _max_matching(iou_dc, iou_threshold, greedy)}
    return _ImageMatch(sorted(pairs), ignored, len(care), len(pred) - len(ignored))


def detection_prf(gt: Sequence[SpotInstance], pred: Sequence[SpotInstance],
                  iou_threshold: float = 0.5, greedy: bool = False,
                  image_id: str = "") -> MetricReport:
    """Detection counts for one image."""
    mt = _match_image(gt, pred, iou_threshold, greedy)
    tp = len(mt.pairs)
    return MetricReport(tp, mt.n_care_pred - tp, mt.n_care_gt - tp, image_id=image_id)


def e2e_score(gt: Sequence[SpotInstance], pred: Sequence[SpotInstance],
              lex: Lexicon | None = None, iou_threshold: float = 0.5, *,
              case_sensitive: bool = False, keep_whitespace: bool = False,
              max_distance: int | None = None, greedy: bool = False,
              image_id: str = "") -> MetricReport:
    """Detection counts plus the number of matched pairs transcribed correctly."""
    lex = lex or Lexicon("none")
    mt = _match_image(gt, pred, iou_threshold, greedy)
    correct = 0
    for i, k in mt.pairs:
        text = pred[i].text
        if lex.mode != "none" and text:
            text = lexicon_correct(text, lex, max_distance)
        got = normalize_text(text, case_sensitive, keep_whitespace)
        want = normalize_text(gt[k].text, case_sensitive, keep_whitespace)
        if got and got == want:
            correct += 1
    tp = len(mt.pairs)
    return MetricReport(tp, mt.n_care_pred - tp, mt.n_care_gt - tp, correct, image_id=image_id)


def aggregate_report(reports: Sequence[MetricReport]) -> MetricReport:
    """Micro-average: sum counts over images, then recompute ratios.

    The per-image breakdown is kept sorted by image id, so the result does
    not depend on input order.
    """
    reports = list(reports)
    tp = sum(r.tp for r in reports)
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    e2e = None
    if all(r.e2e_correct is not None for r in reports):
        e2e = sum(r.e2e_correct for r in reports)
    per = []
    for r in reports:
        per.extend(r.per_image if r.per_image else [r])
    per.sort(key=lambda r: (r.image_id, r.tp, r.fp, r.fn, r.e2e_correct or 0))
    return MetricReport(tp, fp, fn, e2e, per_image=tuple(replace(r, per_image=()) for r in per))


def score_corpus(gt_images: Mapping[str, Sequence[SpotInstance]],
                 pred_images: Mapping[str, Sequence[SpotInstance]],
                 lexicon: Lexicon | Mapping[str, Lexicon] | None = None,
                 iou_threshold: float = 0.5, jobs: int = 1, **options) -> MetricReport:
    """Score every ground-truth image (missing predictions count as empty).

    ``lexicon`` is either one lexicon for all images or a mapping from
    image id to its own (strong) lexicon. ``jobs`` > 1 scores images on a
    thread pool; the result is identical for any value.
    """
    unknown = sorted(set(pred_images) - set(gt_images))
    if unknown:
        raise KeyError(f"predictions for unknown image ids: {unknown[:5]}")
    ids = sorted(gt_images)

    def one(image_id):
        lex = lexicon.get(image_id) if isinstance(lexicon, Mapping) else lexicon
        return e2e_score(gt_images[image_id], pred_images.get(image_id, ()), lex,
                         iou_threshold, image_id=image_id, **options)

    if jobs > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(one, ids))
    else:
        reports = [one(i) for i in ids]
    return aggregate_report(reports)
