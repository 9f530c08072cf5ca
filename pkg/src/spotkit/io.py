"""File formats: binary PPM images, annotation JSON, key=value run configs.

Annotation JSON (UTF-8), shared by ground truth, predictions and generated
data; points are pixel coordinates and ``score`` appears only in
predictions::

    {"images": [{"id": str, "width": int, "height": int,
                 "instances": [{"points": [[x, y], ...], "text": str,
                                "score": number}]}]}
"""
from __future__ import annotations

from dataclasses import dataclass, fields
import json
import os
from pathlib import Path

import jsonschema
import numpy as np

from .geometry import GeometryError
from .imaging import from_uint8, to_uint8
from .metrics import SpotInstance
from .synth import AnnotationSet

ANNOTATION_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["images"],
    "additionalProperties": False,
    "properties": {
        "images": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "width", "height", "instances"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "width": {"type": "integer", "minimum": 1},
                    "height": {"type": "integer", "minimum": 1},
                    "instances": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["points", "text"],
                            "additionalProperties": False,
                            "properties": {
                                "points": {
                                    "type": "array", "minItems": 3,
                                    "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                              "items": {"type": "number"}},
                                },
                                "text": {"type": "string"},
                                "score": {"type": "number", "minimum": 0, "maximum": 1},
                            },
                        },
                    },
                },
            },
        },
    },
}

_RATIO = {"type": "number", "minimum": 0, "maximum": 1}
_COUNTS = {
    "type": "object",
    "required": ["tp", "fp", "fn", "precision", "recall", "fmeasure"],
    "properties": {
        "id": {"type": "string"},
        "tp": {"type": "integer", "minimum": 0},
        "fp": {"type": "integer", "minimum": 0},
        "fn": {"type": "integer", "minimum": 0},
        "precision": _RATIO, "recall": _RATIO, "fmeasure": _RATIO,
        "e2e_correct": {"type": "integer", "minimum": 0},
        "e2e_precision": _RATIO, "e2e_recall": _RATIO, "e2e_fmeasure": _RATIO,
    },
}
REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["iou_threshold", "lexicon", "detection", "end_to_end", "per_image"],
    "properties": {
        "iou_threshold": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "lexicon": {"enum": ["none", "full", "strong", "weak", "generic"]},
        "detection": {
            "type": "object", "required": ["tp", "fp", "fn", "precision", "recall", "fmeasure"],
        },
        "end_to_end": {
            "type": "object", "required": ["correct", "precision", "recall", "fmeasure"],
        },
        "per_image": {"type": "array", "items": _COUNTS},
    },
}


class AnnotationSchemaError(ValueError):
    """The JSON document does not follow the annotation schema."""


class AnnotationValidationError(ValueError):
    """Schema-valid JSON with invalid geometry; ``problems`` lists each offender."""

    def __init__(self, problems: list):
        self.problems = problems
        super().__init__("; ".join(problems))


# -- PPM ---------------------------------------------------------------------------

def write_ppm(path, img) -> None:
    """Binary P6, maxval 255; float images in [0, 1] are rounded to 8 bits."""
    arr = np.asarray(img)
    data = arr if arr.dtype == np.uint8 else to_uint8(arr)
    if data.ndim != 3 or data.shape[2] != 3:
        raise ValueError(f"PPM needs an (h, w, 3) image, got {data.shape}")
    h, w, _ = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(data).tobytes())


def _ppm_tokens(buf: bytes, count: int):
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PPM header")
        tokens.append(int(buf[start:pos]))
    return tokens, pos + 1


def read_ppm(path, as_float: bool = True) -> np.ndarray:
    """Read a binary P6 file with maxval 255."""
    buf = Path(path).read_bytes()
    if buf[:2] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    (w, h, maxval), start = _ppm_tokens(buf, 3)
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PPM is supported (maxval {maxval})")
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h * 3, offset=start)
    img = data.reshape(h, w, 3).copy()
    return from_uint8(img) if as_float else img


# -- annotations ----------------------------------------------------------------------

def validate_annotation_json(doc) -> None:
    """Raise :class:`AnnotationSchemaError` naming the first offending element."""
    validator = jsonschema.Draft202012Validator(ANNOTATION_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise AnnotationSchemaError(f"{where}: {e.message}")


def annotations_from_json(doc, n_points: int | None = None) -> list:
    """Parse a schema-checked document into :class:`AnnotationSet` objects.

    Every invalid polygon is collected before raising, each named by image
    id and instance index.
    """
    validate_annotation_json(doc)
    problems, out, seen = [], [], set()
    for img in doc["images"]:
        iid = img["id"]
        if iid in seen:
            problems.append(f"image {iid!r}: duplicate id")
            continue
        seen.add(iid)
        insts = []
        for k, inst in enumerate(img["instances"]):
            try:
                insts.append(SpotInstance(np.array(inst["points"], dtype=np.float64),
                                          inst["text"], inst.get("score")))
            except (GeometryError, ValueError) as exc:
                problems.append(f"image {iid!r} instance {k}: {exc}")
        try:
            out.append(AnnotationSet(iid, img["width"], img["height"], tuple(insts), n_points))
        except ValueError as exc:
            problems.append(str(exc))
    if problems:
        raise AnnotationValidationError(problems)
    return out


def annotations_to_json(sets, include_score: bool | None = None) -> dict:
    """Inverse of :func:`annotations_from_json`; scores kept when present."""
    images = []
    for s in sets:
        insts = []
        for inst in s.instances:
            d = {"points": inst.polygon.points.tolist(), "text": inst.text}
            keep = inst.score is not None if include_score is None else include_score
            if keep:
                d["score"] = float(inst.score)
            insts.append(d)
        images.append({"id": s.image_id, "width": int(s.width), "height": int(s.height),
                       "instances": insts})
    return {"images": images}


def dump_json(path, doc) -> None:
    text = json.dumps(doc, ensure_ascii=False, indent=1, sort_keys=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_annotations(path, n_points: int | None = None) -> list:
    """Load ``path`` (a JSON file, or a directory holding ``annotations.json``)."""
    p = Path(path)
    if p.is_dir():
        p = p / "annotations.json"
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AnnotationSchemaError(f"{p}: not valid JSON ({exc})") from None
    return annotations_from_json(doc, n_points)


def save_annotations(path, sets) -> None:
    dump_json(path, annotations_to_json(sets))


# -- run configuration ------------------------------------------------------------------

@dataclass
class RunConfig:
    """Every tunable of a CLI run. Field comments give the model symbol."""

    # scoring
    iou_threshold: float = 0.5
    lexicon_mode: str = "none"
    lexicon: str = ""                 # word list file (full / weak / generic)
    lexicon_dir: str = ""             # one <image id>.txt per image (strong)
    case_sensitive: bool = False
    keep_whitespace: bool = False
    max_distance: int = -1            # -1: ceil(len(word) / 2)
    greedy: bool = False
    jobs: int = 1
    # loss weights
    w_cls: float = 2.0                # lambda_cls
    w_coord: float = 5.0              # lambda_coord
    w_giou: float = 2.0               # lambda_gIoU
    w_char: float = 4.0               # lambda_char
    w_adv: float = 0.005              # lambda (generator adversarial)
    w_pix: float = 0.01               # eta (generator pixel L1)
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    # kernels
    num_queries: int = 100            # Q, composite queries
    n_points: int = 20                # N, control points
    max_chars: int = 25               # M, maximum text length
    heads: int = 8                    # attention heads
    sample_points: int = 4            # deformable sampling points
    enc_layers: int = 6               # encoder layers
    dec_layers: int = 6               # decoder layers (each decoder)
    d_model: int = 64
    window: int = 4
    patch: int = 8
    # data
    seed: int = 0
    count: int = 10
    width: int = 400
    height: int = 400
    min_instances: int = 3
    max_instances: int = 8
    degrade_preset: str = "underwater"
    enhance_mode: str = "identity"
    enhance_scale: int = 4

    def loss_weights(self):
        from .losses import LossWeights
        return LossWeights(cls=self.w_cls, coord=self.w_coord, giou=self.w_giou, char=self.w_char,
                           adv=self.w_adv, pix=self.w_pix, focal_alpha=self.focal_alpha,
                           focal_gamma=self.focal_gamma)

    def spotter_config(self):
        from .kernels import SpotterConfig
        return SpotterConfig(num_queries=self.num_queries, n_points=self.n_points,
                             max_chars=self.max_chars, heads=self.heads,
                             sample_points=self.sample_points, enc_layers=self.enc_layers,
                             dec_layers=self.dec_layers, d_model=self.d_model, window=self.window)

    def set(self, key: str, raw: str) -> None:
        """Assign ``raw`` (text) to field ``key`` with type conversion."""
        types = {f.name: f.type for f in fields(self)}
        if key not in types:
            raise KeyError(f"unknown config key {key!r}")
        t = types[key]
        if t in ("bool", bool):
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ValueError(f"{key}: expected a boolean, got {raw!r}")
            val = low in ("1", "true", "yes")
        elif t in ("int", int):
            val = int(raw)
        elif t in ("float", float):
            val = float(raw)
        else:
            val = raw.strip()
        setattr(self, key, val)

    def to_text(self) -> str:
        """Config file text with every key at its current value."""
        out = ["# spotkit run configuration: key = value, '#' starts a comment"]
        for f in fields(self):
            v = getattr(self, f.name)
            v = str(v).lower() if isinstance(v, bool) else v
            note = f"  # {CONFIG_NOTES[f.name]}" if f.name in CONFIG_NOTES else ""
            out.append(f"{f.name} = {v}{note}")
        return "\n".join(out) + "\n"


CONFIG_NOTES = {
    "iou_threshold": "IoU needed for a detection match (>=)",
    "lexicon_mode": "none | full | strong | weak | generic",
    "max_distance": "lexicon correction cap; -1 means ceil(len(word) / 2)",
    "w_cls": "lambda_cls, focal classification weight",
    "w_coord": "lambda_coord, control-point L1 weight",
    "w_giou": "lambda_gIoU, generalized IoU weight",
    "w_char": "lambda_char, character cross-entropy weight",
    "w_adv": "lambda, relativistic adversarial weight of L_G",
    "w_pix": "eta, pixel L1 weight of L_G",
    "focal_alpha": "alpha of the focal loss",
    "focal_gamma": "gamma of the focal loss",
    "num_queries": "Q, composite queries",
    "n_points": "N, control points per polygon",
    "max_chars": "M, maximum text length",
    "heads": "attention heads",
    "sample_points": "deformable attention sampling points per head",
    "enc_layers": "encoder layers",
    "dec_layers": "location and character decoder layers",
    "patch": "pixels per feature-map cell fed to the spotter",
    "degrade_preset": "identity | underwater",
    "enhance_mode": "identity | rrdb",
}


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected key = value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            cfg.set(key, val)
        except (KeyError, ValueError) as exc:
            raise ValueError(f"config line {n}: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def list_images(directory) -> list:
    """Sorted ``*.ppm`` files of ``directory/images`` (or of ``directory`` itself)."""
    d = Path(directory)
    sub = d / "images"
    root = sub if sub.is_dir() else d
    return sorted(p for p in root.iterdir() if p.suffix == ".ppm")


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p / "images", exist_ok=True)
    return p
