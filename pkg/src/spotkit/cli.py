"""``spotkit`` command line.

Subcommands: ``gen``, ``degrade``, ``enhance``, ``forward``, ``score``,
``gradcheck`` and ``config``. Every command reads defaults from a
:class:`~spotkit.io.RunConfig`, then an optional ``--config`` file, then
``--set key=value`` pairs, then its own flags.

``score`` exits 0 on success, 2 when an annotation file breaks the schema
and 3 when it holds invalid geometry.
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path
import sys

import numpy as np

from . import io
from .metrics import Lexicon, format_fixed, load_lexicon, score_corpus
from .rng import derive_seed

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA, EXIT_VALIDATION = 0, 1, 2, 3


class CommandError(Exception):
    def __init__(self, message: str, code: int = EXIT_FAIL):
        super().__init__(message)
        self.code = code


def _config(args) -> io.RunConfig:
    cfg = io.load_config(args.config) if args.config else io.RunConfig()
    for item in args.set or ():
        if "=" not in item:
            raise CommandError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        try:
            cfg.set(key.strip(), val)
        except (KeyError, ValueError) as exc:
            raise CommandError(str(exc)) from None
    for key, val in vars(args).items():
        if key.startswith("cfg_") and val is not None:
            setattr(cfg, key[4:], val)
    return cfg


def _read_sets(directory) -> dict:
    """Annotation sets of a dataset directory keyed by id ({} if it has none)."""
    path = Path(directory) / "annotations.json"
    return {s.image_id: s for s in io.load_annotations(path)} if path.exists() else {}


# -- gen ------------------------------------------------------------------------------

def cmd_gen(args) -> int:
    from .synth import PlacementError, SceneSpec, generate_scene

    cfg = _config(args)
    if cfg.count < 0:
        raise CommandError("--count must be >= 0")
    spec = SceneSpec(width=cfg.width, height=cfg.height, min_instances=cfg.min_instances,
                     max_instances=cfg.max_instances, seed=cfg.seed)
    out = io.ensure_dir(args.out)
    sets = []
    for i in range(cfg.count):
        try:
            img, ann = generate_scene(spec, i)
        except PlacementError as exc:
            raise CommandError(f"scene {i}: {exc}") from None
        io.write_ppm(out / "images" / f"{ann.image_id}.ppm", img)
        sets.append(ann)
    io.save_annotations(out / "annotations.json", sets)
    print(f"wrote {cfg.count} images to {out}")
    return EXIT_OK


# -- degrade / enhance ------------------------------------------------------------------

def _map_images(args, transform, scale_annotations) -> int:
    src, dst = Path(args.input), io.ensure_dir(args.out)
    if not src.is_dir():
        raise CommandError(f"input directory {src} does not exist")
    files = io.list_images(src)
    sets = _read_sets(src)
    out_sets = []
    for k, f in enumerate(files):
        img = io.read_ppm(f)
        res = transform(img, k)
        io.write_ppm(dst / "images" / f.name, res)
        if f.stem in sets:
            out_sets.append(scale_annotations(sets[f.stem], img.shape, res.shape))
    if sets:
        io.save_annotations(dst / "annotations.json", out_sets)
    print(f"wrote {len(files)} images to {dst}")
    return EXIT_OK


def _rescale(ann, old_shape, new_shape):
    h, w = old_shape[:2]
    nh, nw = new_shape[:2]
    if (nh, nw) == (h, w):
        return ann
    return ann.scaled(nw / w, nh / h, width=nw, height=nh)


def cmd_degrade(args) -> int:
    from .enhance import degrade_preset, degrade_underwater

    cfg = _config(args)
    try:
        degrade_preset(cfg.degrade_preset)
    except ValueError as exc:
        raise CommandError(str(exc)) from None

    def transform(img, k):
        p = degrade_preset(cfg.degrade_preset, seed=derive_seed(cfg.seed, k))
        return degrade_underwater(img, p)

    return _map_images(args, transform, _rescale)


def cmd_enhance(args) -> int:
    from .enhance import EnhanceConfig, enhance, init_rrdb_weights

    cfg = _config(args)
    try:
        ec = EnhanceConfig(mode=cfg.enhance_mode, scale=cfg.enhance_scale, seed=cfg.seed)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    weights = init_rrdb_weights(ec.seed, ec.rrdb, ec.scale) if ec.mode == "rrdb" else None
    return _map_images(args, lambda img, k: enhance(img, ec, weights), _rescale)


# -- forward ------------------------------------------------------------------------------

def cmd_forward(args) -> int:
    from .geometry import denormalize_points
    from .kernels import SpotterWeights, image_to_feature_map, spotting_forward
    from .metrics import SpotInstance
    from .synth import AnnotationSet, SceneSpec, generate_scene

    cfg = _config(args)
    scfg = cfg.spotter_config()
    images = []
    if args.image:
        images.append((Path(args.image).stem, io.read_ppm(args.image)))
    elif args.input:
        src = Path(args.input)
        if not src.is_dir():
            raise CommandError(f"input directory {src} does not exist")
        images = [(f.stem, io.read_ppm(f)) for f in io.list_images(src)]
    else:
        img, ann = generate_scene(SceneSpec(width=cfg.width, height=cfg.height, seed=cfg.seed))
        images.append((ann.image_id, img))
    weights = SpotterWeights.from_seed(cfg.seed, 3, scfg)
    sets = []
    for image_id, img in images:
        h, w, _ = img.shape
        fm = image_to_feature_map(img, cfg.patch)
        preds = spotting_forward(fm, weights=weights)
        insts = [SpotInstance(denormalize_points(p.polygon, w, h), p.text, p.score)
                 for p in preds]
        sets.append(AnnotationSet(image_id, w, h, tuple(insts), None))
    doc = io.annotations_to_json(sets)
    io.validate_annotation_json(doc)
    if args.out:
        io.dump_json(args.out, doc)
        print(f"wrote predictions for {len(sets)} images to {args.out}")
    else:
        print(json.dumps(doc, indent=1))
    return EXIT_OK


# -- score -----------------------------------------------------------------------------

def _lexicons(cfg, ids):
    mode = cfg.lexicon_mode
    if mode == "none":
        return Lexicon("none")
    if mode == "strong":
        if not cfg.lexicon_dir:
            raise CommandError("strong lexicon mode needs --lexicon-dir")
        return {i: load_lexicon(Path(cfg.lexicon_dir) / f"{i}.txt", "strong") for i in ids}
    if not cfg.lexicon:
        raise CommandError(f"{mode} lexicon mode needs --lexicon")
    return load_lexicon(cfg.lexicon, mode)


def score_report(gt_sets, pred_sets, cfg: io.RunConfig) -> dict:
    """JSON-ready report for two annotation collections."""
    gt = {s.image_id: s.instances for s in gt_sets}
    pred = {s.image_id: s.instances for s in pred_sets}
    lex = _lexicons(cfg, sorted(gt))
    rep = score_corpus(gt, pred, lex, cfg.iou_threshold, jobs=cfg.jobs,
                       case_sensitive=cfg.case_sensitive, keep_whitespace=cfg.keep_whitespace,
                       max_distance=None if cfg.max_distance < 0 else cfg.max_distance,
                       greedy=cfg.greedy)
    d = rep.to_dict()
    return {
        "iou_threshold": cfg.iou_threshold,
        "lexicon": cfg.lexicon_mode,
        "detection": {k: d[k] for k in ("tp", "fp", "fn", "precision", "recall", "fmeasure")},
        "end_to_end": {"correct": d["e2e_correct"], "precision": d["e2e_precision"],
                       "recall": d["e2e_recall"], "fmeasure": d["e2e_fmeasure"]},
        "per_image": d.get("per_image", []),
    }


def format_table(report: dict, per_image: bool = False) -> str:
    """Aligned text table with Detection and End-to-end column groups."""
    mode = report["lexicon"].capitalize()
    rows = [("all", report["detection"], report["end_to_end"]["fmeasure"])]
    if per_image:
        rows += [(r["id"], r, r["e2e_fmeasure"]) for r in report["per_image"]]
    name_w = max(8, *(len(r[0]) for r in rows))
    cell = 8
    det_w = 3 * cell + 2 * 2
    lines = [f"{'':<{name_w}}  {'Detection':^{det_w}}  {'End-to-end':^{max(cell, 10)}}",
             f"{'image':<{name_w}}  {'P':>{cell}}  {'R':>{cell}}  {'F':>{cell}}  "
             f"{mode:>{max(cell, 10)}}"]
    for name, det, e2e in rows:
        vals = [format_fixed(det[k]) for k in ("precision", "recall", "fmeasure")]
        lines.append(f"{name:<{name_w}}  " + "  ".join(f"{v:>{cell}}" for v in vals)
                     + f"  {format_fixed(e2e):>{max(cell, 10)}}")
    d = report["detection"]
    lines.append(f"tp={d['tp']} fp={d['fp']} fn={d['fn']} "
                 f"e2e_correct={report['end_to_end']['correct']} "
                 f"iou_threshold={report['iou_threshold']}")
    return "\n".join(lines) + "\n"


def cmd_score(args) -> int:
    cfg = _config(args)
    try:
        gt = io.load_annotations(args.gt)
        pred = io.load_annotations(args.pred)
    except io.AnnotationSchemaError as exc:
        raise CommandError(f"schema error: {exc}", EXIT_SCHEMA) from None
    except io.AnnotationValidationError as exc:
        raise CommandError("validation errors:\n  " + "\n  ".join(exc.problems),
                           EXIT_VALIDATION) from None
    except FileNotFoundError as exc:
        raise CommandError(str(exc)) from None
    try:
        report = score_report(gt, pred, cfg)
    except KeyError as exc:
        raise CommandError(str(exc).strip("\"'"), EXIT_VALIDATION) from None
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if args.json:
        Path(args.json).write_text(text, encoding="utf-8")
    if args.format == "json":
        sys.stdout.write(text)
    else:
        sys.stdout.write(format_table(report, args.per_image))
    return EXIT_OK


# -- gradcheck / config ----------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    from .losses import gradient_checks

    cfg = _config(args)
    errs = gradient_checks(cfg.seed, step=args.step, inject_fault=args.inject_fault,
                           w=cfg.loss_weights())
    width = max(len(k) for k in errs)
    ok = True
    for name, err in errs.items():
        passed = err <= args.tolerance
        ok &= passed
        print(f"{name:<{width}}  {err:.3e}  {'PASS' if passed else 'FAIL'}")
    print(f"max relative error {max(errs.values()):.3e} (tolerance {args.tolerance:g})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_config(args) -> int:
    sys.stdout.write(_config(args).to_text())
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--seed", dest="cfg_seed", type=int)

    p = argparse.ArgumentParser(prog="spotkit", description="Text spotting geometry, "
                                "losses, kernels, synthetic data and scoring.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--count", dest="cfg_count", type=int)
    g.add_argument("--width", dest="cfg_width", type=int)
    g.add_argument("--height", dest="cfg_height", type=int)
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("degrade", parents=[common], help="apply the underwater degradation")
    d.add_argument("--input", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--preset", dest="cfg_degrade_preset")
    d.set_defaults(func=cmd_degrade)

    e = sub.add_parser("enhance", parents=[common], help="super-resolve (or copy) images")
    e.add_argument("--input", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--mode", dest="cfg_enhance_mode", choices=("identity", "rrdb"))
    e.add_argument("--scale", dest="cfg_enhance_scale", type=int, choices=(2, 4))
    e.set_defaults(func=cmd_enhance)

    f = sub.add_parser("forward", parents=[common], help="run the toy spotter")
    src = f.add_mutually_exclusive_group()
    src.add_argument("--input", help="dataset directory")
    src.add_argument("--image", help="single PPM image")
    f.add_argument("--out", help="prediction JSON (stdout if omitted)")
    f.add_argument("--patch", dest="cfg_patch", type=int)
    f.set_defaults(func=cmd_forward)

    s = sub.add_parser("score", parents=[common], help="detection and end-to-end scores")
    s.add_argument("--gt", required=True, help="annotation JSON or dataset directory")
    s.add_argument("--pred", required=True, help="prediction JSON or dataset directory")
    s.add_argument("--iou-threshold", dest="cfg_iou_threshold", type=float)
    s.add_argument("--lexicon-mode", dest="cfg_lexicon_mode",
                   choices=("none", "full", "strong", "weak", "generic"))
    s.add_argument("--lexicon", dest="cfg_lexicon")
    s.add_argument("--lexicon-dir", dest="cfg_lexicon_dir")
    s.add_argument("--case-sensitive", dest="cfg_case_sensitive", action="store_true",
                   default=None)
    s.add_argument("--greedy", dest="cfg_greedy", action="store_true", default=None)
    s.add_argument("--jobs", dest="cfg_jobs", type=int)
    s.add_argument("--json", help="also write the JSON report here")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.add_argument("--per-image", action="store_true")
    s.set_defaults(func=cmd_score)

    c = sub.add_parser("gradcheck", parents=[common], help="verify analytic loss gradients")
    c.add_argument("--step", type=float, default=1e-6)
    c.add_argument("--tolerance", type=float, default=1e-5)
    c.add_argument("--inject-fault", action="store_true",
                   help="corrupt one gradient on purpose (the check must fail)")
    c.set_defaults(func=cmd_gradcheck)

    k = sub.add_parser("config", parents=[common], help="print the effective configuration")
    k.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"spotkit {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, ValueError) as exc:
        print(f"spotkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
