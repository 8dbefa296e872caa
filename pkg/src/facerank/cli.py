"""Command-line pipeline: gen -> fit -> rank -> eval, plus parts and targets.

Exit codes: 0 success, 1 I/O or environment failure, 2 validation or domain
error. Failures print one machine-readable `error: <Type>: <detail>` line on
stderr. All output files are written atomically, so re-running a subcommand
on identical inputs overwrites them with byte-identical content.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import evaluation, ranking, report, synth
from .errors import FacerankError
from .faceness import (
    DEFAULT_EPSILON,
    DEFAULT_GEOMETRY,
    Aggregate,
    SpatialConfig,
    SplitGeometry,
    load_configs,
    score_windows,
)
from .fit import GridSpec, fit_all, save_fit_results
from .geometry import ellipse_to_box, load_ellipses, load_windows
from .ioutil import data_rows
from .pmap import PART_CHANNELS, Channel, integral_stack, read_pmap
from .ranking import load_ranked_csv, localize_parts, nms_boxes, rerank
from .synth import PartLayout

DEFAULTS = {
    "version": 1,
    "epsilon": DEFAULT_EPSILON,
    "mode": "arith",
    "iou_threshold": 0.5,
    "lambda_grid_points": 101,
    "alpha_grid_points": 41,
    "alpha_magnitude_range": [0.01, 10.0],
    "eval_n_values": [1, 2, 4, 8, 16, 32, 64, 128, 256, 512],
    "part_nms": {
        "radius": ranking.DEFAULT_NMS_RADIUS,
        "relative_threshold": ranking.DEFAULT_REL_THRESHOLD,
        "box_fraction": ranking.DEFAULT_BOX_FRACTION,
    },
    "gen": {
        "canvas": [320, 320],
        "faces": 4,
        "pos_jitter": 10,
        "negatives": 400,
        "proposal_jitter_sigma": 0.05,
        "clutter_count": 10,
        "clutter_amplitude": 0.6,
        "noise_sigma": 0.02,
    },
    "fit": {"train_pos": 200, "train_neg": 200, "train_jitter_sigma": 0.03},
    "rank_default_lambdas": PartLayout().planted(),
    "geometry_by_channel": {str(ch): str(geo) for ch, geo in DEFAULT_GEOMETRY.items()},
}


def _parse_parts(text: str | None) -> list[Channel]:
    if not text:
        return list(PART_CHANNELS)
    parts = []
    for tok in text.split(","):
        ch = Channel(tok.strip().lower())
        if ch not in PART_CHANNELS:
            raise ValueError(f"{tok!r} is not a part channel")
        parts.append(ch)
    return parts


def default_configs(
    layout: PartLayout | None = None, epsilon: float = DEFAULT_EPSILON
) -> list[SpatialConfig]:
    """Spatial configs carrying the default layout's split parameters."""
    lay = layout if layout is not None else PartLayout()
    return [
        SpatialConfig(Channel.HAIR, SplitGeometry.TOP_OVER_BOTTOM, lam=lay.hair_lambda, epsilon=epsilon),
        SpatialConfig(Channel.EYE, SplitGeometry.BAND_OVER_OUTSIDE,
                      lam_top=lay.eye_band[0], lam_bot=lay.eye_band[1], epsilon=epsilon),
        SpatialConfig(Channel.NOSE, SplitGeometry.BAND_OVER_OUTSIDE,
                      lam_top=lay.nose_band[0], lam_bot=lay.nose_band[1], epsilon=epsilon),
        SpatialConfig(Channel.MOUTH, SplitGeometry.BAND_OVER_OUTSIDE,
                      lam_top=lay.mouth_band[0], lam_bot=lay.mouth_band[1], epsilon=epsilon),
        SpatialConfig(Channel.BEARD, SplitGeometry.BOTTOM_OVER_TOP, lam=lay.beard_lambda, epsilon=epsilon),
    ]


def cmd_gen(args) -> int:
    if args.spec:
        spec = synth.load_spec(args.spec)
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)
    else:
        gd = DEFAULTS["gen"]
        spec = synth.default_spec(
            seed=args.seed if args.seed is not None else 0,
            faces=args.faces,
            occluded=_parse_parts(args.occlude) if args.occlude else (),
            clutter_count=gd["clutter_count"],
            clutter_amplitude=gd["clutter_amplitude"],
            noise_sigma=gd["noise_sigma"],
        )
    scene = synth.generate(spec)
    proposals = synth.sample_proposals(
        scene,
        n_pos_jitter=args.pos_jitter,
        n_neg=args.negatives,
        jitter_sigma=DEFAULTS["gen"]["proposal_jitter_sigma"],
    )
    scene = dataclasses.replace(scene, proposals=tuple(proposals))
    synth.write_scene(scene, args.out)
    print(f"scene {args.out}: {len(scene.gt)} faces, {len(proposals)} proposals, seed {spec.seed}")
    return 0


def cmd_fit(args) -> int:
    channels = _parse_parts(args.parts)
    samples = []
    for scene_dir in args.scenes:
        scene = synth.read_scene(scene_dir)
        samples.extend(
            synth.sample_training(
                scene,
                n_pos=args.train_pos,
                n_neg=args.train_neg,
                jitter_sigma=args.train_jitter,
            )
        )
    search = GridSpec(lambda_points=args.grid, alpha_points=args.alpha_points)
    results = fit_all(samples, channels, search=search, epsilon=args.epsilon)
    out = Path(args.out)
    dump_dir = out.parent if args.grid_dump else None
    save_fit_results(out, results, Aggregate(args.mode), grid_dump_dir=dump_dir)
    for r in results:
        lams = ",".join(f"{l:.4g}" for l in r.config.lambdas)
        print(
            f"fit {r.config.channel}: lambda=({lams}) alpha={r.alpha:.4g} "
            f"log_posterior={r.log_posterior:.6g}"
        )
    print(f"wrote {out}")
    return 0


def cmd_rank(args) -> int:
    scene = synth.read_scene(args.scene)
    if args.config:
        configs, mode = load_configs(args.config)
    else:
        configs, mode = default_configs(epsilon=args.epsilon), Aggregate(DEFAULTS["mode"])
    if args.mode:
        mode = Aggregate(args.mode)
    wanted = set(_parse_parts(args.parts))
    configs = [c for c in configs if c.channel in wanted]
    if args.epsilon != DEFAULT_EPSILON:
        configs = [dataclasses.replace(c, epsilon=args.epsilon) for c in configs]
    windows = list(scene.proposals)
    if not windows:
        ranking.save_ranked_csv(args.out, ranking.RankedList((), ()))
        print(f"ranked 0 windows -> {args.out}")
        return 0
    integrals = integral_stack(scene.maps.values())
    scores = score_windows(integrals, windows, configs, mode)
    ranked = rerank(windows, scores)
    note = ""
    if args.nms is not None:
        ranked = nms_boxes(ranked, args.nms)
        note = f" (nms kept {len(ranked)})"
    ranking.save_ranked_csv(args.out, ranked)
    print(f"ranked {len(windows)} windows -> {args.out}{note}")
    return 0


def cmd_parts(args) -> int:
    m = read_pmap(args.pmap)
    detections = localize_parts(
        m,
        radius=args.radius,
        threshold=args.threshold,
        box_w=args.box_size,
        box_h=args.box_size,
    )
    ranking.save_part_detections_csv(args.out, detections)
    print(f"{len(detections)} part detections -> {args.out}")
    return 0


def _load_gt(path: str, fmt: str):
    if fmt == "auto":
        first = next(iter(data_rows(path)), None)
        fmt = "ellipse" if first is not None and len(first[1]) == 5 else "box"
    if fmt == "ellipse":
        boxes = [ellipse_to_box(e) for e in load_ellipses(path)]
        return [dataclasses.replace(b, id=i) for i, b in enumerate(boxes)]
    return load_windows(path)


def cmd_eval(args) -> int:
    windows, combined = load_ranked_csv(args.ranked)
    gt = _load_gt(args.gt, args.gt_format)
    n_values = [int(tok) for tok in args.n_list.split(",")]
    rep = evaluation.make_report(windows, gt, combined, n_values, iou_thresh=args.iou)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.save_report_json(out / "report.json", rep)
    evaluation.save_dr_csv(out / "dr_curve.csv", rep.dr_table)
    evaluation.save_pr_csv(out / "pr_curve.csv", rep.pr.points)
    report.render_dr_curve(rep.dr_table, out / "dr_curve.png")
    report.render_pr_curve(rep.pr.points, rep.pr.ap, out / "pr_curve.png")
    last_n, last_dr = rep.dr_table[-1] if rep.dr_table else (0, 0.0)
    print(f"AP {rep.pr.ap:.4f}, DR@{last_n} {last_dr:.3f} -> {out}")
    return 0


def cmd_targets(args) -> int:
    proposals = load_windows(args.proposals)
    gt = load_windows(args.gt)
    targets = evaluation.prepare_refinement_targets(proposals, gt, iou_thresh=args.iou)
    evaluation.save_targets_csv(args.out, targets)
    faces = sum(t.is_face for t in targets)
    print(f"{faces} face / {len(targets) - faces} non-face targets -> {args.out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="facerank",
        description="Re-rank candidate windows by facial-part response layout.",
    )
    p.add_argument("--show-config", action="store_true", help="print the versioned defaults block and exit")
    sub = p.add_subparsers(dest="command")

    g = sub.add_parser("gen", help="generate a synthetic scene directory")
    g.add_argument("--out", required=True, help="scene directory to create")
    g.add_argument("--spec", help="SceneSpec JSON file (default: built-in default spec)")
    g.add_argument("--seed", type=int, default=None, help="overrides the spec seed")
    g.add_argument("--faces", type=int, default=DEFAULTS["gen"]["faces"],
                   help="face count for the default spec (ignored with --spec)")
    g.add_argument("--occlude", default="",
                   help="comma list of parts suppressed in generation (default spec only)")
    g.add_argument("--pos-jitter", type=int, default=DEFAULTS["gen"]["pos_jitter"],
                   help="jittered positive proposals per face")
    g.add_argument("--negatives", type=int, default=DEFAULTS["gen"]["negatives"],
                   help="uniform negative proposals")
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", help="fit split parameters from labeled scene windows")
    f.add_argument("scenes", nargs="+", help="scene directories")
    f.add_argument("--out", required=True, help="fitted config JSON path")
    f.add_argument("--grid", type=int, default=DEFAULTS["lambda_grid_points"],
                   help="lambda grid points per dimension")
    f.add_argument("--alpha-points", type=int, default=DEFAULTS["alpha_grid_points"])
    f.add_argument("--epsilon", type=float, default=DEFAULTS["epsilon"])
    f.add_argument("--parts", default="", help="comma list of channels (default: all five)")
    f.add_argument("--mode", default=DEFAULTS["mode"], choices=["arith", "geo"])
    f.add_argument("--train-pos", type=int, default=DEFAULTS["fit"]["train_pos"])
    f.add_argument("--train-neg", type=int, default=DEFAULTS["fit"]["train_neg"])
    f.add_argument("--train-jitter", type=float, default=DEFAULTS["fit"]["train_jitter_sigma"])
    f.add_argument("--grid-dump", action="store_true",
                   help="also write per-channel grid objective CSVs next to --out")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("rank", help="score and re-rank a scene's proposals")
    r.add_argument("scene", help="scene directory")
    r.add_argument("--config", help="config JSON (default: built-in layout defaults)")
    r.add_argument("--out", required=True, help="ranked CSV path")
    r.add_argument("--nms", type=float, default=None, help="apply box NMS at this IoU")
    r.add_argument("--parts", default="", help="restrict scoring to these channels")
    r.add_argument("--mode", default=None, choices=["arith", "geo"])
    r.add_argument("--epsilon", type=float, default=DEFAULTS["epsilon"])
    r.set_defaults(func=cmd_rank)

    pa = sub.add_parser("parts", help="localize part peaks on one partness map")
    pa.add_argument("pmap", help="PMAP file")
    pa.add_argument("--out", required=True, help="detections CSV path")
    pa.add_argument("--radius", type=int, default=DEFAULTS["part_nms"]["radius"])
    pa.add_argument("--threshold", type=float, default=None,
                    help="absolute peak threshold (default: 0.3 x map peak)")
    pa.add_argument("--box-size", type=int, default=None,
                    help="emitted box side (default: 0.25 x min map dimension)")
    pa.set_defaults(func=cmd_parts)

    e = sub.add_parser("eval", help="detection-rate / PR report with figures")
    e.add_argument("--ranked", required=True, help="ranked CSV from `rank`")
    e.add_argument("--gt", required=True, help="ground truth: box CSV or ellipse CSV")
    e.add_argument("--gt-format", default="auto", choices=["auto", "box", "ellipse"],
                   help="auto treats 5-column files as ellipses")
    e.add_argument("--out-dir", required=True)
    e.add_argument("--n-list", default=",".join(str(n) for n in DEFAULTS["eval_n_values"]))
    e.add_argument("--iou", type=float, default=DEFAULTS["iou_threshold"])
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("targets", help="refinement training targets from proposals + GT")
    t.add_argument("--proposals", required=True)
    t.add_argument("--gt", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--iou", type=float, default=DEFAULTS["iou_threshold"])
    t.set_defaults(func=cmd_targets)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.show_config:
        print(json.dumps(DEFAULTS, indent=2, sort_keys=True))
        return 0
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except FacerankError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
