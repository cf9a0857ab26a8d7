"""Command-line surface: simulate -> train -> track -> eval -> report.

Exit codes: 0 success, 1 usage problem, 2 bad data (parse errors, shape
mismatches, checksum failures), 3 numeric divergence during training.
stdout carries only the requested artifact or JSON report; progress and
warnings go to stderr. All commands are deterministic: the same inputs,
flags and seeds produce byte-identical outputs.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

from . import association, simulate, training, transformer
from .camera import DEFAULT_FOCAL, DEFAULT_Z_NORM, CameraCrop, lift_translation
from .embeddings import DEFAULT_DIMS
from .errors import ConfigError, DataError, DivergenceError, TritrackError
from .io import (TrackRecord, load_config, load_weights, read_detections,
                 read_tracks, save_weights, write_detections_binary,
                 write_detections_jsonl, write_tracks)
from .metrics import LabeledDetection, evaluate
from .simulate import SimConfig
from .training import LossConfig
from .transformer import AttentionConfig

REPORT_COLUMNS = ("num_gt", "false_positives", "false_negatives",
                  "id_switches", "mota", "idf1")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _parse_beta(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            "beta must be three comma-separated numbers, e.g. 0.5,0.5,0")
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad beta value: {exc}") from exc
    if any(v < 0 for v in vals) or sum(vals) <= 0:
        raise argparse.ArgumentTypeError(
            "beta entries must be >= 0 with a positive sum")
    return vals


def _parse_occlusion(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            "occlusion must be person:start:length, e.g. 0:5:4")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad occlusion value: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tritrack",
        description="Multi-person tracking over appearance/pose/location "
                    "embedding triplets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate",
                       help="generate a synthetic scenario as a detections file")
    p.add_argument("--config", help="TOML or JSON scenario config; flags override")
    p.add_argument("--out", required=True, help="output detections path")
    p.add_argument("--out-format", choices=("jsonl", "binary"),
                   help="output encoding (default: by file suffix)")
    p.add_argument("--people", type=int, help="number of identities")
    p.add_argument("--frames", type=int, help="number of frames")
    p.add_argument("--seed", type=int, help="scenario seed (default 0)")
    p.add_argument("--appearance-noise", type=float,
                   help="per-frame appearance noise sigma (default 0)")
    p.add_argument("--pose-drift", type=float,
                   help="pose random-walk sigma (default 0)")
    p.add_argument("--walk-speed", type=float,
                   help="trajectory speed, view units/frame (default 0.1)")
    p.add_argument("--image-w", type=float, help="image width (default 1920)")
    p.add_argument("--image-h", type=float, help="image height (default 1080)")
    p.add_argument("--focal", type=float,
                   help=f"focal length in pixels (default {DEFAULT_FOCAL:g})")
    p.add_argument("--occlusion", type=_parse_occlusion, action="append",
                   default=None, metavar="P:START:LEN",
                   help="suppress person P for LEN frames from START (repeatable)")
    p.add_argument("--shot-change", type=int, action="append", default=None,
                   metavar="FRAME", help="redraw viewpoint at FRAME (repeatable)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit transformer weights on labeled detections")
    p.add_argument("--detections", required=True, help="labeled detections file")
    p.add_argument("--out", required=True, help="output weights path")
    p.add_argument("--lr", type=float, default=training.DEFAULT_LEARNING_RATE,
                   help="gradient step size (default 0.001)")
    p.add_argument("--margin", type=float, default=training.DEFAULT_MARGIN,
                   help="contrastive margin (default 10)")
    p.add_argument("--iterations", type=int, default=100,
                   help="full passes over the clips (default 100)")
    p.add_argument("--seed", type=int, default=0,
                   help="weight initialization seed (default 0)")
    p.add_argument("--window", type=int, default=8,
                   help="frames per training clip (default 8)")
    p.add_argument("--beta", type=_parse_beta, default=None,
                   help="attention weights app,pose,loc (default equal thirds)")
    p.add_argument("--z-norm", type=float, default=DEFAULT_Z_NORM,
                   help="keypoint normalization constant (default 10)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("track", help="associate detections into tracks")
    p.add_argument("--detections", required=True, help="detections file")
    p.add_argument("--out", required=True, help="output tracks path (JSONL)")
    p.add_argument("--weights",
                   help="trained weights; omit to associate raw tokens")
    p.add_argument("--beta", type=_parse_beta, default=None,
                   help="attention weights app,pose,loc (default: equal "
                        "thirds, or the values stored in --weights)")
    p.add_argument("--tau", type=float, default=association.DEFAULT_TAU,
                   help="association distance cap (default 8)")
    p.add_argument("--max-age", type=int, default=association.DEFAULT_MAX_AGE,
                   help="frames a track may go unmatched (default 24)")
    p.add_argument("--history", type=int,
                   default=association.DEFAULT_HISTORY_LEN,
                   help="embeddings kept per track (default 20)")
    p.add_argument("--window", type=int, default=8,
                   help="frames per transformer window (default 8)")
    p.add_argument("--z-norm", type=float, default=DEFAULT_Z_NORM,
                   help="keypoint normalization constant (default 10)")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score tracks against ground-truth identities")
    p.add_argument("--detections", required=True,
                   help="detections file carrying gt_id labels")
    p.add_argument("--tracks", required=True, help="tracker output (JSONL)")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("lift",
                       help="debug: view-space translation of one crop")
    p.add_argument("--image-w", type=float, required=True)
    p.add_argument("--image-h", type=float, required=True)
    p.add_argument("--center-x", type=float, required=True)
    p.add_argument("--center-y", type=float, required=True)
    p.add_argument("--box-size", type=float, required=True)
    p.add_argument("--cam-scale", type=float, default=1.0)
    p.add_argument("--tx", type=float, default=0.0)
    p.add_argument("--ty", type=float, default=0.0)
    p.add_argument("--focal", type=float, default=DEFAULT_FOCAL)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("report", help="flatten metric JSON into CSV columns")
    p.add_argument("--metrics", required=True,
                   help="JSON report (object or array of objects)")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_report)

    return parser


# --------------------------------------------------------------------------
# subcommands


_SIM_FLAG_FIELDS = (
    ("people", "num_people"),
    ("frames", "num_frames"),
    ("seed", "seed"),
    ("appearance_noise", "appearance_noise_sigma"),
    ("pose_drift", "pose_drift_sigma"),
    ("walk_speed", "walk_speed"),
    ("image_w", "image_w"),
    ("image_h", "image_h"),
    ("focal", "focal"),
    ("occlusion", "occlusions"),
    ("shot_change", "shot_changes"),
)


def cmd_simulate(args) -> int:
    values = {}
    if args.config:
        values = load_config(args.config)
        allowed = set(SimConfig.__dataclass_fields__)
        unknown = sorted(set(values) - allowed)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for flag, fld in _SIM_FLAG_FIELDS:
        val = getattr(args, flag)
        if val is not None:
            values[fld] = val
    cfg = SimConfig(**values)
    scenario = simulate.generate(cfg)
    fmt = args.out_format
    if fmt is None:
        fmt = "jsonl" if args.out.endswith((".jsonl", ".json")) else "binary"
    if fmt == "jsonl":
        write_detections_jsonl(args.out, scenario.detections)
    else:
        write_detections_binary(args.out, scenario.detections)
    _log(f"wrote {len(scenario.detections)} detections "
         f"({cfg.num_people} people, {cfg.num_frames} frames) to {args.out}")
    return 0


def cmd_train(args) -> int:
    records = read_detections(args.detections)
    clips = simulate.embed(records, window_len=args.window, z_norm=args.z_norm)
    attn_cfg = (AttentionConfig(*args.beta) if args.beta
                else AttentionConfig())
    loss_cfg = LossConfig(margin=args.margin, learning_rate=args.lr,
                          iterations=args.iterations)
    weights = transformer.init_weights(DEFAULT_DIMS, seed=args.seed)
    weights, history = training.train(clips, weights, loss_cfg, attn_cfg)
    save_weights(args.out, weights, attn_cfg)
    if history:
        _log(f"trained {len(history)} steps: loss {history[0]:.6f} -> "
             f"{history[-1]:.6f}")
    _log(f"wrote weights to {args.out}")
    return 0


def _token_grids(args, records):
    """Embed detections and produce the per-batch association features."""
    batches = simulate.embed(records, window_len=args.window,
                             z_norm=args.z_norm)
    if args.weights:
        weights, stored_cfg = load_weights(args.weights,
                                           expected_dims=DEFAULT_DIMS)
        cfg = AttentionConfig(*args.beta) if args.beta else stored_cfg
        grids = [transformer.forward(b, weights, cfg) for b in batches]
        _log(f"transformer mode: beta=({cfg.beta_app:g}, {cfg.beta_pose:g}, "
             f"{cfg.beta_loc:g})")
    else:
        cfg = AttentionConfig(*args.beta) if args.beta else AttentionConfig()
        grids = [transformer.attribute_weighted(b.features, cfg, b.dims)
                 for b in batches]
        _log(f"raw-token mode: beta=({cfg.beta_app:g}, {cfg.beta_pose:g}, "
             f"{cfg.beta_loc:g})")
    return batches, grids


def cmd_track(args) -> int:
    records = read_detections(args.detections)
    batches, grids = _token_grids(args, records)
    keymap = simulate.detection_keys(batches, records)
    tracker_cfg = association.TrackerConfig(
        tau=args.tau, history_len=args.history, max_age=args.max_age)
    state = association.TrackerState(config=tracker_cfg)
    out = []
    for b, (batch, grid) in enumerate(zip(batches, grids)):
        for t in range(batch.num_frames):
            frame = int(batch.frames[t])
            dets = [(slot, grid[t, slot])
                    for slot in range(batch.max_people) if batch.valid[t, slot]]
            assignment = association.step(frame, dets, state)
            for slot, track_id in sorted(assignment.labels().items()):
                f, det_key = keymap[(b, t, slot)]
                out.append(TrackRecord(frame=f, det_key=det_key,
                                       track_id=track_id))
    write_tracks(args.out, out)
    ids = {r.track_id for r in out}
    _log(f"wrote {len(out)} labeled detections over {len(ids)} tracks "
         f"to {args.out}")
    return 0


def cmd_eval(args) -> int:
    records = read_detections(args.detections)
    tracks = read_tracks(args.tracks)
    known = {(r.frame, r.det_key): r.gt_id for r in records}
    preds = {}
    for tr in tracks:
        key = (tr.frame, tr.det_key)
        if key not in known:
            raise DataError(
                f"track references unknown detection (frame={tr.frame}, "
                f"det_key={tr.det_key!r})")
        preds[key] = tr.track_id
    labeled = [LabeledDetection(frame=f, det_key=k, gt_id=gt,
                                pred_id=preds.get((f, k)))
               for (f, k), gt in known.items()]
    report = evaluate(labeled)
    text = json.dumps(report.as_dict(), sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_lift(args) -> int:
    crop = CameraCrop(image_w=args.image_w, image_h=args.image_h,
                      center_x=args.center_x, center_y=args.center_y,
                      box_size=args.box_size, cam_scale=args.cam_scale,
                      cam_tx=args.tx, cam_ty=args.ty, focal=args.focal)
    t = lift_translation(crop)
    sys.stdout.write(json.dumps(t.tolist()) + "\n")
    return 0


def cmd_report(args) -> int:
    with open(args.metrics, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"cannot parse metrics JSON: {exc}") from exc
    rows = payload if isinstance(payload, list) else [payload]
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            raise DataError(f"metrics entry {i} is not an object")
    extras = sorted({k for row in rows for k in row} - set(REPORT_COLUMNS))
    columns = [c for c in REPORT_COLUMNS
               if any(c in row for row in rows)] + extras

    def emit(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row.get(c, "") for c in columns])

    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            emit(fh)
    else:
        emit(sys.stdout)
    return 0


# --------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except DivergenceError as exc:
        _log(f"error: {exc}")
        return 3
    except TritrackError as exc:
        _log(f"error: {exc}")
        return 2
    except OSError as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
