"""Command line interface.

Subcommands: simulate, train, track, eval, report, sweep. Flags mirror the
config-file keys; a flag beats the file, the file beats the default. Exit
codes: 0 success, 1 usage error, 2 data error (missing or corrupt files,
invalid configuration values).
"""

from __future__ import annotations

import argparse
import csv
import functools
import itertools
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .association import METRIC_VARIANTS, AssociationConfig
from .config import RunConfig, apply_overrides, load_config, save_config
from .metrics import evaluate, evaluate_sequences
from .mot_io import (
    DataFileError,
    SequenceData,
    load_sequence_dir,
    read_detections,
    read_embeddings,
    read_ground_truth,
    write_results,
)
from .motion import ConstantVelocityPredictor, MotionPredictor, load_checkpoint, save_checkpoint
from .pipeline import run_sequence
from .simulator import MOTION_PROFILES, generate, write_sim_dir
from .track_manager import TrackManagerConfig
from .trainer import tracklets_from_ground_truth, train, write_train_log

__all__ = ["main", "run_sweep", "sweep_cells"]


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_run_config(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return RunConfig()


# ---------------------------------------------------------------------------
# simulate


def _cmd_simulate(args) -> int:
    rc = _load_run_config(args)
    overrides = {
        "n_agents": args.agents,
        "n_frames": args.frames,
        "motion_profile": args.profile,
        "occlusion_rate": args.occlusion_rate,
        "detection_noise": args.detection_noise,
        "miss_rate": args.miss_rate,
        "seed": args.seed,
        "embed_dim": args.embed_dim,
        "embed_noise": args.embed_noise,
        "max_speed": args.max_speed,
        "accel_max": args.accel,
    }
    if args.width is not None or args.height is not None:
        if args.width is None or args.height is None:
            raise ValueError("--width and --height must be given together")
        overrides["image_size"] = (args.width, args.height)
    if args.pan is not None:
        parts = args.pan.split(",")
        if len(parts) != 2:
            raise ValueError(f"--pan expects 'dx,dy', got {args.pan!r}")
        overrides["camera_pan"] = (float(parts[0]), float(parts[1]))
    apply_overrides(rc, "simulator", overrides)
    out = generate(rc.simulator)
    write_sim_dir(out, args.out, name=args.name)
    n_dets = sum(len(v) for v in out.detections.values())
    print(
        f"wrote {args.out}: {rc.simulator.n_agents} agents, "
        f"{rc.simulator.n_frames} frames, {n_dets} detections"
    )
    return 0


# ---------------------------------------------------------------------------
# train


def _cmd_train(args) -> int:
    rc = _load_run_config(args)
    apply_overrides(
        rc,
        "train",
        {
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "lr": args.lr,
            "weight_decay": args.weight_decay,
            "lambda_l1": args.lambda_l1,
            "lambda_ciou": args.lambda_ciou,
            "window": args.window,
            "seed": args.seed,
            "val_fraction": args.val_fraction,
        },
    )
    apply_overrides(
        rc,
        "model",
        {
            "blocks": args.blocks,
            "d_model": args.d_model,
            "heads": args.heads,
            "d_state": args.d_state,
            "d_ff": args.d_ff,
            "window": args.window,
        },
    )
    samples = []
    for d in args.data:
        seq = load_sequence_dir(d, with_embeddings=False)
        if not seq.ground_truth:
            raise DataFileError(f"{d} has no ground truth to train on")
        samples.extend(tracklets_from_ground_truth(seq.ground_truth, seq.image_size))
    if not samples:
        raise DataFileError("no usable tracklets found in the given data")
    print(f"training on {len(samples)} tracklets from {len(args.data)} sequence(s)")

    def progress(row):
        if row["epoch"] >= rc.train.epochs:
            print(f"tail average: val_ade={row['val_ade']:.3f}", flush=True)
            return
        print(
            f"epoch {row['epoch'] + 1}/{rc.train.epochs} "
            f"loss={row['loss']:.5f} l1={row['l1']:.6f} val_ade={row['val_ade']:.3f}",
            flush=True,
        )

    params, history = train(samples, rc.train, rc.model, callback=progress)
    save_checkpoint(args.out, params, rc.model)
    if args.log:
        write_train_log(args.log, history)
    final = history[-1]
    print(
        f"saved {args.out} (val_ade={final['val_ade']:.3f} px, "
        f"constant-velocity baseline {final['cv_ade']:.3f} px)"
    )
    return 0


# ---------------------------------------------------------------------------
# track


def _load_tracking_input(args) -> SequenceData:
    if args.data:
        return load_sequence_dir(args.data, with_embeddings=not args.no_embeddings)
    if not args.det:
        raise ValueError("either --data DIR or --det FILE is required")
    if args.width is None or args.height is None:
        raise ValueError("--det requires --width and --height")
    detections = read_detections(args.det)
    if args.embeddings:
        table = read_embeddings(args.embeddings)
        for frame, by_idx in table.items():
            dets = detections.get(frame)
            if dets is None:
                continue
            for idx, vec in by_idx.items():
                if idx < len(dets):
                    dets[idx].embedding = vec
    return SequenceData(detections=detections, image_size=(args.width, args.height))


def _make_predictor(checkpoint_path, image_size, rc: RunConfig):
    if checkpoint_path:
        try:
            params, model_cfg = load_checkpoint(checkpoint_path)
        except FileNotFoundError:
            raise DataFileError(f"checkpoint not found: {checkpoint_path}") from None
        return MotionPredictor(params, model_cfg, image_size), model_cfg.window
    return ConstantVelocityPredictor(image_size), rc.tracker.window


def _cmd_track(args) -> int:
    rc = _load_run_config(args)
    apply_overrides(
        rc,
        "association",
        {
            "b1": args.b1,
            "b2": args.b2,
            "lambda_reid": args.lambda_reid,
            "lambda_ssim": args.lambda_ssim,
            "high_conf": args.high_conf,
            "low_conf": args.low_conf,
            "gate_threshold": args.gate_threshold,
            "metric": args.metric,
            "hiou_abs": args.hiou_abs or None,
        },
    )
    apply_overrides(
        rc,
        "tracker",
        {
            "max_lost": args.max_lost,
            "min_hits": args.min_hits,
            "ema_alpha": args.ema_alpha,
            "ema_sigma": args.ema_sigma,
            "ema_convex": args.ema_convex or None,
        },
    )
    seq = _load_tracking_input(args)
    predictor, window = _make_predictor(args.checkpoint, seq.image_size, rc)
    mgr_cfg = replace(rc.tracker, window=window)
    results, stats = run_sequence(seq, rc.association, mgr_cfg, predictor)
    write_results(args.out, results)
    print(
        f"wrote {args.out}: {stats.frames} frames, {len(stats.track_ids)} tracks, "
        f"{stats.emitted} boxes, core fps={stats.fps:.1f}"
    )
    return 0


# ---------------------------------------------------------------------------
# eval / report


def _load_eval_pair(args):
    pred = read_ground_truth(args.results)  # same row layout: id + box per frame
    if args.gt:
        gt = read_ground_truth(args.gt)
    elif args.data:
        gt = read_ground_truth(os.path.join(args.data, "gt.txt"))
    else:
        raise ValueError("either --data DIR or --gt FILE is required")
    return pred, gt


def _print_report(report) -> None:
    for key, value in report.to_dict().items():
        if isinstance(value, float):
            print(f"{key:8s} {value:.4f}")
        else:
            print(f"{key:8s} {value}")


def _write_report_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def _cmd_eval(args) -> int:
    pred, gt = _load_eval_pair(args)
    report = evaluate(pred, gt, iou_threshold=args.iou_threshold)
    _print_report(report)
    if args.out:
        _write_report_csv(args.out, [report.to_dict()])
        print(f"wrote {args.out}")
    return 0


def _cmd_report(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pred, gt = _load_eval_pair(args)
    report = evaluate(pred, gt, iou_threshold=args.iou_threshold)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_report_csv(os.path.join(args.out_dir, "metrics.csv"), [report.to_dict()])
    _print_report(report)

    def centers(table):
        paths: dict[int, list[tuple[float, float]]] = {}
        for frame in sorted(table):
            for tid, box, *_ in table[frame]:
                paths.setdefault(int(tid), []).append(
                    (box[0] + 0.5 * box[2], box[1] + 0.5 * box[3])
                )
        return paths

    fig, ax = plt.subplots(figsize=(9, 6))
    for pts in centers(gt).values():
        arr = np.asarray(pts)
        ax.plot(arr[:, 0], arr[:, 1], color="0.8", lw=1.0, zorder=1)
    for tid, pts in centers(pred).items():
        arr = np.asarray(pts)
        ax.plot(arr[:, 0], arr[:, 1], lw=1.2, zorder=2, label=f"id {tid}")
    ax.invert_yaxis()
    ax.set_title("ground truth (grey) vs tracker output")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.savefig(os.path.join(args.out_dir, "trajectories.svg"), bbox_inches="tight")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    names = ["mota", "idf1", "hota", "deta", "assa"]
    vals = [getattr(report, n) for n in names]
    ax.bar(names, vals, color="#4878a8")
    ax.set_ylim(0, 1)
    for i, v in enumerate(vals):
        ax.text(i, v + 0.01, f"{v:.3f}", ha="center")
    ax.set_title("tracking scores")
    fig.savefig(os.path.join(args.out_dir, "metrics.svg"), bbox_inches="tight")
    plt.close(fig)
    print(f"wrote {args.out_dir}/metrics.csv, trajectories.svg, metrics.svg")
    return 0


# ---------------------------------------------------------------------------
# sweep


def sweep_cells(base: AssociationConfig, b1_grid, b2_grid, metric_grid, blocks_grid, window_grid):
    """Cartesian product of the requested grids. b2 is clamped to b1; each
    cell records both the requested and the effective value."""
    cells = []
    for blocks, window, metric, b1, b2 in itertools.product(
        blocks_grid, window_grid, metric_grid, b1_grid, b2_grid
    ):
        cfg = replace(base, metric=metric, b1=b1, b2=min(b2, b1))
        cells.append(
            {
                "blocks": blocks,
                "window": window,
                "metric": metric,
                "b1": b1,
                "b2_requested": b2,
                "b2": min(b2, b1),
                "assoc": cfg,
            }
        )
    return cells


@functools.lru_cache(maxsize=8)
def _cached_sequence(path: str) -> SequenceData:
    return load_sequence_dir(path)


def _run_cell(cell, data_dirs, tracker_cfg: TrackManagerConfig, checkpoint, train_spec, iou_threshold):
    pairs = []
    fps_all = []
    for d in data_dirs:
        seq = _cached_sequence(d)
        if seq.ground_truth is None:
            raise DataFileError(f"{d} has no gt.txt; sweep needs ground truth")
        if train_spec is not None:
            params, model_cfg = train_spec  # pre-trained per-cell model
            predictor = MotionPredictor(params, model_cfg, seq.image_size)
            window = model_cfg.window
        elif checkpoint:
            params, model_cfg = load_checkpoint(checkpoint)
            predictor = MotionPredictor(params, model_cfg, seq.image_size)
            window = model_cfg.window
        else:
            predictor = ConstantVelocityPredictor(seq.image_size)
            window = max(2, cell["window"])
        mgr = replace(tracker_cfg, window=window)
        results, stats = run_sequence(seq, cell["assoc"], mgr, predictor)
        pairs.append((results, seq.ground_truth))
        fps_all.append(stats.fps)
    report = evaluate_sequences(pairs, iou_threshold=iou_threshold)
    row = {
        "blocks": cell["blocks"],
        "window": cell["window"],
        "metric": cell["metric"],
        "b1": cell["b1"],
        "b2_requested": cell["b2_requested"],
        "b2": cell["b2"],
    }
    row.update(report.to_dict())
    row["fps"] = float(np.mean(fps_all))
    return row


def _sweep_worker(payload):
    idx, cell, data_dirs, tracker_cfg, checkpoint, train_args, iou_threshold = payload
    train_spec = None
    if train_args is not None:
        train_dirs, train_cfg, model_cfg = train_args
        model_cfg = replace(model_cfg, blocks=cell["blocks"], window=cell["window"])
        train_cfg = replace(train_cfg, window=cell["window"])
        samples = []
        for d in train_dirs:
            seq = _cached_sequence(d)
            samples.extend(tracklets_from_ground_truth(seq.ground_truth, seq.image_size))
        params, _ = train(samples, train_cfg, model_cfg)
        train_spec = (params, model_cfg)
    return idx, _run_cell(cell, data_dirs, tracker_cfg, checkpoint, train_spec, iou_threshold)


def run_sweep(
    rc: RunConfig,
    data_dirs,
    b1_grid=None,
    b2_grid=None,
    metric_grid=None,
    blocks_grid=None,
    window_grid=None,
    checkpoint=None,
    train_dirs=None,
    train_epochs=None,
    workers: int = 1,
    iou_threshold: float = 0.5,
    progress=None,
):
    """Evaluate every grid cell; returns rows in cell order.

    Cells that vary blocks/window train their own model when train_dirs is
    given; otherwise those fields only matter if a checkpoint is supplied
    (which fixes them) or fall back to the constant-velocity predictor.
    """
    base = rc.association
    cells = sweep_cells(
        base,
        b1_grid or [base.b1],
        b2_grid or [base.b2],
        metric_grid or [base.metric],
        blocks_grid or [rc.model.blocks],
        window_grid or [rc.model.window],
    )
    varies_model = (blocks_grid is not None) or (window_grid is not None)
    train_args = None
    if train_dirs and varies_model:
        tc = replace(rc.train, epochs=train_epochs or rc.train.epochs)
        train_args = (tuple(train_dirs), tc, rc.model)

    payloads = [
        (i, cell, tuple(data_dirs), rc.tracker, checkpoint, train_args, iou_threshold)
        for i, cell in enumerate(cells)
    ]
    rows: list = [None] * len(cells)
    if workers <= 1:
        for payload in payloads:
            idx, row = _sweep_worker(payload)
            rows[idx] = row
            if progress:
                progress(idx, len(cells), row)
    else:
        import multiprocessing as mp

        with mp.Pool(processes=workers) as pool:
            for idx, row in pool.imap(_sweep_worker, payloads):
                rows[idx] = row
                if progress:
                    progress(idx, len(cells), row)
    return rows


def _parse_grid(raw, cast):
    if raw is None:
        return None
    vals = [cast(p) for p in raw.split(",") if p.strip()]
    if not vals:
        raise ValueError(f"empty grid: {raw!r}")
    return vals


def _cmd_sweep(args) -> int:
    rc = _load_run_config(args)
    metric_grid = _parse_grid(args.metric_grid, str)
    if metric_grid:
        for m in metric_grid:
            if m not in METRIC_VARIANTS:
                raise ValueError(f"unknown metric in grid: {m!r}")
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("SSTRACK_WORKERS", "1"))

    def progress(idx, total, row):
        print(
            f"cell {idx + 1}/{total} metric={row['metric']} b1={row['b1']} b2={row['b2']} "
            f"blocks={row['blocks']} window={row['window']} "
            f"idf1={row['idf1']:.4f} hota={row['hota']:.4f} mota={row['mota']:.4f}",
            flush=True,
        )

    rows = run_sweep(
        rc,
        args.data,
        b1_grid=_parse_grid(args.b1_grid, float),
        b2_grid=_parse_grid(args.b2_grid, float),
        metric_grid=metric_grid,
        blocks_grid=_parse_grid(args.blocks_grid, int),
        window_grid=_parse_grid(args.window_grid, int),
        checkpoint=args.checkpoint,
        train_dirs=args.train_data,
        train_epochs=args.train_epochs,
        workers=workers,
        iou_threshold=args.iou_threshold,
        progress=progress,
    )
    _write_report_csv(args.out, rows)
    print(f"wrote {args.out}: {len(rows)} cells")
    return 0


# ---------------------------------------------------------------------------
# config helper


def _cmd_config(args) -> int:
    rc = _load_run_config(args)
    save_config(args.out, rc)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser wiring


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sstrack", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic sequence directory")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--name", default="sim")
    p.add_argument("--agents", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--profile", choices=MOTION_PROFILES)
    p.add_argument("--occlusion-rate", type=float)
    p.add_argument("--detection-noise", type=float)
    p.add_argument("--miss-rate", type=float)
    p.add_argument("--pan", help="camera pan per frame as 'dx,dy'")
    p.add_argument("--seed", type=int)
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--embed-noise", type=float)
    p.add_argument("--max-speed", type=float)
    p.add_argument("--accel", type=float)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="train the motion model on ground-truth tracklets")
    _add_common(p)
    p.add_argument("--data", action="append", required=True, help="sequence dir (repeatable)")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--log", help="write per-epoch CSV here")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--lambda-l1", type=float)
    p.add_argument("--lambda-ciou", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--d-model", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--d-state", type=int)
    p.add_argument("--d-ff", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--val-fraction", type=float)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("track", help="run the tracker over a sequence")
    _add_common(p)
    p.add_argument("--data", help="simulator-layout sequence directory")
    p.add_argument("--det", help="raw MOT detection file (needs --width/--height)")
    p.add_argument("--embeddings", help="embedding sidecar for --det")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--no-embeddings", action="store_true", help="ignore appearance features")
    p.add_argument("--checkpoint", help="trained motion model; omitted = constant velocity")
    p.add_argument("--out", required=True, help="results file (MOT rows)")
    p.add_argument("--b1", type=float)
    p.add_argument("--b2", type=float)
    p.add_argument("--metric", choices=METRIC_VARIANTS)
    p.add_argument("--lambda-reid", type=float)
    p.add_argument("--lambda-ssim", type=float)
    p.add_argument("--high-conf", type=float)
    p.add_argument("--low-conf", type=float)
    p.add_argument("--gate-threshold", type=float)
    p.add_argument("--hiou-abs", action="store_true")
    p.add_argument("--max-lost", type=int)
    p.add_argument("--min-hits", type=int)
    p.add_argument("--ema-alpha", type=float)
    p.add_argument("--ema-sigma", type=float)
    p.add_argument("--ema-convex", action="store_true")
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("eval", help="score a results file against ground truth")
    p.add_argument("--results", required=True)
    p.add_argument("--data", help="sequence dir containing gt.txt")
    p.add_argument("--gt", help="explicit ground-truth file")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--out", help="write a one-row CSV")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="eval plus CSV and SVG plots")
    p.add_argument("--results", required=True)
    p.add_argument("--data", help="sequence dir containing gt.txt")
    p.add_argument("--gt", help="explicit ground-truth file")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("sweep", help="grid evaluation over association/model settings")
    _add_common(p)
    p.add_argument("--data", action="append", required=True, help="sequence dir (repeatable)")
    p.add_argument("--out", required=True, help="CSV with one row per cell")
    p.add_argument("--b1-grid", help="comma list, e.g. 0.25,0.3,0.35,0.4")
    p.add_argument("--b2-grid")
    p.add_argument("--metric-grid", help=f"comma list from {METRIC_VARIANTS}")
    p.add_argument("--blocks-grid")
    p.add_argument("--window-grid")
    p.add_argument("--checkpoint", help="shared motion model for all cells")
    p.add_argument("--train-data", action="append", help="train per-cell models on these dirs")
    p.add_argument("--train-epochs", type=int)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument(
        "--workers", type=int, help="parallel cells (default: env SSTRACK_WORKERS or 1)"
    )
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("config", help="write the effective config to a file")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataFileError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
