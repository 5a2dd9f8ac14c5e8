"""Training for the motion model: losses, augmentation, AdamW, the loop.

The regression target is the next box of a tracklet given a window of its
past boxes, both in normalized image coordinates. The loss is a weighted sum
of a smooth L1 term (summed over the four coordinates) and a CIoU term;
gradients flow through the analytic backward pass of the model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import ciou_grad, ciou_loss
from .motion import ModelConfig, init_params, model_backward, model_forward, make_window

__all__ = [
    "TrainConfig",
    "TrackletSample",
    "smooth_l1",
    "smooth_l1_grad",
    "total_loss",
    "total_loss_grad",
    "augment",
    "AdamW",
    "loss_and_grads",
    "tracklets_from_ground_truth",
    "tracklets_from_detections",
    "build_eval_windows",
    "clip_grads_",
    "predict_eval_windows",
    "ade_of_predictions",
    "constant_velocity_eval",
    "train",
    "write_train_log",
]


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-8
    lambda_l1: float = 50.0
    lambda_ciou: float = 1.0
    window: int = 10
    seed: int = 0
    val_fraction: float = 0.1
    temporal_prob: float = 1.0
    spatial_prob: float = 0.5
    scale_low: float = 0.9
    scale_high: float = 1.1
    translate_frac: float = 0.02
    noise_sigma_frac: float = 0.005
    grad_clip: float = 5.0  # global L2 norm; 0 disables
    swa_start: int = 0  # average params from this epoch on; 0 disables
    eval_every: int = 1
    eval_limit: int = 4096

    def validate(self) -> "TrainConfig":
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.eval_every < 1 or self.eval_limit < 1:
            raise ValueError("eval_every and eval_limit must be >= 1")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("lr must be positive, weight_decay non-negative")
        for nm in ("beta1", "beta2"):
            b = getattr(self, nm)
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{nm} must be in [0, 1), got {b}")
        if self.lambda_l1 < 0 or self.lambda_ciou < 0:
            raise ValueError("loss weights must be non-negative")
        if self.grad_clip < 0:
            raise ValueError(f"grad_clip must be non-negative, got {self.grad_clip}")
        if not 0 <= self.swa_start < self.epochs:
            raise ValueError(f"swa_start must be in [0, epochs), got {self.swa_start}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        for nm in ("temporal_prob", "spatial_prob"):
            v = getattr(self, nm)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{nm} must be in [0, 1], got {v}")
        if self.scale_low <= 0 or self.scale_high < self.scale_low:
            raise ValueError("scale range must satisfy 0 < low <= high")
        return self


@dataclass
class TrackletSample:
    """A contiguous run of one identity's ground-truth boxes, in pixels."""

    boxes: np.ndarray  # (L, 4)
    image_size: tuple[int, int]

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64)
        if self.boxes.ndim != 2 or self.boxes.shape[1] != 4:
            raise ValueError(f"boxes must be (L, 4), got {self.boxes.shape}")
        if not np.isfinite(self.boxes).all():
            raise ValueError("tracklet boxes contain non-finite values")


# ---------------------------------------------------------------------------
# losses


def smooth_l1(pred, gt):
    """Huber-style loss summed over the 4 coordinates: 0.5 e^2 for |e| < 1,
    |e| - 0.5 beyond. Scalar for single boxes, (B,) for batches."""
    p = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    g = np.atleast_2d(np.asarray(gt, dtype=np.float64))
    e = np.abs(p - g)
    per = np.where(e < 1.0, 0.5 * e * e, e - 0.5)
    out = per.sum(axis=1)
    if np.ndim(pred) == 1:
        return float(out[0])
    return out


def smooth_l1_grad(pred, gt):
    p = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    g = np.atleast_2d(np.asarray(gt, dtype=np.float64))
    e = p - g
    out = np.where(np.abs(e) < 1.0, e, np.sign(e))
    if np.ndim(pred) == 1:
        return out[0]
    return out


def total_loss(pred, gt, lambda_l1: float, lambda_ciou: float):
    return lambda_l1 * smooth_l1(pred, gt) + lambda_ciou * ciou_loss(pred, gt)


def total_loss_grad(pred, gt, lambda_l1: float, lambda_ciou: float):
    return lambda_l1 * smooth_l1_grad(pred, gt) + lambda_ciou * ciou_grad(pred, gt)


def loss_and_grads(params, model_cfg: ModelConfig, boxes, mask, targets, lambda_l1, lambda_ciou):
    """Batch mean loss and parameter gradients. Returns (loss, l1_mean, grads)."""
    pred, cache = model_forward(params, model_cfg, boxes, mask, want_cache=True)
    targets = np.asarray(targets, dtype=np.float64)
    l1 = smooth_l1(pred, targets)
    per = lambda_l1 * l1 + lambda_ciou * ciou_loss(pred, targets)
    loss = float(per.mean())
    dpred = total_loss_grad(pred, targets, lambda_l1, lambda_ciou) / pred.shape[0]
    grads, _ = model_backward(params, model_cfg, cache, dpred)
    return loss, float(l1.mean()), grads


# ---------------------------------------------------------------------------
# data


def tracklets_from_ground_truth(
    gt, image_size, min_len: int = 3, chunk_len: int | None = None
) -> list[TrackletSample]:
    """Slice per-identity ground truth into contiguous runs of length >= min_len.

    gt: dict frame -> list of (id, box). Runs break at frame gaps. With
    chunk_len, runs are further cut into consecutive pieces of that length
    (a shorter tail is kept when it still reaches min_len).
    """
    if chunk_len is not None and chunk_len < min_len:
        raise ValueError(f"chunk_len ({chunk_len}) must be >= min_len ({min_len})")
    by_id: dict[int, list[tuple[int, np.ndarray]]] = {}
    for frame in sorted(gt):
        for tid, box in gt[frame]:
            by_id.setdefault(tid, []).append((frame, np.asarray(box, dtype=np.float64)))
    samples = []

    def emit(run):
        if len(run) < min_len:
            return
        arr = np.stack(run)
        if chunk_len is None:
            samples.append(TrackletSample(arr, image_size))
            return
        for off in range(0, len(arr), chunk_len):
            piece = arr[off : off + chunk_len]
            if len(piece) >= min_len:
                samples.append(TrackletSample(piece, image_size))

    for tid, items in by_id.items():
        run: list[np.ndarray] = []
        prev_frame = None
        for frame, box in items:
            if prev_frame is not None and frame != prev_frame + 1:
                emit(run)
                run = []
            run.append(box)
            prev_frame = frame
        emit(run)
    return samples


def tracklets_from_detections(
    detections, det_identity, image_size, min_len: int = 3, chunk_len: int | None = None
) -> list[TrackletSample]:
    """Like tracklets_from_ground_truth, but over detector output: the boxes
    carry measurement jitter and identities come from the per-detection id
    lists. Frames where an identity went undetected break its run."""
    obs: dict[int, list[tuple[int, np.ndarray]]] = {}
    for frame, dets in detections.items():
        ids = det_identity[frame]
        if len(ids) != len(dets):
            raise ValueError(f"frame {frame}: {len(dets)} detections but {len(ids)} identities")
        obs[frame] = [(tid, det.box) for tid, det in zip(ids, dets)]
    return tracklets_from_ground_truth(obs, image_size, min_len=min_len, chunk_len=chunk_len)


def _scale_about_center(boxes, s, cx, cy):
    """Scale boxes (centers and sizes) about the image center. boxes (..., 4)."""
    bcx = boxes[..., 0] + 0.5 * boxes[..., 2]
    bcy = boxes[..., 1] + 0.5 * boxes[..., 3]
    new_w = boxes[..., 2] * s
    new_h = boxes[..., 3] * s
    new_cx = cx + s * (bcx - cx)
    new_cy = cy + s * (bcy - cy)
    out = np.empty_like(boxes)
    out[..., 0] = new_cx - 0.5 * new_w
    out[..., 1] = new_cy - 0.5 * new_h
    out[..., 2] = new_w
    out[..., 3] = new_h
    return out


def augment(sample: TrackletSample, cfg: TrainConfig, rng):
    """Draw one training example from a tracklet.

    Temporal crop: with probability temporal_prob a random sub-window of
    random length in [2, min(window, L-1)]; otherwise the deterministic
    suffix window. Spatial: up to two of {scale, translate, noise}, each
    firing with probability spatial_prob; scale and translate hit the window
    and the target alike, coordinate noise hits the window only. With all
    probabilities zero the example is fully deterministic.

    Returns (window (w, 4), mask (w,), target (4,)) in normalized coordinates.
    """
    boxes = sample.boxes
    L = len(boxes)
    if L < 3:
        raise ValueError(f"tracklet too short to train on: {L} boxes")
    W, H = sample.image_size
    w = cfg.window

    if rng.random() < cfg.temporal_prob:
        length = int(rng.integers(2, min(w, L - 1), endpoint=True))
        start = int(rng.integers(0, L - 1 - length, endpoint=True))
    else:
        length = min(w, L - 1)
        start = L - 1 - length
    win = boxes[start : start + length].copy()
    tgt = boxes[start + length].copy()

    apply = rng.random(3) < cfg.spatial_prob
    if apply.all():
        apply[int(rng.integers(3))] = False  # never all three at once
    if apply[0]:
        s = rng.uniform(cfg.scale_low, cfg.scale_high)
        win = _scale_about_center(win, s, 0.5 * W, 0.5 * H)
        tgt = _scale_about_center(tgt, s, 0.5 * W, 0.5 * H)
    if apply[1]:
        dx = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * W
        dy = rng.uniform(-cfg.translate_frac, cfg.translate_frac) * H
        win[:, 0] += dx
        win[:, 1] += dy
        tgt[0] += dx
        tgt[1] += dy
    if apply[2]:
        sig = cfg.noise_sigma_frac * np.array([W, H, W, H])
        win += rng.normal(0.0, 1.0, size=win.shape) * sig
    win[:, 2:] = np.clip(win[:, 2:], 0.0, None)
    tgt[2:] = np.clip(tgt[2:], 1e-6, None)  # ciou needs positive gt area

    wb, mask = make_window(win, sample.image_size, w)
    scale_v = np.array([W, H, W, H], dtype=np.float64)
    tgt_n = np.clip(tgt / scale_v, 0.0, 1.0)
    tgt_n[2:] = np.maximum(tgt_n[2:], 1e-9)
    return wb, mask, tgt_n


def build_eval_windows(samples, window: int, stride: int = 2, limit: int | None = 4096):
    """Deterministic (window, mask, target, history) tuples for evaluation.

    Walks each tracklet with the given stride, always including the final
    prediction point. Histories are kept in pixels for the constant-velocity
    baseline; windows/targets are normalized.
    """
    wins, masks, tgts, hists, scales = [], [], [], [], []
    for s in samples:
        L = len(s.boxes)
        if L < 3:
            continue
        ends = list(range(2, L, max(1, stride)))
        if (L - 1) not in ends:
            ends.append(L - 1)
        for end in ends:
            hist = s.boxes[max(0, end - window) : end]
            wb, m = make_window(hist, s.image_size, window)
            W, H = s.image_size
            sc = np.array([W, H, W, H], dtype=np.float64)
            wins.append(wb)
            masks.append(m)
            tgts.append(s.boxes[end] / sc)
            hists.append(hist)
            scales.append(sc)
    if limit is not None and len(wins) > limit:
        keep = np.linspace(0, len(wins) - 1, limit).astype(int)
        wins = [wins[i] for i in keep]
        masks = [masks[i] for i in keep]
        tgts = [tgts[i] for i in keep]
        hists = [hists[i] for i in keep]
        scales = [scales[i] for i in keep]
    if not wins:
        return None
    return {
        "windows": np.stack(wins),
        "masks": np.stack(masks),
        "targets": np.stack(tgts),
        "histories": hists,
        "scales": np.stack(scales),
    }


def predict_eval_windows(params, model_cfg: ModelConfig, eval_set, chunk: int = 512):
    """Forward the eval windows in chunks; one huge batch would hold multiple
    (B, T, d, S) scan tensors at once."""
    wins, masks = eval_set["windows"], eval_set["masks"]
    preds = [
        model_forward(params, model_cfg, wins[i : i + chunk], masks[i : i + chunk])[0]
        for i in range(0, len(wins), chunk)
    ]
    return np.concatenate(preds, axis=0)


def ade_of_predictions(pred_norm, eval_set) -> float:
    """Mean center distance in pixels between predictions and targets."""
    sc = eval_set["scales"]
    pred_px = pred_norm * sc
    tgt_px = eval_set["targets"] * sc
    pc = pred_px[:, :2] + 0.5 * pred_px[:, 2:]
    tc = tgt_px[:, :2] + 0.5 * tgt_px[:, 2:]
    return float(np.mean(np.linalg.norm(pc - tc, axis=1)))


def constant_velocity_eval(eval_set) -> float:
    """ADE of the constant-velocity extrapolation on the same eval windows."""
    preds = []
    for hist, sc in zip(eval_set["histories"], eval_set["scales"]):
        pred = hist[-1] + (hist[-1] - hist[-2])
        pred[2:] = np.clip(pred[2:], 0.0, None)
        preds.append(pred / sc)
    return ade_of_predictions(np.stack(preds), eval_set)


# ---------------------------------------------------------------------------
# optimizer


def clip_grads_(grads: dict, max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is at most
    max_norm. Returns the pre-clip norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class AdamW:
    """Adam with decoupled weight decay: every tensor first shrinks by
    (1 - lr * wd), then takes the bias-corrected Adam step."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.98, eps=1e-8, weight_decay=0.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        decay = 1.0 - self.lr * self.weight_decay
        for k, p in params.items():
            g = grads[k]
            p *= decay
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# loop


def train(samples, cfg: TrainConfig, model_cfg: ModelConfig | None = None, callback=None):
    """Train on tracklet samples. Returns (params, history).

    history is one dict per epoch: epoch, loss (weighted batch mean), l1
    (unweighted smooth L1 mean), val_ade and cv_ade in pixels (nan when no
    validation split exists). Divergence (non-finite loss) raises RuntimeError.

    With swa_start > 0 the returned params are the uniform average of the
    per-epoch snapshots from that epoch on; a constant learning rate leaves
    the optimizer walking around the loss floor, and averaging the walk cuts
    the variance without touching the optimization itself. A final history
    row (epoch == cfg.epochs) scores the averaged model.
    """
    cfg.validate()
    if model_cfg is None:
        model_cfg = ModelConfig(window=cfg.window)
    model_cfg.validate()
    usable = [s for s in samples if len(s.boxes) >= 3]
    if not usable:
        raise ValueError("no tracklet has the minimum 3 boxes needed for training")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(usable))
    n_val = int(round(cfg.val_fraction * len(usable)))
    val = [usable[i] for i in order[:n_val]]
    tr = [usable[i] for i in order[n_val:]]
    if not tr:
        tr, val = val, []

    eval_set = build_eval_windows(val, model_cfg.window, limit=cfg.eval_limit) if val else None
    cv_ade = constant_velocity_eval(eval_set) if eval_set else float("nan")

    params = init_params(model_cfg, rng)
    opt = AdamW(
        params,
        lr=cfg.lr,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.adam_eps,
        weight_decay=cfg.weight_decay,
    )

    history = []
    swa_sum, swa_n = None, 0
    for epoch in range(cfg.epochs):
        idx = rng.permutation(len(tr))
        losses, l1s = [], []
        for off in range(0, len(idx), cfg.batch_size):
            chunk = idx[off : off + cfg.batch_size]
            wins, masks, tgts = [], [], []
            for i in chunk:
                wb, m, tg = augment(tr[i], cfg, rng)
                wins.append(wb)
                masks.append(m)
                tgts.append(tg)
            try:
                loss, l1, grads = loss_and_grads(
                    params,
                    model_cfg,
                    np.stack(wins),
                    np.stack(masks),
                    np.stack(tgts),
                    cfg.lambda_l1,
                    cfg.lambda_ciou,
                )
            except ValueError as exc:
                # inputs were validated up front, so a non-finite value here
                # means the parameters blew up
                raise RuntimeError(
                    f"training diverged at epoch {epoch} step {off // cfg.batch_size}: {exc}"
                ) from None
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch} step {off // cfg.batch_size}"
                )
            if cfg.grad_clip > 0:
                clip_grads_(grads, cfg.grad_clip)
            opt.step(params, grads)
            losses.append(loss)
            l1s.append(l1)

        if cfg.swa_start and epoch >= cfg.swa_start:
            if swa_sum is None:
                swa_sum = {k: v.copy() for k, v in params.items()}
            else:
                for k, v in params.items():
                    swa_sum[k] += v
            swa_n += 1

        val_ade = float("nan")
        due = (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1
        if eval_set is not None and due:
            pred = predict_eval_windows(params, model_cfg, eval_set)
            val_ade = ade_of_predictions(pred, eval_set)
        row = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "l1": float(np.mean(l1s)),
            "val_ade": val_ade,
            "cv_ade": cv_ade,
        }
        history.append(row)
        if callback is not None:
            callback(row)

    if swa_n:
        params = {k: v / swa_n for k, v in swa_sum.items()}
        val_ade = float("nan")
        if eval_set is not None:
            pred = predict_eval_windows(params, model_cfg, eval_set)
            val_ade = ade_of_predictions(pred, eval_set)
        row = {
            "epoch": cfg.epochs,
            "loss": float("nan"),
            "l1": float("nan"),
            "val_ade": val_ade,
            "cv_ade": cv_ade,
        }
        history.append(row)
        if callback is not None:
            callback(row)
    return params, history


def write_train_log(path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "loss", "l1", "val_ade", "cv_ade"])
        writer.writeheader()
        for row in history:
            writer.writerow(row)
