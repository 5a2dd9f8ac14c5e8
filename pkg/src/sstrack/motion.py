"""Sequence motion model: selective state-space scan + attention, pure numpy.

The network maps a window of w normalized boxes (x, y, w, h in [0, 1]) to the
next box. Layout per block: selective SSM scan, then an attention block with
pre/post LayerNorm and residual, then a gated-free FFN with residual. The
prediction head reads the final timestep and squashes through a sigmoid, so
outputs always live strictly inside (0, 1).

Everything runs in float64 with hand-written backward passes; gradients are
exact (verified against central finite differences in the test suite).
Short windows are left-padded and masked: padded steps neither update the
scan state nor serve as attention keys, so their gradient is exactly zero.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erf

__all__ = [
    "ModelConfig",
    "init_params",
    "model_forward",
    "model_backward",
    "predict",
    "predict_batch",
    "selective_scan",
    "make_window",
    "save_checkpoint",
    "load_checkpoint",
    "MotionPredictor",
    "ConstantVelocityPredictor",
]

_NEG_INF = -1e30
_CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    blocks: int = 4
    d_model: int = 64
    d_state: int = 16
    heads: int = 4
    d_ff: int = 256
    window: int = 10

    def validate(self) -> "ModelConfig":
        for name in ("blocks", "d_model", "d_state", "heads", "d_ff", "window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_model % self.heads != 0:
            raise ValueError(
                f"d_model ({self.d_model}) must be divisible by heads ({self.heads})"
            )
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        return self


# ---------------------------------------------------------------------------
# primitives


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    return np.logaddexp(0.0, x)


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _gelu_grad(x):
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def _flat_matmul_t(a, b):
    """sum_{b,t} a[b,t,:,None] * b[b,t,None,:] as one dgemm: (d_a, d_b)."""
    da, db = a.shape[-1], b.shape[-1]
    return a.reshape(-1, da).T @ b.reshape(-1, db)


def _layer_norm_forward(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * g + b
    return out, (xhat, inv, g)


def _layer_norm_backward(dout, cache):
    xhat, inv, g = cache
    dg = (dout * xhat).sum(axis=tuple(range(dout.ndim - 1)))
    db = dout.sum(axis=tuple(range(dout.ndim - 1)))
    dxhat = dout * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def selective_scan(a_bar, contrib, c, mask=None):
    """Run the gated recurrence h_t = a_bar_t * h_{t-1} + contrib_t, y_t = c_t . h_t.

    a_bar, contrib: (B, T, d, S); c: (B, T, S); mask: (B, T) bool or None.
    Masked steps keep the previous state untouched. Returns (y, h_states)
    with y (B, T, d) and h_states (B, T, d, S).
    """
    a_bar = np.asarray(a_bar, dtype=np.float64)
    contrib = np.asarray(contrib, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if not np.isfinite(a_bar).all() or not np.isfinite(contrib).all() or not np.isfinite(c).all():
        raise ValueError("selective_scan: non-finite input")
    Bn, T, d, S = a_bar.shape
    if mask is not None:
        # Fold the gate into the coefficients: a masked step multiplies the
        # state by 1 and adds 0, which holds it bit-for-bit.
        m = np.asarray(mask, dtype=bool)[:, :, None, None]
        a_bar = np.where(m, a_bar, 1.0)
        contrib = np.where(m, contrib, 0.0)
    h = np.zeros((Bn, d, S), dtype=np.float64)
    hs = np.empty((Bn, T, d, S), dtype=np.float64)
    for t in range(T):
        np.multiply(a_bar[:, t], h, out=hs[:, t])
        hs[:, t] += contrib[:, t]
        h = hs[:, t]
    y = np.matmul(hs, c[..., None])[..., 0]
    return y, hs


# ---------------------------------------------------------------------------
# parameters


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: ModelConfig, rng=None) -> dict[str, np.ndarray]:
    """Fresh parameter dict. Linear weights and biases are uniform in
    +-1/sqrt(fan_in); LayerNorm gains 1, biases 0; per-channel decay
    exponents a_log = log(1..d_state)."""
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(0)
    d, S, ff = cfg.d_model, cfg.d_state, cfg.d_ff
    p: dict[str, np.ndarray] = {}
    p["embed.w"] = _uniform(rng, (4, d), 4)
    p["embed.b"] = _uniform(rng, (d,), 4)
    for i in range(cfg.blocks):
        pre = f"block{i}"
        p[f"{pre}.ssm.w_dt"] = _uniform(rng, (d, d), d)
        p[f"{pre}.ssm.b_dt"] = _uniform(rng, (d,), d)
        p[f"{pre}.ssm.w_b"] = _uniform(rng, (d, S), d)
        p[f"{pre}.ssm.w_c"] = _uniform(rng, (d, S), d)
        p[f"{pre}.ssm.a_log"] = np.tile(np.log(np.arange(1, S + 1, dtype=np.float64)), (d, 1))
        p[f"{pre}.attn.ln_in.g"] = np.ones(d)
        p[f"{pre}.attn.ln_in.b"] = np.zeros(d)
        for nm in ("wq", "wk", "wv", "wo"):
            p[f"{pre}.attn.{nm}"] = _uniform(rng, (d, d), d)
        for nm in ("bq", "bk", "bv", "bo"):
            p[f"{pre}.attn.{nm}"] = _uniform(rng, (d,), d)
        p[f"{pre}.attn.ln_out.g"] = np.ones(d)
        p[f"{pre}.attn.ln_out.b"] = np.zeros(d)
        p[f"{pre}.ffn.w1"] = _uniform(rng, (d, ff), d)
        p[f"{pre}.ffn.b1"] = _uniform(rng, (ff,), d)
        p[f"{pre}.ffn.w2"] = _uniform(rng, (ff, d), ff)
        p[f"{pre}.ffn.b2"] = _uniform(rng, (d,), ff)
    p["head.w"] = _uniform(rng, (d, 4), d)
    p["head.b"] = _uniform(rng, (4,), d)
    return p


# ---------------------------------------------------------------------------
# layers


def _ssm_forward(p, pre, x, mask):
    w_dt, b_dt = p[f"{pre}.w_dt"], p[f"{pre}.b_dt"]
    w_b, w_c, a_log = p[f"{pre}.w_b"], p[f"{pre}.w_c"], p[f"{pre}.a_log"]
    dt_pre = x @ w_dt + b_dt                      # (B,T,d)
    dt = _softplus(dt_pre)
    bm = x @ w_b                                  # (B,T,S)
    cm = x @ w_c
    A = -np.exp(a_log)                            # (d,S), strictly negative: decaying state
    a_bar = np.exp(dt[..., None] * A)             # zero-order hold discretization
    contrib = (dt * x)[..., None] * bm[:, :, None, :]
    if mask is not None:
        # Masked steps hold the state: multiply by 1, add 0. a_bar is only
        # needed in its folded form downstream (raw values never get gradient
        # where the mask is off).
        m4 = np.asarray(mask, dtype=bool)[:, :, None, None]
        a_bar = np.where(m4, a_bar, 1.0)
        contrib = np.where(m4, contrib, 0.0)
    y, hs = selective_scan(a_bar, contrib, cm)
    cache = (x, dt_pre, dt, bm, cm, A, a_bar, hs, mask)
    return y, cache


def _ssm_backward(dy, cache, p, pre, grads):
    x, dt_pre, dt, bm, cm, A, a_bar, hs, mask = cache
    w_dt, w_b, w_c = p[f"{pre}.w_dt"], p[f"{pre}.w_b"], p[f"{pre}.w_c"]
    Bn, T, d, S = a_bar.shape

    dcm = np.matmul(dy[:, :, None, :], hs)[:, :, 0, :]
    dhs = dy[..., None] * cm[:, :, None, :]

    da_bar = np.empty_like(a_bar)
    dcontrib = np.empty_like(a_bar)
    da_bar[:, 0] = 0.0
    dh = np.zeros((Bn, d, S), dtype=np.float64)
    for t in range(T - 1, -1, -1):
        dh += dhs[:, t]
        if t > 0:
            np.multiply(dh, hs[:, t - 1], out=da_bar[:, t])
        dcontrib[:, t] = dh
        if t > 0:
            dh *= a_bar[:, t]  # dcontrib holds a copy, in place is safe
    if mask is not None:
        # Held steps saw constants (1, 0); their parameters get no gradient.
        m4 = np.asarray(mask, dtype=bool)[:, :, None, None]
        np.multiply(da_bar, m4, out=da_bar)
        np.multiply(dcontrib, m4, out=dcontrib)

    dtx = dt * x
    tmp = np.matmul(dcontrib, bm[..., None])[..., 0]
    ddt = tmp * x
    dx = tmp * dt
    dbm = np.matmul(dtx[:, :, None, :], dcontrib)[:, :, 0, :]

    dexp = np.multiply(da_bar, a_bar, out=da_bar)  # da_bar is dead past here
    ddt += (dexp * A).sum(axis=-1)
    dA = (dexp * dt[..., None]).sum(axis=(0, 1))
    grads[f"{pre}.a_log"] = dA * A

    ddt_pre = ddt * _sigmoid(dt_pre)
    dx += ddt_pre @ w_dt.T + dbm @ w_b.T + dcm @ w_c.T
    grads[f"{pre}.w_dt"] = _flat_matmul_t(x, ddt_pre)
    grads[f"{pre}.b_dt"] = ddt_pre.sum(axis=(0, 1))
    grads[f"{pre}.w_b"] = _flat_matmul_t(x, dbm)
    grads[f"{pre}.w_c"] = _flat_matmul_t(x, dcm)
    return dx


def _attention_bias(mask, T):
    """(B, 1, T, T) additive bias: 0 where key j <= query i and j is valid."""
    causal = np.tril(np.ones((T, T), dtype=bool))
    if mask is None:
        allowed = causal[None, :, :]
    else:
        allowed = causal[None, :, :] & mask.astype(bool)[:, None, :]
    return np.where(allowed, 0.0, _NEG_INF)[:, None, :, :]


def _mhsa_forward(p, pre, x, mask, heads):
    Bn, T, d = x.shape
    dh = d // heads
    xln, ln_in_cache = _layer_norm_forward(x, p[f"{pre}.ln_in.g"], p[f"{pre}.ln_in.b"])
    q = xln @ p[f"{pre}.wq"] + p[f"{pre}.bq"]
    k = xln @ p[f"{pre}.wk"] + p[f"{pre}.bk"]
    v = xln @ p[f"{pre}.wv"] + p[f"{pre}.bv"]
    qh = np.ascontiguousarray(q.reshape(Bn, T, heads, dh).transpose(0, 2, 1, 3))
    kh = np.ascontiguousarray(k.reshape(Bn, T, heads, dh).transpose(0, 2, 1, 3))
    vh = np.ascontiguousarray(v.reshape(Bn, T, heads, dh).transpose(0, 2, 1, 3))
    scores = qh @ kh.transpose(0, 1, 3, 2) / np.sqrt(dh)
    scores = scores + _attention_bias(mask, T)
    smax = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - smax)
    attn = e / e.sum(axis=-1, keepdims=True)
    ctx = attn @ vh
    ctx_m = ctx.transpose(0, 2, 1, 3).reshape(Bn, T, d)
    proj = ctx_m @ p[f"{pre}.wo"] + p[f"{pre}.bo"]
    z = proj + xln
    out, ln_out_cache = _layer_norm_forward(z, p[f"{pre}.ln_out.g"], p[f"{pre}.ln_out.b"])
    cache = (xln, ln_in_cache, qh, kh, vh, attn, ctx_m, ln_out_cache, heads)
    return out, cache


def _mhsa_backward(dout, cache, p, pre, grads):
    xln, ln_in_cache, qh, kh, vh, attn, ctx_m, ln_out_cache, heads = cache
    Bn, T, d = xln.shape
    dh = d // heads

    dz, dg_out, db_out = _layer_norm_backward(dout, ln_out_cache)
    grads[f"{pre}.ln_out.g"] = dg_out
    grads[f"{pre}.ln_out.b"] = db_out

    dproj = dz
    dxln = dz.copy()  # residual branch
    grads[f"{pre}.wo"] = _flat_matmul_t(ctx_m, dproj)
    grads[f"{pre}.bo"] = dproj.sum(axis=(0, 1))
    dctx_m = dproj @ p[f"{pre}.wo"].T
    dctx = np.ascontiguousarray(dctx_m.reshape(Bn, T, heads, dh).transpose(0, 2, 1, 3))

    dattn = dctx @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = attn * (dattn - (attn * dattn).sum(axis=-1, keepdims=True))
    dscores = dscores / np.sqrt(dh)
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh

    dq = dqh.transpose(0, 2, 1, 3).reshape(Bn, T, d)
    dk = dkh.transpose(0, 2, 1, 3).reshape(Bn, T, d)
    dv = dvh.transpose(0, 2, 1, 3).reshape(Bn, T, d)

    for nm, dmat in (("wq", dq), ("wk", dk), ("wv", dv)):
        grads[f"{pre}.{nm}"] = _flat_matmul_t(xln, dmat)
    grads[f"{pre}.bq"] = dq.sum(axis=(0, 1))
    grads[f"{pre}.bk"] = dk.sum(axis=(0, 1))
    grads[f"{pre}.bv"] = dv.sum(axis=(0, 1))
    dxln += dq @ p[f"{pre}.wq"].T + dk @ p[f"{pre}.wk"].T + dv @ p[f"{pre}.wv"].T

    dx, dg_in, db_in = _layer_norm_backward(dxln, ln_in_cache)
    grads[f"{pre}.ln_in.g"] = dg_in
    grads[f"{pre}.ln_in.b"] = db_in
    return dx


def _ffn_forward(p, pre, x):
    h1 = x @ p[f"{pre}.w1"] + p[f"{pre}.b1"]
    u = erf(h1 / np.sqrt(2.0))  # cached: the backward pass reuses it
    a = 0.5 * h1 * (1.0 + u)
    out = a @ p[f"{pre}.w2"] + p[f"{pre}.b2"] + x
    return out, (x, h1, u, a)


def _ffn_backward(dout, cache, p, pre, grads):
    x, h1, u, a = cache
    grads[f"{pre}.w2"] = _flat_matmul_t(a, dout)
    grads[f"{pre}.b2"] = dout.sum(axis=(0, 1))
    da = dout @ p[f"{pre}.w2"].T
    dh1 = da * (0.5 * (1.0 + u) + h1 * np.exp(-0.5 * h1 * h1) / np.sqrt(2.0 * np.pi))
    grads[f"{pre}.w1"] = _flat_matmul_t(x, dh1)
    grads[f"{pre}.b1"] = dh1.sum(axis=(0, 1))
    dx = dh1 @ p[f"{pre}.w1"].T + dout
    return dx


# ---------------------------------------------------------------------------
# full model


def _check_window_batch(boxes, mask):
    boxes = np.asarray(boxes, dtype=np.float64)
    if boxes.ndim != 3 or boxes.shape[2] != 4:
        raise ValueError(f"expected boxes of shape (B, T, 4), got {boxes.shape}")
    if not np.isfinite(boxes).all():
        raise ValueError("window contains non-finite values")
    Bn, T = boxes.shape[:2]
    if mask is None:
        mask = np.ones((Bn, T), dtype=bool)
    else:
        mask = np.asarray(mask).astype(bool)
        if mask.shape != (Bn, T):
            raise ValueError(f"mask shape {mask.shape} does not match boxes {(Bn, T)}")
    if np.any(~mask[:, 1:] & mask[:, :-1]):
        raise ValueError("mask must be left-padded: valid steps form a suffix")
    if np.any(mask.sum(axis=1) < 2):
        raise ValueError("each window needs at least 2 valid steps")
    return boxes, mask


def model_forward(params, cfg: ModelConfig, boxes, mask=None, want_cache: bool = False):
    """Forward pass. boxes (B, T, 4) normalized, mask (B, T) with valid steps
    True. Returns (pred (B, 4), cache or None)."""
    boxes, mask = _check_window_batch(boxes, mask)
    if mask.all():
        mask = None  # no padding anywhere: skip all gating work
    x = boxes @ params["embed.w"] + params["embed.b"]
    block_caches = []
    for i in range(cfg.blocks):
        y, c_ssm = _ssm_forward(params, f"block{i}.ssm", x, mask)
        a, c_att = _mhsa_forward(params, f"block{i}.attn", y, mask, cfg.heads)
        x, c_ffn = _ffn_forward(params, f"block{i}.ffn", a)
        block_caches.append((c_ssm, c_att, c_ffn))
    last = x[:, -1]
    logits = last @ params["head.w"] + params["head.b"]
    pred = _sigmoid(logits)
    if not want_cache:
        return pred, None
    cache = (boxes, mask, block_caches, last, pred, x.shape)
    return pred, cache


def model_backward(params, cfg: ModelConfig, cache, dpred):
    """Backward pass from dL/dpred. Returns (grads dict, dboxes (B, T, 4))."""
    boxes, mask, block_caches, last, pred, xshape = cache
    grads: dict[str, np.ndarray] = {}
    dlogits = np.asarray(dpred, dtype=np.float64) * pred * (1.0 - pred)
    grads["head.w"] = last.T @ dlogits
    grads["head.b"] = dlogits.sum(axis=0)
    dx = np.zeros(xshape, dtype=np.float64)
    dx[:, -1] = dlogits @ params["head.w"].T
    for i in range(cfg.blocks - 1, -1, -1):
        c_ssm, c_att, c_ffn = block_caches[i]
        dx = _ffn_backward(dx, c_ffn, params, f"block{i}.ffn", grads)
        dx = _mhsa_backward(dx, c_att, params, f"block{i}.attn", grads)
        dx = _ssm_backward(dx, c_ssm, params, f"block{i}.ssm", grads)
    grads["embed.w"] = _flat_matmul_t(boxes, dx)
    grads["embed.b"] = dx.sum(axis=(0, 1))
    dboxes = dx @ params["embed.w"].T
    return grads, dboxes


def predict_batch(params, cfg: ModelConfig, boxes, mask=None) -> np.ndarray:
    pred, _ = model_forward(params, cfg, boxes, mask)
    return pred


def predict(params, cfg: ModelConfig, boxes, mask=None) -> np.ndarray:
    """Single-window convenience wrapper: boxes (T, 4) -> (4,)."""
    boxes = np.asarray(boxes, dtype=np.float64)
    m = None if mask is None else np.asarray(mask)[None, :]
    return predict_batch(params, cfg, boxes[None], m)[0]


def make_window(history, image_size, window: int):
    """Normalize pixel boxes by image size, clip to [0, 1], left-pad to
    ``window`` steps. history is (L, 4) most-recent-last with L >= 1.
    Returns (boxes (window, 4), mask (window,))."""
    hist = np.asarray(history, dtype=np.float64)
    if hist.ndim != 2 or hist.shape[1] != 4:
        raise ValueError(f"history must be (L, 4), got {hist.shape}")
    W, H = image_size
    scale = np.array([W, H, W, H], dtype=np.float64)
    norm = np.clip(hist / scale, 0.0, 1.0)
    if len(norm) >= window:
        return norm[-window:], np.ones(window, dtype=bool)
    pad = window - len(norm)
    boxes = np.zeros((window, 4), dtype=np.float64)
    boxes[pad:] = norm
    mask = np.zeros(window, dtype=bool)
    mask[pad:] = True
    return boxes, mask


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: dict[str, np.ndarray], cfg: ModelConfig, extra: dict | None = None):
    meta = {"format_version": _CHECKPOINT_VERSION, "config": asdict(cfg)}
    if extra:
        meta["extra"] = extra
    arrays = dict(params)
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (params, ModelConfig). Raises ValueError on malformed files."""
    try:
        data = np.load(path)
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read checkpoint {path}: {exc}") from None
    if "__meta__" not in data.files:
        raise ValueError(f"checkpoint {path} is missing metadata")
    meta = json.loads(bytes(data["__meta__"]).decode())
    if meta.get("format_version") != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
    cfg = ModelConfig(**meta["config"]).validate()
    params = {k: data[k].astype(np.float64) for k in data.files if k != "__meta__"}
    expected = set(init_params(cfg).keys())
    if set(params) != expected:
        missing = expected - set(params)
        surplus = set(params) - expected
        raise ValueError(f"checkpoint {path} parameter mismatch: missing={missing} surplus={surplus}")
    return params, cfg


# ---------------------------------------------------------------------------
# pipeline-facing predictors


class MotionPredictor:
    """Wraps trained parameters for in-tracker use: pixel histories in,
    pixel box predictions out, batched over tracklets."""

    def __init__(self, params, cfg: ModelConfig, image_size):
        self.params = params
        self.cfg = cfg
        self.image_size = image_size
        self._scale = np.array(
            [image_size[0], image_size[1], image_size[0], image_size[1]], dtype=np.float64
        )

    def predict_boxes(self, histories) -> np.ndarray:
        out = np.empty((len(histories), 4), dtype=np.float64)
        batch_idx, windows, masks = [], [], []
        for i, hist in enumerate(histories):
            hist = np.asarray(hist, dtype=np.float64)
            if len(hist) < 2:
                out[i] = hist[-1]
                continue
            b, m = make_window(hist, self.image_size, self.cfg.window)
            batch_idx.append(i)
            windows.append(b)
            masks.append(m)
        if batch_idx:
            preds = predict_batch(
                self.params, self.cfg, np.stack(windows), np.stack(masks)
            )
            out[batch_idx] = preds * self._scale
        return out


class ConstantVelocityPredictor:
    """Fallback motion model: extrapolate the last displacement of every box
    coordinate; sizes are floored at zero. One observation means zero
    velocity."""

    def __init__(self, image_size=None):
        self.image_size = image_size

    def predict_boxes(self, histories) -> np.ndarray:
        out = np.empty((len(histories), 4), dtype=np.float64)
        for i, hist in enumerate(histories):
            hist = np.asarray(hist, dtype=np.float64)
            if len(hist) < 2:
                out[i] = hist[-1]
            else:
                pred = hist[-1] + (hist[-1] - hist[-2])
                pred[2] = max(pred[2], 0.0)
                pred[3] = max(pred[3], 0.0)
                out[i] = pred
        return out
