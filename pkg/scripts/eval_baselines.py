"""Quick look at how cheap predictors fare on a candidate training scenario.

Prints held-out ADE for constant velocity, last-box, and short moving-average
predictors so we can judge how much headroom a learned model has before
committing to a long training run.
"""

import numpy as np

from sstrack.simulator import Scenario, generate
from sstrack.trainer import (
    TrainConfig,
    ade_of_predictions,
    build_eval_windows,
    constant_velocity_eval,
    tracklets_from_detections,
)


def main():
    samples = []
    for seed in range(30):
        sc = Scenario(
            n_agents=10,
            n_frames=200,
            motion_profile="sprint-and-cut",
            accel_max=1.5,
            max_speed=8.0,
            detection_noise=5.0,
            agent_height=(150.0, 260.0),
            seed=seed,
        )
        out = generate(sc)
        samples.extend(
            tracklets_from_detections(
                out.detections, out.det_identity, sc.image_size, chunk_len=12
            )
        )
    samples = samples[:5000]
    print(f"samples: {len(samples)}")

    cfg = TrainConfig()
    n_val = max(1, int(len(samples) * cfg.val_fraction))
    val = samples[-n_val:]
    eval_set = build_eval_windows(val, cfg.window, limit=cfg.eval_limit)
    print(f"eval windows: {len(eval_set['windows'])}")

    def ade_px(fn):
        preds = [
            fn(np.asarray(h, dtype=np.float64)) / sc
            for h, sc in zip(eval_set["histories"], eval_set["scales"])
        ]
        return ade_of_predictions(np.stack(preds), eval_set)

    def last_box(hist):
        return hist[-1]

    def smooth(k):
        def fn(hist):
            return hist[-k:].mean(axis=0)
        return fn

    def smooth_cv(k):
        # average the last k boxes, then add the average velocity times the
        # lag between window center and the prediction point
        def fn(hist):
            if len(hist) < 2:
                return hist[-1]
            tail = hist[-k:]
            center = tail.mean(axis=0)
            v = (hist[-1] - hist[0]) / (len(hist) - 1)
            out = center.copy()
            out[:2] += v[:2] * ((len(tail) + 1) / 2.0)
            return out
        return fn

    print(f"cv     ade {constant_velocity_eval(eval_set):8.3f}")
    for name, fn in [
        ("last", last_box),
        ("sm2", smooth(2)),
        ("sm3", smooth(3)),
        ("sm4", smooth(4)),
        ("smcv3", smooth_cv(3)),
        ("smcv4", smooth_cv(4)),
    ]:
        print(f"{name:6s} ade {ade_px(fn):8.3f}")
    print(f"bar (0.9*cv): {0.9 * constant_velocity_eval(eval_set):.3f}")


if __name__ == "__main__":
    main()
