"""Buffer-grid sweep on the occlusion-heavy scenario.

Evaluates every (b1, b2) cell of the buffer grid with the constant-velocity
tracker and checks that unbuffered association (b = 0) is strictly dominated
by the best buffered cell on HOTA. Requested b2 values above b1 are clamped;
the printout carries both so the grid stays complete.
"""

import tempfile
import time

from sstrack.cli import run_sweep
from sstrack.config import RunConfig
from sstrack.simulator import Scenario, generate, write_sim_dir

t0 = time.time()
sc = Scenario(
    n_agents=20,
    n_frames=600,
    motion_profile="sprint-and-cut",
    occlusion_rate=0.35,
    detection_noise=3.0,
    miss_rate=0.05,
    max_speed=8.0,
    accel_max=2.0,
    agent_height=(30.0, 130.0),
    vertical_motion_scale=0.2,
    seed=0,
)
tmp = tempfile.mkdtemp()
write_sim_dir(generate(sc), tmp)
print(f"sim written [{time.time() - t0:.0f}s]")

rc = RunConfig()
rc.association.metric = "eiou"
rows = run_sweep(
    rc,
    [tmp],
    b1_grid=[0.0, 0.25, 0.3, 0.35, 0.4],
    b2_grid=[0.25, 0.3, 0.35, 0.4, 0.45],
    metric_grid=["eiou"],
)
print(f"{len(rows)} cells [{time.time() - t0:.0f}s]")
for r in rows:
    print(f"b1={r['b1']:.2f} b2_req={r['b2_requested']:.2f} b2={r['b2']:.2f} "
          f"hota={r['hota']:.4f} idf1={r['idf1']:.4f} mota={r['mota']:.4f}")

zero = max(r["hota"] for r in rows if r["b1"] == 0.0)
buffered = max(r["hota"] for r in rows if r["b1"] > 0.0)
print(f"best b=0 hota {zero:.4f} vs best buffered {buffered:.4f} "
      f"-> {'DOMINATED' if buffered > zero else 'NOT dominated'}")
