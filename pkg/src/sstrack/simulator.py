"""Synthetic sequence generator for tracker evaluation.

Agents move on a ground plane seen from a broadcast-style camera: boxes lower
in the image are closer and therefore larger, motion is biased horizontal,
and the sprint-and-cut profile changes acceleration abruptly every 10 to 30
frames. Detections are ground truth plus gaussian jitter, with confidence
dropping as jitter grows and when the agent is covered by a closer one.
Occluded detections disappear with a configurable probability, embeddings get
noisier under occlusion and speed. Everything is driven by one seeded
generator with a fixed draw order, so equal seeds give byte-identical output
files.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .appearance import SyntheticProvider
from .mot_io import (
    Detection,
    SequenceData,
    write_embeddings,
    write_mot_file,
    write_seqinfo,
)

__all__ = ["Scenario", "SimOutput", "generate", "write_sim_dir", "MOTION_PROFILES"]

MOTION_PROFILES = ("linear", "curved", "sprint-and-cut")


@dataclass
class Scenario:
    n_agents: int = 10
    image_size: tuple[int, int] = (1280, 720)
    n_frames: int = 300
    motion_profile: str = "sprint-and-cut"
    occlusion_rate: float = 0.0
    detection_noise: float = 0.0  # pixel sigma of box jitter
    miss_rate: float = 0.0
    camera_pan: tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    embed_dim: int = 128
    embed_noise: float = 0.05
    # motion knobs
    max_speed: float = 8.0
    min_speed: float = 1.0
    accel_max: float = 1.2
    cut_interval: tuple[int, int] = (10, 30)
    vertical_motion_scale: float = 0.5
    # agent geometry: height grows linearly from top of image to bottom
    agent_height: tuple[float, float] = (40.0, 90.0)
    aspect: float = 0.45
    # confidence model
    jitter_conf_scale: float = 3.0
    occl_conf_penalty: float = 0.5
    occl_threshold: float = 0.5

    def validate(self) -> "Scenario":
        if self.n_agents < 1:
            raise ValueError(f"n_agents must be >= 1, got {self.n_agents}")
        if self.n_frames < 1:
            raise ValueError(f"n_frames must be >= 1, got {self.n_frames}")
        if self.image_size[0] < 32 or self.image_size[1] < 32:
            raise ValueError(f"image_size too small: {self.image_size}")
        if self.motion_profile not in MOTION_PROFILES:
            raise ValueError(
                f"motion_profile must be one of {MOTION_PROFILES}, got {self.motion_profile!r}"
            )
        for nm in ("occlusion_rate", "miss_rate", "occl_threshold"):
            v = getattr(self, nm)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{nm} must be in [0, 1], got {v}")
        if self.detection_noise < 0 or self.embed_noise < 0:
            raise ValueError("noise levels must be non-negative")
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.max_speed <= 0 or self.min_speed < 0 or self.min_speed > self.max_speed:
            raise ValueError("speeds must satisfy 0 <= min_speed <= max_speed, max_speed > 0")
        if self.cut_interval[0] < 1 or self.cut_interval[1] < self.cut_interval[0]:
            raise ValueError(f"bad cut_interval: {self.cut_interval}")
        if self.agent_height[0] <= 0 or self.agent_height[1] < self.agent_height[0]:
            raise ValueError(f"bad agent_height range: {self.agent_height}")
        if self.agent_height[1] > self.image_size[1]:
            raise ValueError("tallest agent does not fit the image height")
        return self


@dataclass
class SimOutput:
    scenario: Scenario
    ground_truth: dict[int, list[tuple[int, np.ndarray]]]
    detections: dict[int, list[Detection]]
    det_identity: dict[int, list[int]]
    image_size: tuple[int, int]

    def to_sequence_data(self, name: str = "sim") -> SequenceData:
        return SequenceData(
            detections=self.detections,
            image_size=self.image_size,
            ground_truth=self.ground_truth,
            name=name,
            det_identity=self.det_identity,
        )


class _Agent:
    __slots__ = ("cx", "fy", "vx", "vy", "ax", "ay", "omega", "next_cut")

    def __init__(self):
        self.cx = 0.0
        self.fy = 0.0
        self.vx = 0.0
        self.vy = 0.0
        self.ax = 0.0
        self.ay = 0.0
        self.omega = 0.0
        self.next_cut = 0


def _height_at(sc: Scenario, fy: float) -> float:
    lo, hi = sc.agent_height
    frac = min(1.0, max(0.0, fy / sc.image_size[1]))
    return lo + (hi - lo) * frac


def _agent_box(sc: Scenario, agent: _Agent) -> np.ndarray:
    h = _height_at(sc, agent.fy)
    w = sc.aspect * h
    return np.array([agent.cx - 0.5 * w, agent.fy - h, w, h], dtype=np.float64)


def _reflect(agent: _Agent, sc: Scenario):
    """Bounce off image borders so the whole box stays inside."""
    W, H = sc.image_size
    h = _height_at(sc, agent.fy)
    lo_y, hi_y = h, float(H)
    if agent.fy < lo_y:
        agent.fy = lo_y + (lo_y - agent.fy)
        agent.vy = -agent.vy
        agent.ay = -agent.ay
    elif agent.fy > hi_y:
        agent.fy = hi_y - (agent.fy - hi_y)
        agent.vy = -agent.vy
        agent.ay = -agent.ay
    agent.fy = min(max(agent.fy, lo_y), hi_y)

    h = _height_at(sc, agent.fy)
    w = sc.aspect * h
    lo_x, hi_x = 0.5 * w, W - 0.5 * w
    if agent.cx < lo_x:
        agent.cx = lo_x + (lo_x - agent.cx)
        agent.vx = -agent.vx
        agent.ax = -agent.ax
    elif agent.cx > hi_x:
        agent.cx = hi_x - (agent.cx - hi_x)
        agent.vx = -agent.vx
        agent.ax = -agent.ax
    agent.cx = min(max(agent.cx, lo_x), hi_x)


def _coverage(box_a: np.ndarray, box_b: np.ndarray) -> float:
    """Fraction of box_a covered by box_b."""
    iw = min(box_a[0] + box_a[2], box_b[0] + box_b[2]) - max(box_a[0], box_b[0])
    ih = min(box_a[1] + box_a[3], box_b[1] + box_b[3]) - max(box_a[1], box_b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    area = box_a[2] * box_a[3]
    if area <= 0:
        return 0.0
    return (iw * ih) / area


def _spawn_agents(sc: Scenario, rng) -> list[_Agent]:
    agents: list[_Agent] = []
    boxes: list[np.ndarray] = []
    W, H = sc.image_size
    for _ in range(sc.n_agents):
        placed = False
        for _attempt in range(2000):
            agent = _Agent()
            agent.fy = rng.uniform(sc.agent_height[1], H)
            h = _height_at(sc, agent.fy)
            w = sc.aspect * h
            agent.cx = rng.uniform(0.5 * w, W - 0.5 * w)
            box = _agent_box(sc, agent)
            if all(_coverage(box, b) == 0.0 and _coverage(b, box) == 0.0 for b in boxes):
                placed = True
                break
        if not placed:
            raise ValueError(
                f"cannot place {sc.n_agents} agents without overlap in {sc.image_size}"
            )
        speed = rng.uniform(sc.min_speed, 0.5 * sc.max_speed)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        agent.vx = speed * math.cos(angle)
        agent.vy = speed * math.sin(angle) * sc.vertical_motion_scale
        if sc.motion_profile == "curved":
            agent.omega = rng.uniform(-0.05, 0.05)
        elif sc.motion_profile == "sprint-and-cut":
            _new_cut(agent, sc, rng, frame=1)
        agents.append(agent)
        boxes.append(box)
    return agents


def _new_cut(agent: _Agent, sc: Scenario, rng, frame: int):
    mag = rng.uniform(0.3 * sc.accel_max, sc.accel_max)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    agent.ax = mag * math.cos(angle)
    agent.ay = mag * math.sin(angle) * sc.vertical_motion_scale
    agent.next_cut = frame + int(rng.integers(sc.cut_interval[0], sc.cut_interval[1], endpoint=True))


def _advance(agent: _Agent, sc: Scenario, rng, frame: int):
    if sc.motion_profile == "curved":
        c, s = math.cos(agent.omega), math.sin(agent.omega)
        vx = c * agent.vx - s * agent.vy
        vy = s * agent.vx + c * agent.vy
        agent.vx, agent.vy = vx, vy
    elif sc.motion_profile == "sprint-and-cut":
        if frame >= agent.next_cut:
            _new_cut(agent, sc, rng, frame)
        agent.vx += agent.ax
        agent.vy += agent.ay
        speed = math.hypot(agent.vx, agent.vy)
        if speed > sc.max_speed:
            scale = sc.max_speed / speed
            agent.vx *= scale
            agent.vy *= scale
    agent.cx += agent.vx + sc.camera_pan[0]
    agent.fy += agent.vy + sc.camera_pan[1]
    _reflect(agent, sc)


def generate(sc: Scenario) -> SimOutput:
    """Run the scenario. Ground truth covers every agent in every frame;
    detections may be missing (occlusion drops, random misses) or jittered."""
    sc.validate()
    rng = np.random.default_rng(sc.seed)
    provider = SyntheticProvider(dim=sc.embed_dim, seed=sc.seed + 1_000_003)
    agents = _spawn_agents(sc, rng)

    gt: dict[int, list[tuple[int, np.ndarray]]] = {}
    dets: dict[int, list[Detection]] = {}
    identity: dict[int, list[int]] = {}
    sigma = sc.detection_noise

    for frame in range(1, sc.n_frames + 1):
        if frame > 1:
            for agent in agents:
                _advance(agent, sc, rng, frame)
        boxes = [_agent_box(sc, a) for a in agents]
        gt[frame] = [(i + 1, boxes[i].copy()) for i in range(sc.n_agents)]

        # occlusion: how much of each agent is covered by someone closer
        # (closer = larger foot y, drawn lower in the image)
        occl = np.zeros(sc.n_agents)
        for i in range(sc.n_agents):
            for j in range(sc.n_agents):
                if i == j or agents[j].fy <= agents[i].fy:
                    continue
                occl[i] = max(occl[i], _coverage(boxes[i], boxes[j]))

        frame_dets: list[Detection] = []
        frame_ids: list[int] = []
        for i, agent in enumerate(agents):
            u_occ = rng.random()
            u_miss = rng.random()
            eps = rng.standard_normal(4)
            emb_noise = rng.standard_normal(sc.embed_dim)

            dropped = occl[i] >= sc.occl_threshold and u_occ < sc.occlusion_rate
            missed = u_miss < sc.miss_rate
            if dropped or missed:
                continue

            jitter = eps * np.array([sigma, sigma, 0.5 * sigma, 0.5 * sigma])
            box = boxes[i] + jitter
            box[2] = max(box[2], 0.5)
            box[3] = max(box[3], 0.5)

            jit_term = 0.0
            if sigma > 0:
                jit_term = float(np.linalg.norm(jitter)) / (sc.jitter_conf_scale * sigma)
            conf = 1.0 - jit_term - sc.occl_conf_penalty * occl[i]
            conf = min(1.0, max(0.0, conf))

            speed = math.hypot(agent.vx, agent.vy)
            noise_sigma = sc.embed_noise * (1.0 + 2.0 * occl[i] + speed / sc.max_speed)
            emb = provider.base(i + 1) + noise_sigma * emb_noise

            frame_dets.append(Detection(box=box, score=conf, embedding=emb))
            frame_ids.append(i + 1)
        dets[frame] = frame_dets
        identity[frame] = frame_ids

    return SimOutput(
        scenario=sc,
        ground_truth=gt,
        detections=dets,
        det_identity=identity,
        image_size=sc.image_size,
    )


def write_sim_dir(out: SimOutput, path, name: str = "sim") -> None:
    """Write gt.txt, det.txt, embeddings.csv, det_identity.json, seqinfo.ini."""
    os.makedirs(path, exist_ok=True)
    gt_rows = []
    for frame, items in out.ground_truth.items():
        for tid, box in items:
            gt_rows.append((frame, tid, box[0], box[1], box[2], box[3], 1.0))
    write_mot_file(os.path.join(path, "gt.txt"), gt_rows)

    det_rows = []
    emb: dict[int, list[np.ndarray | None]] = {}
    for frame, items in out.detections.items():
        emb[frame] = []
        for idx, det in enumerate(items):
            det_rows.append((frame, -1, det.box[0], det.box[1], det.box[2], det.box[3], det.score))
            emb[frame].append(det.embedding)
    write_mot_file(os.path.join(path, "det.txt"), det_rows)
    write_embeddings(os.path.join(path, "embeddings.csv"), emb)

    with open(os.path.join(path, "det_identity.json"), "w") as fh:
        json.dump({str(k): v for k, v in out.det_identity.items()}, fh)
    write_seqinfo(os.path.join(path, "seqinfo.ini"), name, out.image_size, out.scenario.n_frames)
