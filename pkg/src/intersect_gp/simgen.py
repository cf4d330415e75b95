"""Synthetic intersection traffic, stand-in for a camera pipeline.

One source lane feeds a four-way intersection; each vehicle turns right,
turns left, or continues straight along a smooth centerline (straight run
into a constant-curvature arc into a straight exit). Detections emulate an
object-recognition feed: nominally 20 Hz timestamps with jitter, i.i.d.
position noise from the orientation-dependent vehicle-center estimate, and
randomly dropped frames (optionally in bursts, as when a feed freezes).

Right-hand traffic, northbound source lane. Coordinates are reported in a
frame whose origin sits on the source-lane centerline at the start point,
which keeps trajectory starts near (0, 0): the reconstruction GP has a
zero prior mean and is pinned to it at t = 0, so the data frame must agree
with that prior. Cluster indices are canonical: 0 = right turn,
1 = left turn, 2 = straight.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .trajectory_data import RawTrajectory

__all__ = ["GeneratorConfig", "generate", "write_dataset"]


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for the synthetic dataset.

    ``mix`` gives per-cluster probabilities in canonical order
    (right, left, straight). Geometry defaults: 3.5 m lanes, 6 m approach
    before the intersection box, 6 m right / 9 m left turn radii.
    """

    n_trajectories: int
    horizon: float = 3.0
    rate: float = 20.0
    mix: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    noise_std: float = 0.15
    drop_prob: float = 0.05
    jitter_std: float = 0.005
    speed_range: tuple[float, float] = (8.0, 12.0)
    lane_offset_std: float = 0.25
    seed: int = 0
    lane_width: float = 3.5
    approach_length: float = 6.0
    right_turn_radius: float = 6.0
    left_turn_radius: float = 9.0
    burst_drops: bool = False
    burst_mean_length: float = 3.0

    def __post_init__(self):
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be positive")
        mix = np.asarray(self.mix, dtype=float)
        if mix.size != 3 or np.any(mix < 0) or np.any(mix > 1) or abs(mix.sum() - 1) > 1e-9:
            raise ValueError("mix must be 3 probabilities summing to 1")
        if self.horizon <= 0 or self.rate <= 0 or self.horizon * self.rate < 5:
            raise ValueError("horizon * rate must allow at least 5 frames")
        if not 0 <= self.drop_prob < 1:
            raise ValueError("drop_prob must be in [0, 1)")
        if self.noise_std < 0 or self.jitter_std < 0 or self.lane_offset_std < 0:
            raise ValueError("noise/jitter/offset spreads must be non-negative")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ValueError("speed_range must be a positive interval")
        if self.lane_width <= 0 or self.approach_length <= 0:
            raise ValueError("lane_width and approach_length must be positive")
        # straight run from the start point to each arc's tangent point
        entry_right = self.approach_length + self.lane_width / 2 - self.right_turn_radius
        entry_left = self.approach_length + 1.5 * self.lane_width - self.left_turn_radius
        for radius, entry in (
            (self.right_turn_radius, entry_right),
            (self.left_turn_radius, entry_left),
        ):
            if radius <= self.lane_width / 2:
                raise ValueError("turn radii must exceed half a lane width")
            if entry <= 0:
                raise ValueError("turn radius too large for the approach length")

    @property
    def start_y(self) -> float:
        return -(self.lane_width + self.approach_length)

    @property
    def lane_x(self) -> float:
        return self.lane_width / 2


def _positions(cfg: GeneratorConfig, cluster: int, lateral: float, s: np.ndarray) -> np.ndarray:
    """Path position at arc lengths ``s`` for one vehicle.

    ``lateral`` shifts the whole path to the vehicle's right: +x on the
    approach, a radius change inside an arc.
    """
    x0 = cfg.lane_x + lateral
    pts = np.empty((s.size, 2))

    if cluster == 2:  # straight through
        pts[:, 0] = x0
        pts[:, 1] = cfg.start_y + s
        return pts

    if cluster == 0:  # right turn, clockwise quarter arc
        radius = cfg.right_turn_radius - lateral
        entry_y = -cfg.lane_width / 2 - cfg.right_turn_radius
        center = np.array([cfg.lane_x + cfg.right_turn_radius, entry_y])
        sweep_sign = -1.0
        start_angle = np.pi
    else:  # left turn, counterclockwise quarter arc
        radius = cfg.left_turn_radius + lateral
        entry_y = cfg.lane_width / 2 - cfg.left_turn_radius
        center = np.array([cfg.lane_x - cfg.left_turn_radius, entry_y])
        sweep_sign = 1.0
        start_angle = 0.0

    s_entry = entry_y - cfg.start_y
    arc_len = radius * np.pi / 2

    approach = s <= s_entry
    pts[approach, 0] = x0
    pts[approach, 1] = cfg.start_y + s[approach]

    on_arc = (~approach) & (s <= s_entry + arc_len)
    phi = start_angle + sweep_sign * (s[on_arc] - s_entry) / radius
    pts[on_arc, 0] = center[0] + radius * np.cos(phi)
    pts[on_arc, 1] = center[1] + radius * np.sin(phi)

    beyond = s > s_entry + arc_len
    overshoot = s[beyond] - s_entry - arc_len
    exit_y = entry_y + radius
    if cluster == 0:
        pts[beyond, 0] = center[0] + overshoot
    else:
        pts[beyond, 0] = center[0] - overshoot
    pts[beyond, 1] = exit_y
    return pts


def _to_output_frame(cfg: GeneratorConfig, pts: np.ndarray) -> np.ndarray:
    """Shift to the reporting frame: origin at the source-lane start point."""
    return pts - np.array([cfg.lane_x, cfg.start_y])


def _sample_times(cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    n_frames = int(round(cfg.horizon * cfg.rate)) + 1
    t = np.arange(n_frames) / cfg.rate
    if cfg.jitter_std > 0:
        t = np.sort(np.maximum(t + rng.normal(0.0, cfg.jitter_std, n_frames), 0.0))
        t = t[np.concatenate([[True], np.diff(t) > 1e-9])]
    return t


def _keep_mask(cfg: GeneratorConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    if cfg.drop_prob == 0:
        return np.ones(n, dtype=bool)
    if not cfg.burst_drops:
        keep = rng.random(n) >= cfg.drop_prob
    else:
        # geometric-length bursts with the same long-run drop fraction
        keep = np.ones(n, dtype=bool)
        start_prob = cfg.drop_prob / cfg.burst_mean_length
        i = 0
        while i < n:
            if rng.random() < start_prob:
                length = int(rng.geometric(1.0 / cfg.burst_mean_length))
                keep[i : i + length] = False
                i += length
            else:
                i += 1
    if keep.sum() < 2:
        keep[:2] = True
    return keep


def generate(cfg: GeneratorConfig) -> tuple[list[RawTrajectory], list[int]]:
    """Draw the dataset: one RawTrajectory and one truth label per vehicle.

    Deterministic for a given seed; every trajectory uses its own RNG
    stream derived from (seed, trajectory_id), so the output is identical
    no matter how the loop is scheduled.
    """
    trajectories = []
    truth = []
    mix = np.asarray(cfg.mix, dtype=float)
    for tid in range(cfg.n_trajectories):
        rng = np.random.default_rng([cfg.seed, tid])
        cluster = int(rng.choice(3, p=mix))
        speed = rng.uniform(*cfg.speed_range)
        lateral = rng.normal(0.0, cfg.lane_offset_std)
        t = _sample_times(cfg, rng)
        keep = _keep_mask(cfg, t.size, rng)
        noise = rng.normal(0.0, cfg.noise_std, (t.size, 2)) if cfg.noise_std > 0 else 0.0

        pts = _to_output_frame(cfg, _positions(cfg, cluster, lateral, speed * t)) + noise
        trajectories.append(RawTrajectory(tid, t[keep], pts[keep, 0], pts[keep, 1]))
        truth.append(cluster)
    return trajectories, truth


def write_dataset(trajs, truth, out_dir) -> None:
    """Write ``data.csv`` (detections) and ``truth.csv`` (labels).

    ``data.csv`` round-trips exactly through ``load_dataset``; floats are
    written at full repr precision.
    """
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "data.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trajectory_id", "timestamp", "x", "y"])
        for traj in trajs:
            for t, x, y in zip(traj.times, traj.xs, traj.ys):
                writer.writerow([traj.id, repr(float(t)), repr(float(x)), repr(float(y))])
    with open(os.path.join(out_dir, "truth.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trajectory_id", "cluster"])
        for traj, label in zip(trajs, truth):
            writer.writerow([traj.id, label])
