"""Raw trajectory containers, file ingestion, and time-span preprocessing.

Input data is a sequence of detections, each carrying a trajectory id, a
timestamp and an x-y position. Detections arrive non-uniformly in time
(dropped frames, frozen feeds) and the time span differs per vehicle, so
before any modeling the trajectories are shifted to start at zero and
homogenized to a common horizon: overlong ones are truncated, slightly
short ones are kept and flagged for extrapolation at reconstruction time,
and the rest are discarded.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Sample",
    "RawTrajectory",
    "PreprocessConfig",
    "DatasetParseError",
    "EmptyDatasetError",
    "load_dataset",
    "normalize_start_time",
    "homogenize",
]


class DatasetParseError(ValueError):
    """A record in the input file could not be parsed."""


class EmptyDatasetError(ValueError):
    """The input file contains no trajectory records."""


@dataclass(frozen=True)
class Sample:
    """One detection: a timestamp, an x-y position and the track it belongs to."""

    timestamp: float
    position: np.ndarray  # shape (2,), meters
    trajectory_id: int

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (2,):
            raise ValueError(f"position must be a 2-vector, got shape {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError(f"non-finite position {pos} in trajectory {self.trajectory_id}")
        if not math.isfinite(self.timestamp) or self.timestamp < 0:
            raise ValueError(f"timestamp must be finite and non-negative, got {self.timestamp}")
        object.__setattr__(self, "position", pos)


@dataclass
class RawTrajectory:
    """A single vehicle track: strictly increasing times with x/y positions.

    ``flagged_for_extrapolation`` is set by :func:`homogenize` on kept
    trajectories whose span ends short of the horizon; the reconstruction
    stage extends those linearly past the last observation.
    """

    id: int
    times: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    flagged_for_extrapolation: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.xs = np.asarray(self.xs, dtype=float)
        self.ys = np.asarray(self.ys, dtype=float)
        n = self.times.size
        if not (self.xs.size == n and self.ys.size == n):
            raise ValueError(f"trajectory {self.id}: times/xs/ys lengths differ")
        if n < 2:
            raise ValueError(f"trajectory {self.id}: needs at least 2 samples, got {n}")
        if not np.all(np.isfinite(self.times)) or np.any(self.times < 0):
            raise ValueError(f"trajectory {self.id}: times must be finite and non-negative")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError(f"trajectory {self.id}: times must be strictly increasing")
        if not (np.all(np.isfinite(self.xs)) and np.all(np.isfinite(self.ys))):
            raise ValueError(f"trajectory {self.id}: positions must be finite")

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def __len__(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class PreprocessConfig:
    """Thresholds for span homogenization.

    Kept trajectories end up with times inside ``[0, horizon]``. A
    trajectory is discarded if its duration is below
    ``min_duration_fraction * horizon`` or if it has fewer than
    ``min_samples`` samples after truncation.
    """

    horizon: float = 3.0
    min_duration_fraction: float = 0.8
    min_samples: int = 5

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if not 0 < self.min_duration_fraction <= 1:
            raise ValueError("min_duration_fraction must be in (0, 1]")
        if self.min_samples < 2:
            raise ValueError("min_samples must be at least 2")


def _parse_record(rec: dict, where: str) -> tuple[int, float, float, float]:
    try:
        return (
            int(rec["trajectory_id"]),
            float(rec["timestamp"]),
            float(rec["x"]),
            float(rec["y"]),
        )
    except KeyError as exc:
        raise DatasetParseError(f"{where}: missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise DatasetParseError(f"{where}: {exc}") from exc


def _read_csv_records(path) -> list[tuple[int, float, float, float]]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"trajectory_id", "timestamp", "x", "y"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DatasetParseError(
                f"{path}: header must contain columns {sorted(required)}, "
                f"got {reader.fieldnames}"
            )
        for row in reader:
            records.append(_parse_record(row, f"{path}: line {reader.line_num}"))
    return records


def _read_json_records(path) -> list[tuple[int, float, float, float]]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, list):
        raise DatasetParseError(f"{path}: expected a JSON array of records")
    return [_parse_record(rec, f"{path}: record {i}") for i, rec in enumerate(data)]


def load_dataset(path, format: str | None = None) -> list[RawTrajectory]:
    """Load trajectories from a CSV or JSON detection file.

    Records are grouped by ``trajectory_id`` and sorted by timestamp within
    each group; duplicate (id, timestamp) pairs keep the first occurrence.
    Groups with a single detection cannot form a trajectory and are dropped
    with a warning.

    Args:
        path: input file. CSV needs a ``trajectory_id,timestamp,x,y`` header;
            JSON is an array of objects with the same keys.
        format: "csv" or "json"; inferred from the file suffix when omitted.

    Raises:
        DatasetParseError: malformed record (the message names the location).
        EmptyDatasetError: the file holds no records.
    """
    if format is None:
        format = "json" if str(path).lower().endswith(".json") else "csv"
    if format == "csv":
        records = _read_csv_records(path)
    elif format == "json":
        records = _read_json_records(path)
    else:
        raise ValueError(f"unknown format {format!r}, expected 'csv' or 'json'")

    if not records:
        raise EmptyDatasetError(f"{path}: no trajectory records found")

    groups: dict[int, list[tuple[float, float, float]]] = {}
    for tid, t, x, y in records:
        groups.setdefault(tid, []).append((t, x, y))

    trajectories = []
    for tid, rows in groups.items():
        # stable sort keeps file order among equal timestamps, so "first wins"
        rows.sort(key=lambda r: r[0])
        seen: set[float] = set()
        deduped = []
        for t, x, y in rows:
            if t in seen:
                continue
            seen.add(t)
            deduped.append((t, x, y))
        if len(deduped) < 2:
            warnings.warn(
                f"{path}: trajectory {tid} has fewer than 2 distinct timestamps; dropped",
                stacklevel=2,
            )
            continue
        arr = np.asarray(deduped, dtype=float)
        trajectories.append(RawTrajectory(tid, arr[:, 0], arr[:, 1], arr[:, 2]))
    return trajectories


def normalize_start_time(traj: RawTrajectory) -> RawTrajectory:
    """Shift the trajectory clock so its first sample is at t = 0."""
    if traj.times[0] == 0.0:
        return traj
    return replace(traj, times=traj.times - traj.times[0])


def homogenize(
    trajs: list[RawTrajectory], cfg: PreprocessConfig = PreprocessConfig()
) -> tuple[list[RawTrajectory], list[int]]:
    """Force a common time span across start-normalized trajectories.

    Trajectories longer than the horizon are truncated to samples with
    ``t <= horizon``. Trajectories whose duration lands in
    ``[min_duration_fraction * horizon, horizon)`` are kept and flagged for
    extrapolation. Anything shorter, or anything left with fewer than
    ``min_samples`` samples, is discarded; discarding is an outcome reported
    through the second return value, not an error.

    Returns:
        (kept, discarded_ids) with ``len(kept) + len(discarded_ids)`` equal
        to the input count.
    """
    min_duration = cfg.min_duration_fraction * cfg.horizon
    kept: list[RawTrajectory] = []
    discarded: list[int] = []
    for traj in trajs:
        if traj.times[0] != 0.0:
            raise ValueError(
                f"trajectory {traj.id}: not start-time-normalized (t0={traj.times[0]})"
            )
        if traj.duration >= cfg.horizon:
            mask = traj.times <= cfg.horizon
            if int(mask.sum()) < cfg.min_samples:
                discarded.append(traj.id)
                continue
            traj = replace(
                traj,
                times=traj.times[mask],
                xs=traj.xs[mask],
                ys=traj.ys[mask],
            )
        elif traj.duration < min_duration:
            discarded.append(traj.id)
            continue
        if len(traj) < cfg.min_samples:
            discarded.append(traj.id)
            continue
        # anything ending short of the horizon relies on linear extrapolation
        traj.flagged_for_extrapolation = traj.duration < cfg.horizon
        kept.append(traj)
    return kept, discarded
