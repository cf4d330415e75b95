"""Command-line pipeline: generate -> reconstruct -> cluster -> build-model
-> classify / evaluate.

Every command appends its wall-clock stage timing to ``manifest.json`` in
the output directory, so a full pipeline run leaves one timing per stage
(dataset reconstruction, dataset clustering, traffic modeling, online
reconstruction, online classification). Online timings are medians over
five repetitions. ``INTERSECT_GP_THREADS`` caps reconstruction parallelism.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import OnlineClassifier, batch_classify, classification_time, target_names
from .clustering import canonicalize_labels, endpoint_features, kmeans_pp
from .gp import TrajectorySet, WienerVelocityKernel, fit_posterior, build_trajectory_set
from .simgen import GeneratorConfig, generate, write_dataset
from .traffic_model import STRAIGHT, TimeGrid, build_model, load_model, save_model
from .trajectory_data import PreprocessConfig, Sample, homogenize, load_dataset, normalize_start_time

MANIFEST_NAME = "manifest.json"
ONLINE_TIMING_REPS = 5


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def _config_digest(args: argparse.Namespace) -> str:
    payload = {k: str(v) for k, v in sorted(vars(args).items()) if k != "func"}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def _append_manifest(out_dir, command, args, timings, inputs, outputs):
    path = Path(out_dir) / MANIFEST_NAME
    manifest = {"schema_version": "1", "runs": []}
    if path.exists():
        manifest = json.loads(path.read_text(encoding="utf-8"))
    manifest["runs"].append(
        {
            "command": command,
            "config_digest": _config_digest(args),
            "inputs": [str(p) for p in inputs],
            "outputs": [str(p) for p in outputs],
            "seed": getattr(args, "seed", None),
            "timings": timings,
        }
    )
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")


# ---------------------------------------------------------------------------
# reconstruction artifact
# ---------------------------------------------------------------------------

def _save_reconstructions(tset: TrajectorySet, horizon: float, path) -> None:
    payload = {
        "version": "1.0",
        "horizon": horizon,
        "trajectories": [
            {
                "id": m.id,
                "times": m.gp_x.train_times.tolist(),
                "x": m.gp_x.train_values.tolist(),
                "y": m.gp_y.train_values.tolist(),
                "theta_x": m.gp_x.kernel.theta,
                "noise_var_x": m.gp_x.noise_variance,
                "theta_y": m.gp_y.kernel.theta,
                "noise_var_y": m.gp_y.noise_variance,
            }
            for m in tset.members
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def _load_reconstructions(path) -> tuple[TrajectorySet, float]:
    from .gp import ReconstructedTrajectory

    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    members = []
    for rec in payload["trajectories"]:
        times = np.asarray(rec["times"], dtype=float)
        gp_x = fit_posterior(
            times, np.asarray(rec["x"]), WienerVelocityKernel(rec["theta_x"]), rec["noise_var_x"]
        )
        gp_y = fit_posterior(
            times, np.asarray(rec["y"]), WienerVelocityKernel(rec["theta_y"]), rec["noise_var_y"]
        )
        members.append(ReconstructedTrajectory(int(rec["id"]), gp_x, gp_y))
    return TrajectorySet(members), float(payload["horizon"])


def _load_truth(path) -> dict[int, int]:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        return {int(row["trajectory_id"]): int(row["cluster"]) for row in csv.DictReader(fh)}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    out = Path(args.out)
    cfg = GeneratorConfig(
        n_trajectories=args.n,
        horizon=args.horizon,
        rate=args.rate,
        mix=tuple(float(p) for p in args.mix.split(",")),
        noise_std=args.noise_std,
        drop_prob=args.drop_prob,
        jitter_std=args.jitter_std,
        speed_range=tuple(float(v) for v in args.speed_range.split(",")),
        lane_offset_std=args.lane_offset_std,
        seed=args.seed,
    )
    start = time.perf_counter()
    trajs, truth = generate(cfg)
    write_dataset(trajs, truth, out)
    elapsed = time.perf_counter() - start
    _append_manifest(out, "generate", args, {"data_generation": elapsed}, [],
                     [out / "data.csv", out / "truth.csv"])
    print(f"generate: wrote {len(trajs)} trajectories to {out} in {elapsed:.2f}s")
    return 0


def cmd_reconstruct(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = args.workers or int(os.environ.get("INTERSECT_GP_THREADS", "1"))
    cfg = PreprocessConfig(args.horizon, args.min_duration_fraction, args.min_samples)

    start = time.perf_counter()
    trajs = [normalize_start_time(t) for t in load_dataset(args.data)]
    kept, discarded = homogenize(trajs, cfg)
    tset = build_trajectory_set(kept, workers=workers)
    elapsed = time.perf_counter() - start

    rec_path = out / "reconstructions.json"
    _save_reconstructions(tset, args.horizon, rec_path)
    if args.dump_curves:
        _dump_curves(tset, args.horizon, out / "curves.csv")
    _append_manifest(out, "reconstruct", args, {"dataset_reconstruction": elapsed},
                     [args.data], [rec_path])
    print(
        f"reconstruct: {len(kept)} kept, {len(discarded)} discarded "
        f"-> {rec_path} in {elapsed:.2f}s"
    )
    return 0


def _dump_curves(tset, horizon, path):
    """Debug dump of (t, mean, variance) per trajectory and dimension."""
    import csv

    grid = np.linspace(0.0, horizon, 61)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trajectory_id", "dim", "t", "mean", "variance"])
        for m in tset.members:
            for dim, gp in (("x", m.gp_x), ("y", m.gp_y)):
                mu = gp.predict_mean(grid)
                var = gp.predict_variance(grid)
                for t, mean, v in zip(grid, mu, var):
                    writer.writerow([m.id, dim, repr(float(t)), repr(float(mean)), repr(float(v))])


def cmd_cluster(args) -> int:
    import csv

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tset, horizon = _load_reconstructions(args.reconstructions)
    t_end = args.t_end if args.t_end is not None else horizon

    start = time.perf_counter()
    features = endpoint_features(tset, args.t_start, t_end)
    labeling = canonicalize_labels(kmeans_pp(features, args.k, args.seed), features)
    elapsed = time.perf_counter() - start

    labels_path = out / "labels.csv"
    with open(labels_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trajectory_id", "cluster"])
        for tid, label in zip(tset.ids, labeling.labels):
            writer.writerow([tid, int(label)])
    _append_manifest(out, "cluster", args, {"dataset_clustering": elapsed},
                     [args.reconstructions], [labels_path])
    print(f"cluster: {args.k} clusters over {len(tset)} trajectories in {elapsed:.2f}s")
    return 0


def cmd_build_model(args) -> int:
    from .clustering import ClusterLabeling

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tset, horizon = _load_reconstructions(args.reconstructions)
    truth = _load_truth(args.labels)
    labels = np.array([truth[tid] for tid in tset.ids])
    k = int(labels.max()) + 1
    centers = np.zeros((k, 1))  # placeholder; the model uses labels only
    labeling = ClusterLabeling(labels, centers, k)

    grid = TimeGrid.uniform(args.horizon if args.horizon else horizon, args.grid_n, args.rate)
    start = time.perf_counter()
    model = build_model(tset, labeling, grid)
    elapsed = time.perf_counter() - start

    model_path = out / "model.json"
    save_model(model, model_path)
    _append_manifest(out, "build-model", args, {"traffic_modeling": elapsed},
                     [args.reconstructions, args.labels], [model_path])
    print(f"build-model: {model.k} clusters on {grid.n} grid times -> {model_path} in {elapsed:.2f}s")
    return 0


def _decision_row(t, decision, k):
    dist = decision.distances
    return [repr(float(t)), decision.cluster] + [
        "nan" if math.isnan(d) else repr(float(d)) for d in dist
    ] + [int(decision.excluded_straight)]


def _stream_one(model, traj, writer=None):
    """Replay one trajectory; returns per-frame (ingest, classify) seconds."""
    clf = OnlineClassifier(model)
    ingest_s, classify_s = [], []
    for t, x, y in zip(traj.times, traj.xs, traj.ys):
        t0 = time.perf_counter()
        clf.ingest(Sample(float(t), np.array([x, y]), traj.id))
        t1 = time.perf_counter()
        if clf.grid_cursor >= 1:
            decision = clf.classify()
        else:
            from .classifier import _default_decision

            decision = _default_decision(clf._bank)
        t2 = time.perf_counter()
        ingest_s.append(t1 - t0)
        classify_s.append(t2 - t1)
        if writer is not None:
            writer.writerow(_decision_row(t, decision, model.k))
    return ingest_s, classify_s


def cmd_classify(args) -> int:
    import csv

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not Path(args.model).exists():
        print(f"classify: model file not found: {args.model}", file=sys.stderr)
        return 1
    model = load_model(args.model)
    trajs = [normalize_start_time(t) for t in load_dataset(args.data)]
    header = ["timestamp", "decision"] + [
        {"cluster_0": "D0", "cluster_1": "D1", "cluster_2": "D2",
         "left_center": "Dthr_lc", "right_center": "Dthr_rc"}.get(n, n)
        for n in target_names(model.k)
    ] + ["excluded"]

    outputs = []
    if args.mode == "stream":
        # manifest online timings: medians over repeated replays of the first trajectory
        reps = [
            tuple(statistics.fmean(s) for s in _stream_one(model, trajs[0]))
            for _ in range(ONLINE_TIMING_REPS)
        ]
        timings = {
            "online_reconstruction": statistics.median(r[0] for r in reps),
            "online_classification": statistics.median(r[1] for r in reps),
        }
        for traj in trajs:
            log_path = out / f"decisions_{traj.id}.csv"
            with open(log_path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                _stream_one(model, traj, writer)
            outputs.append(log_path)
    else:  # batch-replay: exact full-covariance distances at final information
        t0 = time.perf_counter()
        rows = []
        for traj in trajs:
            decision = batch_classify(traj, model)
            rows.append([traj.id] + _decision_row(traj.times[-1], decision, model.k)[1:])
        per_traj = (time.perf_counter() - t0) / max(len(trajs), 1)
        timings = {
            "online_reconstruction": per_traj,
            "online_classification": per_traj,
        }
        log_path = out / "batch_decisions.csv"
        with open(log_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trajectory_id"] + header[1:])
            writer.writerows(rows)
        outputs.append(log_path)

    _append_manifest(out, "classify", args, timings, [args.model, args.data], outputs)
    print(f"classify ({args.mode}): {len(trajs)} trajectories -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    import csv

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not Path(args.model).exists():
        print(f"evaluate: model file not found: {args.model}", file=sys.stderr)
        return 1
    model = load_model(args.model)
    test_dir = Path(args.test_dir)
    trajs = [normalize_start_time(t) for t in load_dataset(test_dir / "data.csv")]
    truth = _load_truth(test_dir / "truth.csv")
    if not trajs:
        print("evaluate: empty test set", file=sys.stderr)
        return 1

    start = time.perf_counter()
    results = {}
    for traj in trajs:
        results[traj.id] = classification_time(traj, model, truth[traj.id])
    elapsed = time.perf_counter() - start

    # per-stage latency from timed replays of a sample of trajectories
    sample = trajs[: min(len(trajs), 20)]
    ingest_all, classify_all = [], []
    for traj in sample:
        ing, cls = _stream_one(model, traj)
        ingest_all.extend(ing)
        classify_all.extend(cls)

    finite = [v for v in results.values() if math.isfinite(v)]
    by_cluster: dict[int, list[float]] = {}
    for tid, ct in results.items():
        by_cluster.setdefault(truth[tid], []).append(ct)

    def _quantiles(values):
        fin = sorted(v for v in values if math.isfinite(v))
        if not fin:
            return None
        q = lambda p: float(np.quantile(fin, p))
        return {"p25": q(0.25), "p50": q(0.5), "p75": q(0.75), "p90": q(0.9), "max": fin[-1]}

    report = {
        "version": "1.0",
        "n_trajectories": len(trajs),
        "convergence_rate": len(finite) / len(trajs),
        "per_cluster": {
            str(c): {
                "count": len(vals),
                "converged": sum(math.isfinite(v) for v in vals),
                "classification_time": _quantiles(vals),
            }
            for c, vals in sorted(by_cluster.items())
        },
        "latency": {
            "online_reconstruction_mean_s": statistics.fmean(ingest_all),
            "online_classification_mean_s": statistics.fmean(classify_all),
            "per_frame_total_mean_s": statistics.fmean(
                i + c for i, c in zip(ingest_all, classify_all)
            ),
        },
        "evaluation_wall_s": elapsed,
    }
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, indent=2), encoding="utf-8")

    outputs = [report_path]
    edges = model.grid.times
    for c, vals in sorted(by_cluster.items()):
        counts, _ = np.histogram([v for v in vals if math.isfinite(v)], bins=edges)
        hist_path = out / f"hist_{c}.csv"
        with open(hist_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_left", "bin_right", "count"])
            for left, right, n in zip(edges[:-1], edges[1:], counts):
                writer.writerow([repr(float(left)), repr(float(right)), int(n)])
        outputs.append(hist_path)

    _append_manifest(out, "evaluate", args, {"evaluation": elapsed},
                     [args.model, str(test_dir)], outputs)
    print(
        f"evaluate: convergence {report['convergence_rate']:.3f} over {len(trajs)} "
        f"trajectories in {elapsed:.1f}s -> {report_path}"
    )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="intersect-gp", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic intersection dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--horizon", type=float, default=3.0)
    g.add_argument("--rate", type=float, default=20.0)
    g.add_argument("--mix", default="0.3333333333333333,0.3333333333333333,0.3333333333333334")
    g.add_argument("--noise-std", type=float, default=0.15)
    g.add_argument("--drop-prob", type=float, default=0.05)
    g.add_argument("--jitter-std", type=float, default=0.005)
    g.add_argument("--speed-range", default="8.0,12.0")
    g.add_argument("--lane-offset-std", type=float, default=0.25)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("reconstruct", help="preprocess and fit per-trajectory GPs")
    r.add_argument("--data", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--horizon", type=float, default=3.0)
    r.add_argument("--min-duration-fraction", type=float, default=0.8)
    r.add_argument("--min-samples", type=int, default=5)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--dump-curves", action="store_true")
    r.set_defaults(func=cmd_reconstruct)

    c = sub.add_parser("cluster", help="k-means++ labels from endpoint features")
    c.add_argument("--reconstructions", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--k", type=int, default=3)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--t-start", type=float, default=0.0)
    c.add_argument("--t-end", type=float, default=None)
    c.set_defaults(func=cmd_cluster)

    b = sub.add_parser("build-model", help="build the intersection traffic model")
    b.add_argument("--reconstructions", required=True)
    b.add_argument("--labels", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--horizon", type=float, default=None)
    b.add_argument("--rate", type=float, default=20.0)
    b.add_argument("--grid-n", type=int, default=60)
    b.set_defaults(func=cmd_build_model)

    cl = sub.add_parser("classify", help="classify observed trajectories online")
    cl.add_argument("--model", required=True)
    cl.add_argument("--data", required=True)
    cl.add_argument("--out", required=True)
    cl.add_argument("--mode", choices=["stream", "batch-replay"], default="stream")
    cl.set_defaults(func=cmd_classify)

    e = sub.add_parser("evaluate", help="classification-time report on a labeled test set")
    e.add_argument("--model", required=True)
    e.add_argument("--test-dir", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # argparse handles usage errors; this tags module failures
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
