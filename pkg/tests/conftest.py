"""Shared fixtures: one small end-to-end pipeline reused across test modules."""

import numpy as np
import pytest

from intersect_gp import (
    GeneratorConfig,
    build_model,
    build_trajectory_set,
    canonicalize_labels,
    endpoint_features,
    generate,
    homogenize,
    kmeans_pp,
    normalize_start_time,
)


@pytest.fixture(scope="session")
def small_pipeline():
    """150-trajectory pipeline: raw data, truth, trajectory set, labeling, model."""
    cfg = GeneratorConfig(n_trajectories=150, seed=42)
    raw, truth = generate(cfg)
    kept, discarded = homogenize([normalize_start_time(t) for t in raw])
    tset = build_trajectory_set(kept)
    features = endpoint_features(tset)
    labeling = canonicalize_labels(kmeans_pp(features, 3, seed=1), features)
    model = build_model(tset, labeling)
    return {
        "cfg": cfg,
        "raw": raw,
        "truth": dict(zip([t.id for t in raw], truth)),
        "kept": kept,
        "discarded": discarded,
        "tset": tset,
        "features": features,
        "labeling": labeling,
        "model": model,
    }


@pytest.fixture(scope="session")
def heldout_small():
    """30 held-out trajectories from a different seed, with truth labels."""
    trajs, truth = generate(GeneratorConfig(n_trajectories=30, seed=777))
    return [normalize_start_time(t) for t in trajs], truth


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
