"""Synthetic trajectory worlds for tests, demos, and desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .geo import BoundingBox, Trajectory, TrajectoryDataset
from .validation import as_generator

__all__ = ["make_two_cluster_world", "make_random_walks"]

_DEFAULT_BOX = BoundingBox(0.0, 0.0, 1.0, 1.0)


def _walk(start, steps, step_scale, bbox, rng):
    deltas = rng.normal(0.0, step_scale, size=(steps - 1, 2))
    pts = np.empty((steps, 2))
    pts[0] = start
    np.cumsum(deltas, axis=0, out=deltas)
    pts[1:] = start + deltas
    pts[:, 0] = np.clip(pts[:, 0], bbox.lat_min, bbox.lat_max)
    pts[:, 1] = np.clip(pts[:, 1], bbox.lon_min, bbox.lon_max)
    return pts


def make_two_cluster_world(n_trajectories: int = 10_000, length: int = 20,
                           bbox: BoundingBox = _DEFAULT_BOX,
                           cluster_spread: float = 0.08,
                           step_scale: float = 0.012,
                           random_state=None) -> TrajectoryDataset:
    """Random walks around two diagonal cluster centers inside ``bbox``.

    Produces a bimodal point density with localized movement, which gives
    grid-based models and metrics clear structure to preserve.
    """
    rng = as_generator(random_state)
    lat_c = bbox.lat_min + np.array([0.3, 0.7]) * bbox.lat_span
    lon_c = bbox.lon_min + np.array([0.3, 0.7]) * bbox.lon_span
    scale = np.array([bbox.lat_span, bbox.lon_span])
    trajs = []
    for i in range(n_trajectories):
        c = rng.integers(2)
        start = np.array([lat_c[c], lon_c[c]]) + rng.normal(0.0, cluster_spread, 2) * scale
        start[0] = np.clip(start[0], bbox.lat_min, bbox.lat_max)
        start[1] = np.clip(start[1], bbox.lon_min, bbox.lon_max)
        pts = _walk(start, length, step_scale * scale.mean(), bbox, rng)
        trajs.append(Trajectory(f"tc-{i:06d}", pts))
    return TrajectoryDataset(trajs, fixed_length=length, bbox=bbox)


def make_random_walks(n_trajectories: int = 100, length: int = 20,
                      bbox: BoundingBox = _DEFAULT_BOX,
                      step_scale: float = 0.02,
                      random_state=None) -> TrajectoryDataset:
    """Plain clipped Gaussian random walks with uniform start points."""
    rng = as_generator(random_state)
    trajs = []
    for i in range(n_trajectories):
        start = np.array([
            rng.uniform(bbox.lat_min, bbox.lat_max),
            rng.uniform(bbox.lon_min, bbox.lon_max),
        ])
        pts = _walk(start, length, step_scale * (bbox.lat_span + bbox.lon_span) / 2,
                    bbox, rng)
        trajs.append(Trajectory(f"rw-{i:06d}", pts))
    return TrajectoryDataset(trajs, fixed_length=length, bbox=bbox)
