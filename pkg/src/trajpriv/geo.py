"""Trajectory data model, geodesic math, and preprocessing.

Coordinates are latitude/longitude in degrees throughout. Trajectories store
their points as read-only ``(L, 2)`` float64 arrays with columns
``[lat, lon]``. All types are immutable after construction, so every
operation here is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import as_generator, check_points

EARTH_RADIUS_M = 6_371_000.0

__all__ = [
    "EARTH_RADIUS_M",
    "GeoPoint",
    "BoundingBox",
    "Trajectory",
    "TrajectoryDataset",
    "FoldSplit",
    "DatasetPreset",
    "PRESETS",
    "haversine_m",
    "haversine_distance",
    "resample_to_length",
    "filter_bbox",
    "normalize_points",
    "denormalize_points",
    "normalize_coords",
    "denormalize_coords",
    "kfold_split",
    "split_dataset",
    "TrajectoryPreprocessor",
]


@dataclass(frozen=True)
class GeoPoint:
    """A single latitude/longitude position in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (np.isfinite(self.lat) and np.isfinite(self.lon)):
            raise ValueError("GeoPoint coordinates must be finite")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned lat/lon rectangle, min corners strictly below max corners."""

    lat_min: float
    lon_min: float
    lat_max: float
    lon_max: float

    def __post_init__(self):
        vals = (self.lat_min, self.lon_min, self.lat_max, self.lon_max)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("bounding box corners must be finite")
        if not self.lat_min < self.lat_max:
            raise ValueError("lat_min must be < lat_max")
        if not self.lon_min < self.lon_max:
            raise ValueError("lon_min must be < lon_max")

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points inside the box (boundary counts as inside)."""
        pts = np.asarray(points, dtype=float)
        lat, lon = pts[..., 0], pts[..., 1]
        return (
            (lat >= self.lat_min)
            & (lat <= self.lat_max)
            & (lon >= self.lon_min)
            & (lon <= self.lon_max)
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.lat_min, self.lon_min, self.lat_max, self.lon_max)

    @property
    def lat_span(self) -> float:
        return self.lat_max - self.lat_min

    @property
    def lon_span(self) -> float:
        return self.lon_max - self.lon_min


class Trajectory:
    """An ordered sequence of lat/lon points with an opaque string id."""

    __slots__ = ("id", "points")

    def __init__(self, id: str, points):
        pts = check_points(points, name=f"trajectory {id!r}")
        if len(pts) < 1:
            raise ValueError(f"trajectory {id!r} must contain at least one point")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "id", str(id))
        object.__setattr__(self, "points", pts)

    def __setattr__(self, name, value):
        raise AttributeError("Trajectory is immutable")

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.id == other.id and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash((self.id, self.points.tobytes()))

    def __repr__(self) -> str:
        return f"Trajectory(id={self.id!r}, n_points={len(self)})"


class TrajectoryDataset:
    """A sequence of trajectories with optional fixed length and bounding box.

    Invariants are enforced at construction: ids are unique, every trajectory
    has exactly ``fixed_length`` points when set, and every point lies inside
    ``bbox`` when set. Equality compares trajectory content only;
    ``fixed_length`` and ``bbox`` are metadata.
    """

    __slots__ = ("trajectories", "fixed_length", "bbox", "_by_id")

    def __init__(self, trajectories, fixed_length: int | None = None,
                 bbox: BoundingBox | None = None):
        trajs = tuple(trajectories)
        ids = [t.id for t in trajs]
        if len(set(ids)) != len(ids):
            raise ValueError("trajectory ids must be unique within a dataset")
        if fixed_length is not None:
            fixed_length = int(fixed_length)
            if fixed_length < 1:
                raise ValueError("fixed_length must be >= 1")
            bad = [t.id for t in trajs if len(t) != fixed_length]
            if bad:
                raise ValueError(
                    f"{len(bad)} trajectories violate fixed_length={fixed_length} "
                    f"(first: {bad[0]!r})"
                )
        if bbox is not None:
            for t in trajs:
                if not bbox.contains(t.points).all():
                    raise ValueError(f"trajectory {t.id!r} has points outside bbox")
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "fixed_length", fixed_length)
        object.__setattr__(self, "bbox", bbox)
        object.__setattr__(self, "_by_id", {t.id: t for t in trajs})

    def __setattr__(self, name, value):
        raise AttributeError("TrajectoryDataset is immutable")

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i) -> Trajectory:
        return self.trajectories[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectoryDataset):
            return NotImplemented
        return self.trajectories == other.trajectories

    def __repr__(self) -> str:
        return (
            f"TrajectoryDataset(n={len(self)}, fixed_length={self.fixed_length}, "
            f"bbox={'set' if self.bbox else None})"
        )

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.trajectories)

    def get(self, traj_id: str) -> Trajectory:
        return self._by_id[traj_id]

    def all_points(self) -> np.ndarray:
        """Concatenate every point of every trajectory into one (N, 2) array."""
        if not self.trajectories:
            return np.empty((0, 2), dtype=float)
        return np.concatenate([t.points for t in self.trajectories], axis=0)

    def stacked(self) -> np.ndarray:
        """Stack points into an (n, L, 2) array. Requires a fixed length."""
        if self.fixed_length is None:
            raise ValueError("stacked() requires a dataset with fixed_length set")
        return np.stack([t.points for t in self.trajectories], axis=0)

    def subset(self, ids) -> "TrajectoryDataset":
        """Restrict to the given ids, keeping the dataset order."""
        wanted = set(ids)
        missing = wanted - set(self._by_id)
        if missing:
            raise KeyError(f"unknown trajectory ids: {sorted(missing)[:3]}")
        kept = [t for t in self.trajectories if t.id in wanted]
        return TrajectoryDataset(kept, fixed_length=self.fixed_length, bbox=self.bbox)

    def replace(self, trajectories=None, fixed_length=..., bbox=...):
        return TrajectoryDataset(
            self.trajectories if trajectories is None else trajectories,
            fixed_length=self.fixed_length if fixed_length is ... else fixed_length,
            bbox=self.bbox if bbox is ... else bbox,
        )


@dataclass(frozen=True)
class FoldSplit:
    """One train/test partition out of a k-fold split."""

    fold_index: int
    train_ids: frozenset
    test_ids: frozenset

    def __post_init__(self):
        if self.train_ids & self.test_ids:
            raise ValueError("train and test ids must be disjoint")


@dataclass(frozen=True)
class DatasetPreset:
    """Named preprocessing preset: bounding box plus resampling length."""

    name: str
    bbox: BoundingBox
    fixed_length: int


PRESETS: dict[str, DatasetPreset] = {
    "porto": DatasetPreset("porto", BoundingBox(41.10, -8.72, 41.24, -8.50), 100),
    "geolife": DatasetPreset("geolife", BoundingBox(39.75, 116.19, 40.03, 116.56), 200),
}


def haversine_m(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Great-circle distance in meters, broadcasting over array inputs."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(x, dtype=float))
                              for x in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return EARTH_RADIUS_M * 2.0 * np.arcsin(np.sqrt(np.minimum(a, 1.0)))


def _point_latlon(p) -> tuple[float, float]:
    if isinstance(p, GeoPoint):
        return p.lat, p.lon
    lat, lon = float(p[0]), float(p[1])
    GeoPoint(lat, lon)  # range/finiteness check
    return lat, lon


def haversine_distance(a, b) -> float:
    """Great-circle distance in meters between two points.

    Accepts ``GeoPoint`` instances or (lat, lon) pairs.
    """
    lat1, lon1 = _point_latlon(a)
    lat2, lon2 = _point_latlon(b)
    return float(haversine_m(lat1, lon1, lat2, lon2))


def resample_to_length(t: Trajectory, target_length: int) -> Trajectory:
    """Resample a trajectory to exactly ``target_length`` points.

    Interpolates linearly over the point-index parameterization. The first
    and last points are preserved bit-exactly.
    """
    target_length = int(target_length)
    if target_length < 2:
        raise ValueError("target_length must be >= 2")
    if len(t) < 2:
        raise ValueError(
            f"trajectory {t.id!r} has a single point and cannot be resampled; "
            "resampling needs at least two points"
        )
    src = np.arange(len(t), dtype=float)
    dst = np.linspace(0.0, len(t) - 1.0, target_length)
    lat = np.interp(dst, src, t.points[:, 0])
    lon = np.interp(dst, src, t.points[:, 1])
    pts = np.column_stack([lat, lon])
    pts[0] = t.points[0]
    pts[-1] = t.points[-1]
    return Trajectory(t.id, pts)


def filter_bbox(d: TrajectoryDataset, bbox: BoundingBox) -> TrajectoryDataset:
    """Keep only trajectories whose every point lies inside ``bbox``.

    A trajectory with even one outside point is dropped whole; clipping would
    break its continuity.
    """
    kept = [t for t in d if bbox.contains(t.points).all()]
    return TrajectoryDataset(kept, fixed_length=d.fixed_length, bbox=bbox)


def normalize_points(points, bbox: BoundingBox) -> np.ndarray:
    """Affinely map lat/lon inside ``bbox`` onto [-1, 1] per axis."""
    pts = np.asarray(points, dtype=float)
    if pts.size and not bbox.contains(pts).all():
        raise ValueError("points outside bounding box cannot be normalized")
    out = np.empty_like(pts)
    out[..., 0] = 2.0 * (pts[..., 0] - bbox.lat_min) / bbox.lat_span - 1.0
    out[..., 1] = 2.0 * (pts[..., 1] - bbox.lon_min) / bbox.lon_span - 1.0
    return out


def denormalize_points(points, bbox: BoundingBox) -> np.ndarray:
    """Inverse of :func:`normalize_points`."""
    pts = np.asarray(points, dtype=float)
    out = np.empty_like(pts)
    out[..., 0] = bbox.lat_min + (pts[..., 0] + 1.0) * bbox.lat_span / 2.0
    out[..., 1] = bbox.lon_min + (pts[..., 1] + 1.0) * bbox.lon_span / 2.0
    return out


_UNIT_BOX = BoundingBox(-1.0, -1.0, 1.0, 1.0)


def normalize_coords(d: TrajectoryDataset, bbox: BoundingBox) -> TrajectoryDataset:
    """Return the dataset with coordinates mapped onto the unit box [-1, 1]^2."""
    trajs = [Trajectory(t.id, normalize_points(t.points, bbox)) for t in d]
    return TrajectoryDataset(trajs, fixed_length=d.fixed_length, bbox=_UNIT_BOX)


def denormalize_coords(d: TrajectoryDataset, bbox: BoundingBox) -> TrajectoryDataset:
    """Map a unit-box dataset back to geographic coordinates inside ``bbox``."""
    trajs = [Trajectory(t.id, denormalize_points(t.points, bbox)) for t in d]
    return TrajectoryDataset(trajs, fixed_length=d.fixed_length, bbox=bbox)


def kfold_split(d: TrajectoryDataset, k: int, seed: int) -> list[FoldSplit]:
    """Deterministically partition the dataset ids into k folds.

    Fold sizes differ by at most one. The same (dataset, k, seed) always
    yields the same splits.
    """
    k = int(k)
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(d) < k:
        raise ValueError(f"dataset has {len(d)} trajectories, fewer than k={k}")
    ids = np.asarray(d.ids, dtype=object)
    rng = as_generator(seed)
    perm = rng.permutation(len(ids))
    chunks = np.array_split(perm, k)
    splits = []
    for i, chunk in enumerate(chunks):
        test = frozenset(ids[chunk])
        train = frozenset(ids) - test
        splits.append(FoldSplit(fold_index=i, train_ids=train, test_ids=test))
    return splits


def split_dataset(d: TrajectoryDataset, fold: FoldSplit):
    """Materialize (train, test) datasets for one fold, in dataset order."""
    return d.subset(fold.train_ids), d.subset(fold.test_ids)


class TrajectoryPreprocessor(BaseEstimator, TransformerMixin):
    """Bounding-box filter plus fixed-length resampling as one transformer.

    Parameters
    ----------
    bbox : BoundingBox or preset name ("porto", "geolife"), optional.
    target_length : int, optional. Resampling length; presets supply theirs.
    drop_single_point : bool. Silently drop one-point trajectories instead of
        raising when resampling (they cannot be resampled).
    """

    def __init__(self, bbox=None, target_length=None, drop_single_point=True):
        self.bbox = bbox
        self.target_length = target_length
        self.drop_single_point = drop_single_point

    def _resolve(self):
        bbox, length = self.bbox, self.target_length
        if isinstance(bbox, str):
            try:
                preset = PRESETS[bbox]
            except KeyError:
                raise ValueError(
                    f"unknown preset {bbox!r}; available: {sorted(PRESETS)}"
                ) from None
            if length is None:
                length = preset.fixed_length
            bbox = preset.bbox
        return bbox, length

    def fit(self, X: TrajectoryDataset, y=None):
        bbox, length = self._resolve()
        if bbox is None and length is None:
            raise ValueError("provide a bbox, a target_length, or a preset name")
        self.bbox_ = bbox
        self.target_length_ = length
        return self

    def transform(self, X: TrajectoryDataset) -> TrajectoryDataset:
        if not hasattr(self, "bbox_"):
            self.fit(X)
        d = X
        if self.bbox_ is not None:
            d = filter_bbox(d, self.bbox_)
        if self.target_length_ is not None:
            kept = []
            for t in d:
                if len(t) < 2:
                    if self.drop_single_point:
                        continue
                    raise ValueError(f"trajectory {t.id!r} has a single point")
                kept.append(resample_to_length(t, self.target_length_))
            d = TrajectoryDataset(kept, fixed_length=self.target_length_, bbox=d.bbox)
        return d
