"""DP trajectory synthesis from noisy Markov models on an adaptive grid.

Three stages, each consuming a share of the privacy budget:

1. discretize the bounding box with a density-aware two-level grid (dense
   level-1 cells are subdivided),
2. fit first- and second-order Markov transition counts over the grid cells
   with Laplace noise, and
3. random-walk the noisy model and map cell paths back to coordinate space.

Noisy count tables are materialized densely (noise on every entry, including
never-observed transitions) because the released model must not reveal which
transitions truly occurred. The second-order table grows with the cube of
the state count, so ``max_states`` bounds it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dp import PrivacyBudget, laplace_sample
from .geo import BoundingBox, Trajectory, TrajectoryDataset, resample_to_length
from .validation import as_generator, check_positive

__all__ = [
    "SynthConfig",
    "AdaptiveGrid",
    "MarkovModel",
    "build_grid",
    "fit_markov_dp",
    "generate_walks",
    "to_trajectories",
    "MarkovSynthesizer",
]


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the synthesizer: budget split and grid geometry.

    ``budget_split`` is (grid, first-order, second-order) and must sum to 1.
    ``threshold`` is the density multiple (relative to the mean level-1
    count) above which a cell is subdivided. ``max_walk_length`` defaults
    to ``4 * g1``.
    """

    eps_total: float = 10.0
    budget_split: tuple = (0.2, 0.4, 0.4)
    g1: int = 8
    g2: int = 4
    threshold: float = 2.0
    max_walk_length: int | None = None
    max_states: int = 256

    def __post_init__(self):
        check_positive(self.eps_total, "eps_total", allow_inf=True)
        split = tuple(float(r) for r in self.budget_split)
        if len(split) != 3 or any(r < 0 for r in split):
            raise ValueError("budget_split must be three nonnegative shares")
        if abs(sum(split) - 1.0) > 1e-9:
            raise ValueError(f"budget_split must sum to 1, got {sum(split)}")
        object.__setattr__(self, "budget_split", split)
        if self.g1 < 1 or self.g2 < 1:
            raise ValueError("g1 and g2 must be >= 1")
        check_positive(self.threshold, "threshold")
        if self.max_walk_length is not None and self.max_walk_length < 1:
            raise ValueError("max_walk_length must be >= 1")
        if self.max_states < 4:
            raise ValueError("max_states must be at least 4")

    @property
    def walk_cap(self) -> int:
        return self.max_walk_length if self.max_walk_length is not None else 4 * self.g1

    def stage_epsilons(self) -> tuple[float, float, float]:
        if math.isinf(self.eps_total):
            return (math.inf, math.inf, math.inf)
        parts = tuple(r * self.eps_total for r in self.budget_split)
        if any(p <= 0 for p in parts):
            raise ValueError(
                "every budget share must be positive for a finite eps_total"
            )
        return parts


class AdaptiveGrid:
    """Two-level spatial partition of a bounding box.

    Level 1 is a ``g1 x g1`` grid; cells listed in ``subdivided`` are split
    into ``g2 x g2`` children. Leaves partition the box exactly, and every
    point maps to a single leaf (points on the max edges belong to the last
    cell).
    """

    __slots__ = ("bbox", "g1", "g2", "subdivided", "eps_grid",
                 "_leaf_base", "n_leaves", "_rects")

    def __init__(self, bbox: BoundingBox, g1: int, g2: int, subdivided,
                 eps_grid: float = math.inf):
        subdivided = tuple(sorted(int(i) for i in set(subdivided)))
        if subdivided and (subdivided[0] < 0 or subdivided[-1] >= g1 * g1):
            raise ValueError("subdivided cell index out of range")
        object.__setattr__(self, "bbox", bbox)
        object.__setattr__(self, "g1", int(g1))
        object.__setattr__(self, "g2", int(g2))
        object.__setattr__(self, "subdivided", subdivided)
        object.__setattr__(self, "eps_grid", float(eps_grid))

        is_sub = np.zeros(g1 * g1, dtype=bool)
        is_sub[list(subdivided)] = True
        sizes = np.where(is_sub, g2 * g2, 1)
        base = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        object.__setattr__(self, "_leaf_base", base)
        object.__setattr__(self, "n_leaves", int(sizes.sum()))

        h1 = bbox.lat_span / g1
        w1 = bbox.lon_span / g1
        rects = np.empty((self.n_leaves, 4))
        for flat in range(g1 * g1):
            r1, c1 = divmod(flat, g1)
            lat0 = bbox.lat_min + r1 * h1
            lon0 = bbox.lon_min + c1 * w1
            if not is_sub[flat]:
                rects[base[flat]] = (lat0, lon0, lat0 + h1, lon0 + w1)
            else:
                h2, w2 = h1 / g2, w1 / g2
                for child in range(g2 * g2):
                    r2, c2 = divmod(child, g2)
                    rects[base[flat] + child] = (
                        lat0 + r2 * h2, lon0 + c2 * w2,
                        lat0 + (r2 + 1) * h2, lon0 + (c2 + 1) * w2,
                    )
        object.__setattr__(self, "_rects", rects)

    def __setattr__(self, name, value):
        raise AttributeError("AdaptiveGrid is immutable")

    def locate(self, points) -> np.ndarray:
        """Map (N, 2) lat/lon points to leaf indices."""
        pts = np.asarray(points, dtype=float)
        bbox, g1, g2 = self.bbox, self.g1, self.g2
        lat_rel = (pts[:, 0] - bbox.lat_min) / bbox.lat_span * g1
        lon_rel = (pts[:, 1] - bbox.lon_min) / bbox.lon_span * g1
        r1 = np.clip(np.floor(lat_rel).astype(int), 0, g1 - 1)
        c1 = np.clip(np.floor(lon_rel).astype(int), 0, g1 - 1)
        flat = r1 * g1 + c1
        leaf = self._leaf_base[flat].copy()
        if self.subdivided:
            is_sub = np.isin(flat, self.subdivided)
            if is_sub.any():
                r2 = np.clip(np.floor((lat_rel[is_sub] - r1[is_sub]) * g2).astype(int),
                             0, g2 - 1)
                c2 = np.clip(np.floor((lon_rel[is_sub] - c1[is_sub]) * g2).astype(int),
                             0, g2 - 1)
                leaf[is_sub] += r2 * g2 + c2
        return leaf

    def cell_bounds(self, leaf: int) -> tuple[float, float, float, float]:
        """(lat_min, lon_min, lat_max, lon_max) of a leaf cell."""
        return tuple(self._rects[int(leaf)])

    def sample_points(self, leaves, rng: np.random.Generator) -> np.ndarray:
        """One uniform point inside each given leaf cell."""
        idx = np.asarray(leaves, dtype=int)
        rects = self._rects[idx]
        u = rng.uniform(size=(len(idx), 2))
        lat = rects[:, 0] + u[:, 0] * (rects[:, 2] - rects[:, 0])
        lon = rects[:, 1] + u[:, 1] * (rects[:, 3] - rects[:, 1])
        return np.column_stack([lat, lon])

    def to_dict(self) -> dict:
        return {
            "bbox": list(self.bbox.as_tuple()),
            "g1": self.g1,
            "g2": self.g2,
            "subdivided": list(self.subdivided),
            "eps_grid": self.eps_grid,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptiveGrid":
        return cls(BoundingBox(*d["bbox"]), d["g1"], d["g2"], d["subdivided"],
                   eps_grid=d.get("eps_grid", math.inf))


def build_grid(d: TrajectoryDataset, eps_grid: float, config: SynthConfig,
               rng: np.random.Generator) -> AdaptiveGrid:
    """Build the density-aware grid from Laplace-noised level-1 point counts.

    One trajectory contributes at most its length to the level-1 histogram,
    so the counts are noised at scale ``L / eps_grid``. Cells whose noisy
    count exceeds ``threshold * (total / g1^2)`` are subdivided.
    """
    check_positive(eps_grid, "eps_grid", allow_inf=True)
    if d.bbox is None:
        raise ValueError("build_grid requires a dataset with its bbox set")
    if len(d) == 0:
        raise ValueError("cannot build a grid from an empty dataset")
    bbox, g1 = d.bbox, config.g1
    pts = d.all_points()
    counts, _, _ = np.histogram2d(
        pts[:, 0], pts[:, 1], bins=config.g1,
        range=[[bbox.lat_min, bbox.lat_max], [bbox.lon_min, bbox.lon_max]],
    )
    sens = float(d.fixed_length if d.fixed_length is not None
                 else max(len(t) for t in d))
    scale = 0.0 if math.isinf(eps_grid) else sens / eps_grid
    noisy = counts.reshape(-1) + laplace_sample(g1 * g1, scale, rng)
    total = max(float(noisy.sum()), 0.0)
    cutoff = config.threshold * total / (g1 * g1)
    subdivided = np.nonzero(noisy > cutoff)[0]
    return AdaptiveGrid(bbox, g1, config.g2, subdivided, eps_grid=eps_grid)


class MarkovModel:
    """Noisy first/second-order transition counts over grid cells.

    States are the grid leaves plus virtual START and END. Tables hold the
    raw noisy values (possibly negative) for auditability; clamping to zero
    happens only when normalizing into transition probabilities.
    """

    __slots__ = ("grid", "first_order", "second_order", "budget")

    def __init__(self, grid: AdaptiveGrid, first_order: np.ndarray,
                 second_order: np.ndarray, budget: PrivacyBudget):
        s = grid.n_leaves + 2
        first_order = np.asarray(first_order, dtype=float)
        second_order = np.asarray(second_order, dtype=float)
        if first_order.shape != (s, s) or second_order.shape != (s, s, s):
            raise ValueError("transition table shapes do not match the grid")
        if not (np.isfinite(first_order).all() and np.isfinite(second_order).all()):
            raise ValueError("transition counts must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "first_order", first_order)
        object.__setattr__(self, "second_order", second_order)
        object.__setattr__(self, "budget", budget)

    def __setattr__(self, name, value):
        raise AttributeError("MarkovModel is immutable")

    @property
    def n_states(self) -> int:
        return self.grid.n_leaves + 2

    @property
    def start_state(self) -> int:
        return self.grid.n_leaves

    @property
    def end_state(self) -> int:
        return self.grid.n_leaves + 1

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "first_order": self.first_order.tolist(),
            "second_order": self.second_order.tolist(),
            "budget": self.budget.to_dict(),
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, d: dict) -> "MarkovModel":
        return cls(
            AdaptiveGrid.from_dict(d["grid"]),
            np.array(d["first_order"], dtype=float),
            np.array(d["second_order"], dtype=float),
            PrivacyBudget.from_dict(d["budget"]),
        )

    @classmethod
    def load(cls, path) -> "MarkovModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _cell_sequences(d: TrajectoryDataset, grid: AdaptiveGrid):
    for t in d:
        cells = grid.locate(t.points)
        if len(cells) > 1:
            keep = np.empty(len(cells), dtype=bool)
            keep[0] = True
            keep[1:] = cells[1:] != cells[:-1]
            cells = cells[keep]
        yield cells


def fit_markov_dp(d: TrajectoryDataset, grid: AdaptiveGrid, eps_first: float,
                  eps_second: float, rng: np.random.Generator,
                  max_states: int = 256) -> MarkovModel:
    """Fit DP first/second-order transition counts over the grid.

    Consecutive duplicate cells are collapsed, then each cell sequence is
    wrapped as START, cells..., END. A trajectory of fixed length L touches
    at most L+1 transitions per order; under replace-one adjacency that
    doubles, so every table entry gets Laplace noise at scale
    ``2 (L + 1) / eps``. The attached budget is the sequential composition
    of the grid stage and both table stages.
    """
    check_positive(eps_first, "eps_first", allow_inf=True)
    check_positive(eps_second, "eps_second", allow_inf=True)
    if len(d) == 0:
        raise ValueError("cannot fit a Markov model on an empty dataset")
    s = grid.n_leaves + 2
    if s > max_states:
        raise ValueError(
            f"grid yields {s} states, above max_states={max_states}; the dense "
            "second-order table would need "
            f"{s**3:,} entries. Use a coarser grid or raise max_states."
        )
    start, end = grid.n_leaves, grid.n_leaves + 1
    first = np.zeros((s, s))
    second = np.zeros((s, s, s))
    for cells in _cell_sequences(d, grid):
        seq = np.concatenate([[start], cells, [end]])
        np.add.at(first, (seq[:-1], seq[1:]), 1.0)
        if len(seq) >= 3:
            np.add.at(second, (seq[:-2], seq[1:-1], seq[2:]), 1.0)

    length = float(d.fixed_length if d.fixed_length is not None
                   else max(len(t) for t in d))
    sens = 2.0 * (length + 1.0)
    scale1 = 0.0 if math.isinf(eps_first) else sens / eps_first
    scale2 = 0.0 if math.isinf(eps_second) else sens / eps_second
    first = first + laplace_sample(first.shape, scale1, rng)
    second = second + laplace_sample(second.shape, scale2, rng)

    budget = PrivacyBudget(grid.eps_grid + eps_first + eps_second, 0.0,
                           adjacency="replace-one")
    return MarkovModel(grid, first, second, budget)


class _RowSampler:
    """Normalizes clamped noisy count rows into cached sampling CDFs."""

    def __init__(self, model: MarkovModel):
        self.model = model
        self.start = model.start_state
        self.end = model.end_state
        self._first: dict[int, np.ndarray | None] = {}
        self._second: dict[tuple[int, int], np.ndarray | None] = {}

    def _cdf(self, row: np.ndarray, forbid_end: bool = False):
        p = np.maximum(row, 0.0).copy()
        p[self.start] = 0.0  # START is never a successor
        if forbid_end:
            p[self.end] = 0.0
        total = p.sum()
        if total <= 0.0:
            return None
        return np.cumsum(p / total)

    def first_order(self, state: int, forbid_end: bool = False):
        key = (state, forbid_end)
        if key not in self._first:
            self._first[key] = self._cdf(self.model.first_order[state], forbid_end)
        return self._first[key]

    def second_order(self, prev: int, cur: int):
        key = (prev, cur)
        if key not in self._second:
            self._second[key] = self._cdf(self.model.second_order[prev, cur])
        return self._second[key]

    @staticmethod
    def draw(cdf: np.ndarray, rng: np.random.Generator) -> int:
        u = rng.uniform()
        return int(np.searchsorted(cdf, u * cdf[-1], side="right").clip(0, len(cdf) - 1))


def generate_walks(model: MarkovModel, count: int, rng: np.random.Generator,
                   max_walk_length: int | None = None):
    """Random-walk the noisy model into ``count`` cell paths.

    Each walk starts from START's successor distribution (END excluded for
    the first step so walks are nonempty), then follows second-order
    probabilities whenever the bigram context has positive clamped mass,
    falling back to first-order otherwise. Walks stop at END, at the walk
    cap (default ``4 * g1``), or when a state has no outgoing mass at all.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    cap = 4 * model.grid.g1 if max_walk_length is None else int(max_walk_length)
    if cap < 1:
        raise ValueError("max_walk_length must be >= 1")
    sampler = _RowSampler(model)
    start_cdf = sampler.first_order(model.start_state, forbid_end=True)
    if start_cdf is None:
        raise ValueError("model has no positive outgoing mass from START")
    walks = []
    for _ in range(count):
        cur = sampler.draw(start_cdf, rng)
        prev = model.start_state
        path = [cur]
        while len(path) < cap:
            cdf = sampler.second_order(prev, cur)
            if cdf is None:
                cdf = sampler.first_order(cur)
            if cdf is None:
                break  # dead end, treat as END
            nxt = sampler.draw(cdf, rng)
            if nxt == model.end_state:
                break
            path.append(nxt)
            prev, cur = cur, nxt
        walks.append(np.asarray(path, dtype=int))
    return walks


def to_trajectories(paths, grid: AdaptiveGrid, target_length: int,
                    rng: np.random.Generator,
                    id_prefix: str = "syn") -> TrajectoryDataset:
    """Turn cell paths into a fixed-length dataset inside the grid's bbox.

    Every cell is replaced by a uniform point inside its rectangle, then the
    point sequence is resampled to ``target_length``. A one-cell path becomes
    ``target_length`` copies of its sampled point.
    """
    paths = list(paths)
    if not paths:
        raise ValueError("no walks to convert")
    target_length = int(target_length)
    if target_length < 1:
        raise ValueError("target_length must be >= 1")
    trajs = []
    for i, path in enumerate(paths):
        if len(path) == 0:
            raise ValueError("empty walk cannot be converted")
        pts = grid.sample_points(path, rng)
        tid = f"{id_prefix}-{i:06d}"
        if len(pts) == 1:
            trajs.append(Trajectory(tid, np.repeat(pts, target_length, axis=0)))
        else:
            trajs.append(resample_to_length(Trajectory(tid, pts), target_length))
    return TrajectoryDataset(trajs, fixed_length=target_length, bbox=grid.bbox)


class MarkovSynthesizer(BaseEstimator):
    """fit/sample estimator wrapping the grid + Markov + random-walk stages.

    ``fit`` spends ``eps_total`` split as ``budget_split`` over the three
    stages and records the total as ``budget_``; ``sample`` is
    post-processing of the noisy model and spends nothing further.
    """

    def __init__(self, eps_total=10.0, budget_split=(0.2, 0.4, 0.4), g1=8, g2=4,
                 threshold=2.0, max_walk_length=None, max_states=256,
                 random_state=None):
        self.eps_total = eps_total
        self.budget_split = budget_split
        self.g1 = g1
        self.g2 = g2
        self.threshold = threshold
        self.max_walk_length = max_walk_length
        self.max_states = max_states
        self.random_state = random_state

    def _synth_config(self) -> SynthConfig:
        return SynthConfig(
            eps_total=self.eps_total, budget_split=self.budget_split,
            g1=self.g1, g2=self.g2, threshold=self.threshold,
            max_walk_length=self.max_walk_length, max_states=self.max_states,
        )

    def fit(self, X: TrajectoryDataset, y=None):
        config = self._synth_config()
        rng = as_generator(self.random_state)
        eps_grid, eps_first, eps_second = config.stage_epsilons()
        self.grid_ = build_grid(X, eps_grid, config, rng)
        self.model_ = fit_markov_dp(X, self.grid_, eps_first, eps_second, rng,
                                    max_states=config.max_states)
        # Recorded as the configured total; the three shares sum to it by the
        # split invariant, so no float drift enters the released figure.
        self.budget_ = PrivacyBudget(float(self.eps_total), 0.0,
                                     adjacency="replace-one")
        self.target_length_ = X.fixed_length if X.fixed_length is not None else max(
            len(t) for t in X)
        self._rng_ = rng
        return self

    def sample(self, n: int, random_state=None,
               target_length: int | None = None) -> TrajectoryDataset:
        if not hasattr(self, "model_"):
            raise NotFittedError("MarkovSynthesizer must be fitted before sampling")
        rng = self._rng_ if random_state is None else as_generator(random_state)
        config = self._synth_config()
        walks = generate_walks(self.model_, n, rng,
                               max_walk_length=config.walk_cap)
        length = self.target_length_ if target_length is None else int(target_length)
        return to_trajectories(walks, self.grid_, length, rng)
