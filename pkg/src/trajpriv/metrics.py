"""Utility metrics comparing a synthetic trajectory dataset against a real one.

Divergence-style scores (grid JSD, hotspot overlap, histogram JSDs, trip
error) live in [0, 1]; distances are meters except the sliced Wasserstein
distance, which is computed on bounding-box-normalized [-1, 1] coordinates.
Every metric is a pure function, deterministic given its generator.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree
from scipy.special import rel_entr

from .geo import (
    EARTH_RADIUS_M,
    BoundingBox,
    Trajectory,
    TrajectoryDataset,
    haversine_m,
    normalize_points,
)
from .validation import as_generator

__all__ = [
    "jsd",
    "grid_jsd",
    "sliced_wasserstein",
    "hausdorff_points",
    "range_query_mre",
    "hotspot_sdc",
    "hungarian_assignment",
    "hungarian_match",
    "trajectory_cost_matrix",
    "traj_hausdorff",
    "haversine_norm",
    "dtw",
    "trajectory_ttds",
    "trajectory_diameters",
    "ttd_jsd",
    "diameter_jsd",
    "trip_error",
    "MetricReport",
    "EvalConfig",
    "evaluate_pair",
]

_LN2 = math.log(2.0)

# Elements per broadcasted haversine block; small enough to stay cache-resident.
_CHUNK_ELEMS = 200_000


# ---------------------------------------------------------------------------
# shared primitives


def jsd(p, q) -> float:
    """Jensen-Shannon divergence in bits, on auto-normalized count vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"distributions must be 1-D and equal-size, got {p.shape} vs {q.shape}")
    if (p < 0).any() or (q < 0).any():
        raise ValueError("distributions must be nonnegative")
    ps, qs = p.sum(), q.sum()
    if ps <= 0 or qs <= 0:
        raise ValueError("distributions must have positive total mass")
    p, q = p / ps, q / qs
    m = 0.5 * (p + q)
    val = 0.5 * (rel_entr(p, m).sum() + rel_entr(q, m).sum()) / _LN2
    return float(np.clip(val, 0.0, 1.0))


def _as_points(x) -> np.ndarray:
    if isinstance(x, TrajectoryDataset):
        return x.all_points()
    pts = np.asarray(x, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) point array, got shape {pts.shape}")
    return pts


def _grid_counts(points: np.ndarray, bbox: BoundingBox, g: int) -> np.ndarray:
    counts, _, _ = np.histogram2d(
        points[:, 0], points[:, 1], bins=g,
        range=[[bbox.lat_min, bbox.lat_max], [bbox.lon_min, bbox.lon_max]],
    )
    return counts


def _need_bbox(bbox, *datasets) -> BoundingBox:
    if bbox is not None:
        return bbox
    for d in datasets:
        if isinstance(d, TrajectoryDataset) and d.bbox is not None:
            return d.bbox
    raise ValueError("no bounding box available; pass bbox= or attach one to a dataset")


def _to_xyz(points: np.ndarray) -> np.ndarray:
    """Embed lat/lon onto the unit sphere; chord order equals great-circle order."""
    lat = np.radians(points[:, 0])
    lon = np.radians(points[:, 1])
    cl = np.cos(lat)
    return np.column_stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)])


# ---------------------------------------------------------------------------
# point-distribution metrics


def grid_jsd(real, syn, g: int = 64, bbox: BoundingBox | None = None) -> float:
    """JSD between point histograms on a g x g grid over the shared bbox."""
    bbox = _need_bbox(bbox, real, syn)
    rp, sp = _as_points(real), _as_points(syn)
    if len(rp) == 0 or len(sp) == 0:
        raise ValueError("grid_jsd requires nonempty datasets")
    hr = _grid_counts(rp, bbox, g).reshape(-1)
    hs = _grid_counts(sp, bbox, g).reshape(-1)
    return jsd(hr, hs)


def sliced_wasserstein(real_pts, syn_pts, n_projections: int = 100,
                       rng: np.random.Generator | None = None) -> float:
    """Mean 1-D Wasserstein distance over random projection directions.

    Expects points in normalized coordinates. Unequal sample sizes are
    equalized by uniformly subsampling the larger set.
    """
    rng = as_generator(rng)
    a = _as_points(real_pts)
    b = _as_points(syn_pts)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("sliced_wasserstein requires nonempty point sets")
    if n_projections < 1:
        raise ValueError("n_projections must be >= 1")
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n_projections)
    if len(a) != len(b):
        if len(a) > len(b):
            a = a[rng.choice(len(a), size=len(b), replace=False)]
        else:
            b = b[rng.choice(len(b), size=len(a), replace=False)]
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    pa = np.sort(a @ dirs.T, axis=0)
    pb = np.sort(b @ dirs.T, axis=0)
    return float(np.abs(pa - pb).mean())


def hausdorff_points(a, b, algorithm: str = "auto") -> float:
    """Symmetric Hausdorff distance in meters between two point sets.

    Exact: either a chunked O(n m) sweep or KD-tree nearest neighbours on
    the unit-sphere embedding, whose chord metric is monotone in the
    great-circle distance. Final distances always come from the haversine
    formula, so both paths agree.
    """
    a, b = _as_points(a), _as_points(b)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("hausdorff_points requires nonempty point sets")
    if algorithm not in ("auto", "brute", "tree"):
        raise ValueError("algorithm must be 'auto', 'brute', or 'tree'")
    if algorithm == "auto":
        algorithm = "brute" if len(a) * len(b) <= 4_000_000 else "tree"
    if algorithm == "brute":
        return _hausdorff_brute(a, b)
    return _hausdorff_tree(a, b)


def _hausdorff_brute(a: np.ndarray, b: np.ndarray) -> float:
    chunk = max(1, int(4_000_000 / max(len(b), 1)))
    sup_a = 0.0
    min_b = np.full(len(b), np.inf)
    for start in range(0, len(a), chunk):
        part = a[start:start + chunk]
        d = haversine_m(part[:, None, 0], part[:, None, 1], b[None, :, 0], b[None, :, 1])
        sup_a = max(sup_a, float(d.min(axis=1).max()))
        np.minimum(min_b, d.min(axis=0), out=min_b)
    return max(sup_a, float(min_b.max()))


def _hausdorff_tree(a: np.ndarray, b: np.ndarray) -> float:
    def directed(src, dst):
        tree = cKDTree(_to_xyz(dst))
        _, idx = tree.query(_to_xyz(src), k=1, workers=-1)
        d = haversine_m(src[:, 0], src[:, 1], dst[idx, 0], dst[idx, 1])
        return float(d.max())

    return max(directed(a, b), directed(b, a))


def range_query_mre(real_pts, syn_pts, bbox: BoundingBox, n_queries: int = 200,
                    radii=(50.0, 100.0, 200.0, 500.0, 1000.0),
                    rng: np.random.Generator | None = None,
                    smoothing_frac: float = 0.001) -> float:
    """Mean relative error of radius-count queries at uniform locations.

    Per query and radius the error is ``|c_syn - c_real| / max(c_real, s)``
    with smoothing ``s = smoothing_frac * |real_pts|`` so zero-count queries
    stay defined.
    """
    rng = as_generator(rng)
    rp = _as_points(real_pts)
    sp = _as_points(syn_pts)
    if len(rp) == 0:
        raise ValueError("range_query_mre requires a nonempty real point set")
    lat = rng.uniform(bbox.lat_min, bbox.lat_max, size=n_queries)
    lon = rng.uniform(bbox.lon_min, bbox.lon_max, size=n_queries)
    queries = _to_xyz(np.column_stack([lat, lon]))
    tree_r = cKDTree(_to_xyz(rp))
    tree_s = cKDTree(_to_xyz(sp)) if len(sp) else None
    s = smoothing_frac * len(rp)
    errs = []
    for r in radii:
        chord = 2.0 * math.sin(r / (2.0 * EARTH_RADIUS_M))
        c_real = np.asarray(tree_r.query_ball_point(queries, chord, return_length=True),
                            dtype=float)
        if tree_s is None:
            c_syn = np.zeros(n_queries)
        else:
            c_syn = np.asarray(tree_s.query_ball_point(queries, chord, return_length=True),
                               dtype=float)
        errs.append(np.abs(c_syn - c_real) / np.maximum(c_real, s))
    return float(np.mean(errs))


def hotspot_sdc(real_pts, syn_pts, bbox: BoundingBox, g: int = 128,
                percentile: float = 95.0) -> float:
    """Sorensen-Dice overlap of high-density cells.

    A cell is a hotspot when its count strictly exceeds the given percentile
    of the nonzero cell counts. If neither side has any hotspot the overlap
    is defined as 0 and a warning is emitted.
    """
    rp, sp = _as_points(real_pts), _as_points(syn_pts)
    if len(rp) == 0 or len(sp) == 0:
        raise ValueError("hotspot_sdc requires nonempty point sets")

    def hotspots(pts):
        counts = _grid_counts(pts, bbox, g).reshape(-1)
        nz = counts[counts > 0]
        if len(nz) == 0:
            return np.zeros_like(counts, dtype=bool)
        return counts > np.percentile(nz, percentile)

    hr, hs = hotspots(rp), hotspots(sp)
    denom = int(hr.sum()) + int(hs.sum())
    if denom == 0:
        warnings.warn("no hotspot cells on either side; overlap defined as 0",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    return float(2.0 * int((hr & hs).sum()) / denom)


# ---------------------------------------------------------------------------
# trajectory matching and per-trajectory distances


def _stacks(real: TrajectoryDataset, syn: TrajectoryDataset):
    if real.fixed_length is None or syn.fixed_length is None:
        raise ValueError("paired trajectory metrics need fixed-length datasets")
    if real.fixed_length != syn.fixed_length:
        raise ValueError(
            f"length mismatch: {real.fixed_length} vs {syn.fixed_length}"
        )
    return real.stacked(), syn.stacked()


def trajectory_cost_matrix(real: TrajectoryDataset, syn: TrajectoryDataset) -> np.ndarray:
    """Cost matrix of mean per-index haversine distances, shape (n_real, n_syn)."""
    a, b = _stacks(real, syn)
    n, m = len(a), len(b)
    cost = np.empty((n, m))
    chunk = max(1, int(_CHUNK_ELEMS / max(m * a.shape[1], 1)))
    for start in range(0, n, chunk):
        part = a[start:start + chunk]
        d = haversine_m(part[:, None, :, 0], part[:, None, :, 1],
                        b[None, :, :, 0], b[None, :, :, 1])
        cost[start:start + chunk] = d.mean(axis=2)
    return cost


def hungarian_assignment(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimum-total-cost perfect matching on a square cost matrix."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    rows, cols = linear_sum_assignment(cost)
    return cols, float(cost[rows, cols].sum())


def hungarian_match(real: TrajectoryDataset, syn: TrajectoryDataset) -> tuple[np.ndarray, float]:
    """Optimally pair real and synthetic trajectories.

    Returns ``(assignment, total_cost)`` where synthetic trajectory
    ``assignment[i]`` is matched to real trajectory ``i``.
    """
    if len(real) != len(syn):
        raise ValueError(f"datasets must have equal counts, got {len(real)} vs {len(syn)}")
    return hungarian_assignment(trajectory_cost_matrix(real, syn))


@njit(cache=True)
def _dtw_accumulate(d):
    n1, n2 = d.shape
    acc = np.empty((n1, n2))
    acc[0, 0] = d[0, 0]
    for j in range(1, n2):
        acc[0, j] = acc[0, j - 1] + d[0, j]
    for i in range(1, n1):
        acc[i, 0] = acc[i - 1, 0] + d[i, 0]
        for j in range(1, n2):
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = d[i, j] + best
    return acc[n1 - 1, n2 - 1]


@njit(cache=True)
def _dtw_batch(mats):
    out = np.empty(mats.shape[0])
    for k in range(mats.shape[0]):
        out[k] = _dtw_accumulate(mats[k])
    return out


def _traj_points(t) -> np.ndarray:
    if isinstance(t, Trajectory):
        return t.points
    pts = np.asarray(t, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("expected a Trajectory or an (L, 2) array")
    if len(pts) == 0:
        raise ValueError("trajectory must be nonempty")
    return pts


def _cross_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return haversine_m(a[:, None, 0], a[:, None, 1], b[None, :, 0], b[None, :, 1])


def traj_hausdorff(a, b) -> float:
    """Hausdorff distance in meters between two trajectories' point sets."""
    pa, pb = _traj_points(a), _traj_points(b)
    d = _cross_matrix(pa, pb)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def haversine_norm(a, b) -> float:
    """Mean per-index haversine distance; requires equal lengths."""
    pa, pb = _traj_points(a), _traj_points(b)
    if len(pa) != len(pb):
        raise ValueError(f"length mismatch: {len(pa)} vs {len(pb)}")
    return float(haversine_m(pa[:, 0], pa[:, 1], pb[:, 0], pb[:, 1]).mean())


def dtw(a, b) -> float:
    """Dynamic-time-warping alignment cost with haversine ground distance.

    Unwindowed; both trajectories may have different lengths.
    """
    pa, pb = _traj_points(a), _traj_points(b)
    return float(_dtw_accumulate(_cross_matrix(pa, pb)))


def _paired_distances(a: np.ndarray, b: np.ndarray):
    """Mean hd/haversine/dtw over matched trajectory pairs of equal length."""
    n, length = a.shape[0], a.shape[1]
    hav_elem = haversine_m(a[:, :, 0], a[:, :, 1], b[:, :, 0], b[:, :, 1])
    hav_mean = hav_elem.mean(axis=1)
    hd = np.empty(n)
    dtw_vals = np.empty(n)
    chunk = max(1, int(_CHUNK_ELEMS / max(length * length, 1)))
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        d = haversine_m(a[sl, :, None, 0], a[sl, :, None, 1],
                        b[sl, None, :, 0], b[sl, None, :, 1])
        hd[sl] = np.maximum(d.min(axis=2).max(axis=1), d.min(axis=1).max(axis=1))
        dtw_vals[sl] = _dtw_batch(d)
    return float(hd.mean()), float(hav_mean.mean()), float(dtw_vals.mean())


# ---------------------------------------------------------------------------
# trajectory-statistics metrics


def trajectory_ttds(d: TrajectoryDataset) -> np.ndarray:
    """Total traveled distance (sum of consecutive hops) per trajectory, meters."""
    if d.fixed_length is not None:
        pts = d.stacked()
        return haversine_m(pts[:, :-1, 0], pts[:, :-1, 1],
                           pts[:, 1:, 0], pts[:, 1:, 1]).sum(axis=1)
    return np.array([
        haversine_m(t.points[:-1, 0], t.points[:-1, 1],
                    t.points[1:, 0], t.points[1:, 1]).sum() if len(t) > 1 else 0.0
        for t in d
    ])


def trajectory_diameters(d: TrajectoryDataset) -> np.ndarray:
    """Maximum pairwise point distance per trajectory, meters."""
    if d.fixed_length is not None:
        pts = d.stacked()
        length = pts.shape[1]
        out = np.empty(len(d))
        chunk = max(1, int(_CHUNK_ELEMS / max(length * length, 1)))
        for start in range(0, len(d), chunk):
            sl = slice(start, min(start + chunk, len(d)))
            m = haversine_m(pts[sl, :, None, 0], pts[sl, :, None, 1],
                            pts[sl, None, :, 0], pts[sl, None, :, 1])
            out[sl] = m.max(axis=(1, 2))
        return out
    out = np.empty(len(d))
    for i, t in enumerate(d):
        if len(t) == 1:
            out[i] = 0.0
        else:
            out[i] = _cross_matrix(t.points, t.points).max()
    return out


def _histogram_jsd(real_vals: np.ndarray, syn_vals: np.ndarray, bins: int) -> float:
    lo = min(real_vals.min(), syn_vals.min())
    hi = max(real_vals.max(), syn_vals.max())
    if hi <= lo:
        return 0.0  # all values identical on both sides
    hr, _ = np.histogram(real_vals, bins=bins, range=(lo, hi))
    hs, _ = np.histogram(syn_vals, bins=bins, range=(lo, hi))
    return jsd(hr, hs)


def ttd_jsd(real: TrajectoryDataset, syn: TrajectoryDataset, bins: int = 55) -> float:
    """JSD between total-traveled-distance histograms (shared equal-width bins)."""
    if len(real) == 0 or len(syn) == 0:
        raise ValueError("ttd_jsd requires nonempty datasets")
    return _histogram_jsd(trajectory_ttds(real), trajectory_ttds(syn), bins)


def diameter_jsd(real: TrajectoryDataset, syn: TrajectoryDataset, bins: int = 55) -> float:
    """JSD between trajectory-diameter histograms (shared equal-width bins)."""
    if len(real) == 0 or len(syn) == 0:
        raise ValueError("diameter_jsd requires nonempty datasets")
    return _histogram_jsd(trajectory_diameters(real), trajectory_diameters(syn), bins)


def _start_end_distribution(d: TrajectoryDataset, bbox: BoundingBox, g: int) -> np.ndarray:
    starts = np.stack([t.points[0] for t in d])
    ends = np.stack([t.points[-1] for t in d])

    def cell_index(pts):
        r = np.clip(((pts[:, 0] - bbox.lat_min) / bbox.lat_span * g).astype(int), 0, g - 1)
        c = np.clip(((pts[:, 1] - bbox.lon_min) / bbox.lon_span * g).astype(int), 0, g - 1)
        return r * g + c

    pair = cell_index(starts) * (g * g) + cell_index(ends)
    return np.bincount(pair, minlength=g ** 4).astype(float)


def trip_error(real: TrajectoryDataset, syn: TrajectoryDataset, g: int = 16,
               bbox: BoundingBox | None = None) -> float:
    """JSD between flattened start-cell/end-cell pair distributions."""
    if len(real) == 0 or len(syn) == 0:
        raise ValueError("trip_error requires nonempty datasets")
    bbox = _need_bbox(bbox, real, syn)
    return jsd(_start_end_distribution(real, bbox, g),
               _start_end_distribution(syn, bbox, g))


# ---------------------------------------------------------------------------
# orchestration


REPORT_COLUMNS = (
    "jsd", "swd", "hd_points", "range_mre", "hotspot_sdc",
    "hd_traj", "haversine_norm", "dtw", "ttd_jsd", "diameter_jsd", "trip_error",
)

# Conventions the numbers depend on; attached to every serialized report.
REPORT_CONVENTIONS = {
    "jsd_log_base": 2,
    "swd_coordinates": "bbox-normalized [-1, 1] per axis",
    "swd_projections_default": 100,
    "range_mre_smoothing": "max(c_real, 0.001 * n_real_points)",
    "histogram_bins_range": "combined min..max of both datasets",
    "hotspot_threshold": "strictly above the percentile of nonzero cells",
    "distances_unit": "meters",
}

_DIVERGENCE_FIELDS = ("jsd", "hotspot_sdc", "ttd_jsd", "diameter_jsd", "trip_error")


@dataclass(frozen=True)
class MetricReport:
    """The eleven utility scores for one (real, synthetic) dataset pair."""

    jsd: float
    swd: float
    hd_points: float
    range_mre: float
    hotspot_sdc: float
    hd_traj: float
    haversine_norm: float
    dtw: float
    ttd_jsd: float
    diameter_jsd: float
    trip_error: float
    warnings: tuple = ()

    def __post_init__(self):
        for name in REPORT_COLUMNS:
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
            if v < 0:
                raise ValueError(f"{name} must be >= 0, got {v}")
        for name in _DIVERGENCE_FIELDS:
            if getattr(self, name) > 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {name: float(getattr(self, name)) for name in REPORT_COLUMNS}

    def to_json(self, path=None, case_id: str | None = None) -> str:
        doc = {
            **({"case_id": case_id} if case_id is not None else {}),
            "metrics": self.to_dict(),
            "conventions": REPORT_CONVENTIONS,
            "warnings": list(self.warnings),
        }
        text = json.dumps(doc, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def csv_row(self, case_id: str) -> str:
        return ",".join([case_id] + [repr(float(getattr(self, c))) for c in REPORT_COLUMNS])


@dataclass(frozen=True)
class EvalConfig:
    """Grid sizes, sample counts, and the seed driving evaluate_pair."""

    bbox: BoundingBox | None = None
    grid_size: int = 64
    hotspot_grid: int = 128
    hotspot_percentile: float = 95.0
    trip_grid: int = 16
    hist_bins: int = 55
    swd_projections: int = 100
    point_sample: int = 100_000
    range_queries: int = 200
    range_radii: tuple = (50.0, 100.0, 200.0, 500.0, 1000.0)
    seed: int = 0


def _twin_subsample(points: np.ndarray, limit: int, seed_key) -> np.ndarray:
    """Subsample with a generator derived only from the seed key.

    Both sides of an evaluation use the same key, so identical datasets are
    reduced to identical subsets and all identity metrics stay exactly zero.
    """
    if len(points) <= limit:
        return points
    rng = np.random.default_rng(seed_key)
    return points[rng.choice(len(points), size=limit, replace=False)]


def _resolve_pairing(pairing, n: int, real, syn) -> np.ndarray:
    if pairing is None:
        assignment, _ = hungarian_match(real, syn)
        return assignment
    if isinstance(pairing, str):
        if pairing != "identity":
            raise ValueError(f"unknown pairing {pairing!r}; use 'identity', None, or an array")
        return np.arange(n)
    arr = np.asarray(pairing, dtype=int)
    if arr.shape != (n,) or sorted(arr.tolist()) != list(range(n)):
        raise ValueError("pairing must be a permutation of the synthetic indices")
    return arr


def evaluate_pair(real: TrajectoryDataset, syn: TrajectoryDataset,
                  config: EvalConfig | None = None, pairing=None) -> MetricReport:
    """Compute all eleven utility metrics for a (real, synthetic) pair.

    Paired trajectory metrics use the supplied pairing, or a fresh Hungarian
    matching when ``pairing`` is None. Deterministic given ``config.seed``.
    """
    config = config or EvalConfig()
    if len(real) == 0 or len(syn) == 0:
        raise ValueError("evaluate_pair requires nonempty datasets")
    bbox = _need_bbox(config.bbox, real, syn)
    a, b = _stacks(real, syn)
    if len(real) != len(syn):
        raise ValueError("evaluate_pair requires equal trajectory counts")

    real_pts = real.all_points()
    syn_pts = syn.all_points()
    seed = config.seed

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")

        grid_score = grid_jsd(real_pts, syn_pts, g=config.grid_size, bbox=bbox)

        sub_r = _twin_subsample(real_pts, config.point_sample, [seed, 11])
        sub_s = _twin_subsample(syn_pts, config.point_sample, [seed, 11])
        hd_pts = hausdorff_points(sub_r, sub_s)
        swd = sliced_wasserstein(
            normalize_points(sub_r, bbox), normalize_points(sub_s, bbox),
            n_projections=config.swd_projections,
            rng=np.random.default_rng([seed, 13]),
        )
        mre = range_query_mre(real_pts, syn_pts, bbox,
                              n_queries=config.range_queries,
                              radii=config.range_radii,
                              rng=np.random.default_rng([seed, 17]))
        sdc = hotspot_sdc(real_pts, syn_pts, bbox, g=config.hotspot_grid,
                          percentile=config.hotspot_percentile)

        assignment = _resolve_pairing(pairing, len(real), real, syn)
        hd_t, hav_n, dtw_m = _paired_distances(a, b[assignment])

        ttd = ttd_jsd(real, syn, bins=config.hist_bins)
        diam = diameter_jsd(real, syn, bins=config.hist_bins)
        te = trip_error(real, syn, g=config.trip_grid, bbox=bbox)

    return MetricReport(
        jsd=grid_score, swd=swd, hd_points=hd_pts, range_mre=mre, hotspot_sdc=sdc,
        hd_traj=hd_t, haversine_norm=hav_n, dtw=dtw_m,
        ttd_jsd=ttd, diameter_jsd=diam, trip_error=te,
        warnings=tuple(str(w.message) for w in caught),
    )
