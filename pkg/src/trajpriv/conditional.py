"""Differentially private conditional embeddings.

The pipeline turns a handful of uniformly subsampled trajectories into a
noisy low-dimensional conditioning signal: flatten, project through a fixed
affine map, bound each row's norm, add calibrated noise, then expand back to
the embedding width a generative model consumes. Because the projection maps
are fixed (not trained here), the privacy guarantee holds for any choice of
their weights, and everything after the noise step is post-processing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import dp
from .geo import Trajectory, TrajectoryDataset
from .validation import as_generator, check_positive

__all__ = [
    "AffineMap",
    "CondEmbedConfig",
    "CondEmbedding",
    "PrivatizedConditional",
    "sample_conditionals",
    "flatten_trajectory",
    "compress",
    "clip_rows",
    "scale_rows",
    "privatize",
    "noise_schedule_mix",
    "decompress",
    "ConditionalEmbedder",
]

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class AffineMap:
    """A fixed affine layer ``x -> x @ weights + bias``.

    Serves both as the compression map (input ``2L`` -> ``d_out``) and the
    decompression map (``d_out`` -> embedding width).
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
            raise ValueError(
                f"incompatible affine shapes: weights {w.shape}, bias {b.shape}"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("affine map entries must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def d_in(self) -> int:
        return self.weights.shape[0]

    @property
    def d_out(self) -> int:
        return self.weights.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d_in:
            raise ValueError(f"expected input width {self.d_in}, got {x.shape[-1]}")
        return x @ self.weights + self.bias

    @classmethod
    def random(cls, d_in: int, d_out: int, rng: np.random.Generator) -> "AffineMap":
        """Seeded uniform(-a, a) initialization with a = 1/sqrt(d_in)."""
        a = 1.0 / math.sqrt(d_in)
        return cls(
            weights=rng.uniform(-a, a, size=(d_in, d_out)),
            bias=rng.uniform(-a, a, size=d_out),
        )

    def to_dict(self) -> dict:
        return {
            "d_in": self.d_in,
            "d_out": self.d_out,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffineMap":
        m = cls(weights=np.array(d["weights"], dtype=float),
                bias=np.array(d["bias"], dtype=float))
        if m.d_in != int(d["d_in"]) or m.d_out != int(d["d_out"]):
            raise ValueError("declared dimensions disagree with the stored arrays")
        return m

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "AffineMap":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class CondEmbedConfig:
    """Configuration of the DP conditional-embedding mechanism.

    ``epsilon``/``delta`` parameterize the base mechanism before subsampling
    amplification. With ``worst_case_m_equals_n`` (the default) the attached
    budget conservatively ignores amplification, so the reported epsilon
    never understates the spend.
    """

    mechanism: str = "laplace"
    epsilon: float = 10.0
    delta: float | None = None
    clip_bound: float = 1.0
    d_out: int = 8
    m: int = 3000
    worst_case_m_equals_n: bool = True

    def __post_init__(self):
        if self.mechanism not in ("laplace", "gaussian", "vmf"):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        check_positive(self.epsilon, "epsilon")
        if self.delta is not None and not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must be in [0, 1)")
        check_positive(self.clip_bound, "clip_bound")
        if self.mechanism == "vmf" and self.clip_bound != 1.0:
            raise ValueError("the vmf mechanism requires clip_bound == 1")
        if self.d_out < 1:
            raise ValueError("d_out must be >= 1")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    @property
    def norm_type(self) -> str:
        return "l1" if self.mechanism == "laplace" else "l2"


@dataclass(frozen=True)
class CondEmbedding:
    """A conditioning matrix together with the privacy budget spent on it."""

    matrix: np.ndarray
    budget: dp.PrivacyBudget

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError(f"matrix must be 2-D, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.budget.adjacency != "replace-one":
            raise ValueError("conditional embeddings carry replace-one budgets")

    def export_csv(self, path) -> None:
        """Write the matrix as CSV plus a ``<path>.budget.json`` sidecar."""
        np.savetxt(path, self.matrix, delimiter=",")
        with open(f"{path}.budget.json", "w", encoding="utf-8") as fh:
            json.dump(self.budget.to_dict(), fh, indent=2)


@dataclass(frozen=True)
class PrivatizedConditional:
    """Output bundle of the end-to-end embedder: who was sampled and what came out."""

    ids: tuple
    embedding: CondEmbedding
    decompressed: CondEmbedding


def sample_conditionals(d: TrajectoryDataset, m: int, rng: np.random.Generator):
    """Uniformly sample ``m`` distinct trajectories without replacement.

    ``m`` must be fixed ahead of time, independent of the dataset's content.
    """
    m = int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    if m > len(d):
        raise ValueError(f"cannot sample m={m} from a dataset of size {len(d)}")
    idx = rng.choice(len(d), size=m, replace=False)
    return [d[int(i)] for i in idx]


def flatten_trajectory(t) -> np.ndarray:
    """Flatten an (L, 2) trajectory row-major into a length-2L vector."""
    pts = t.points if isinstance(t, Trajectory) else np.asarray(t, dtype=float)
    return pts.reshape(-1)


def compress(t, cmap: AffineMap, clip_bound: float, p: int = 2) -> np.ndarray:
    """Project a flattened trajectory through ``cmap`` and clip its p-norm."""
    x = flatten_trajectory(t)
    if x.shape[0] != cmap.d_in:
        raise ValueError(
            f"flattened trajectory has length {x.shape[0]}, map expects {cmap.d_in}"
        )
    return dp.clip_norm(cmap.apply(x), clip_bound, p=p)


def clip_rows(x: np.ndarray, clip_bound: float, p: int) -> np.ndarray:
    """Row-wise norm clipping, the matrix form of :func:`trajpriv.dp.clip_norm`."""
    x = np.asarray(x, dtype=float)
    ord_ = 1 if p == 1 else 2
    norms = np.linalg.norm(x, ord=ord_, axis=1)
    factor = np.ones_like(norms)
    over = norms > clip_bound
    factor[over] = clip_bound / norms[over]
    return x * factor[:, None]


def scale_rows(x: np.ndarray, target_norm: float) -> np.ndarray:
    """Row-wise rescaling to an exact l2 norm; rejects zero rows."""
    x = np.asarray(x, dtype=float)
    norms = np.linalg.norm(x, axis=1)
    if (norms == 0).any():
        raise ValueError("cannot scale zero rows to a fixed norm")
    return x * (target_norm / norms)[:, None]


def _check_rows_bounded(x: np.ndarray, config: CondEmbedConfig) -> None:
    if config.mechanism == "vmf":
        norms = np.linalg.norm(x, axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ValueError("vmf requires rows scaled to unit norm")
        return
    ord_ = 1 if config.norm_type == "l1" else 2
    norms = np.linalg.norm(x, ord=ord_, axis=1)
    if norms.max() > config.clip_bound * (1.0 + _NORM_TOL):
        raise ValueError(
            f"rows must be clipped to {config.norm_type} norm <= {config.clip_bound} "
            f"before privatization (max observed {norms.max():.6g})"
        )


def privatize(embeddings: np.ndarray, config: CondEmbedConfig, n: int,
              rng: np.random.Generator) -> CondEmbedding:
    """Apply the configured mechanism to pre-bounded embedding rows.

    Noise calibration under replace-one adjacency:

    * Laplace: scale ``2C / epsilon`` on each component (l1 clipping).
    * Gaussian: the analytic calibration at l2 sensitivity ``2C``.
    * VMF: each row is replaced by a unit sample with concentration
      ``epsilon / 2`` around the row's direction.

    The attached budget is the subsampling-amplified guarantee for drawing
    ``m`` of ``n`` records, or the unamplified base guarantee when the
    worst-case flag assumes ``m == n``.
    """
    x = np.asarray(embeddings, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"embeddings must be (m, d_out), got shape {x.shape}")
    m_rows, d = x.shape
    if d != config.d_out:
        raise ValueError(f"embeddings have width {d}, config expects {config.d_out}")
    if m_rows != config.m:
        raise ValueError(f"embeddings have {m_rows} rows, config expects m={config.m}")
    n = int(n)
    if n < m_rows:
        raise ValueError(f"population size n={n} smaller than the subsample m={m_rows}")
    _check_rows_bounded(x, config)

    eps = config.epsilon
    if config.mechanism == "laplace":
        noisy = x + laplace_noise_like(x, dp.laplace_scale(config.clip_bound, eps), rng)
        delta_base = 0.0
    elif config.mechanism == "gaussian":
        delta_base = config.delta
        if delta_base is None or delta_base <= 0:
            raise ValueError("the gaussian mechanism needs a positive delta")
        sigma = dp.analytic_gaussian_sigma(eps, delta_base, 2.0 * config.clip_bound)
        noisy = x + rng.normal(0.0, sigma, size=x.shape)
    else:  # vmf
        kappa = eps / 2.0
        noisy = np.stack([dp.vmf_sample(row / np.linalg.norm(row), kappa, rng)
                          for row in x])
        delta_base = 0.0

    m_eff = n if config.worst_case_m_equals_n else m_rows
    budget = dp.amplify_by_subsampling(eps, delta_base, m_eff, n)
    return CondEmbedding(matrix=noisy, budget=budget)


def laplace_noise_like(x: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    return dp.laplace_sample(x.shape, scale, rng)


def noise_schedule_mix(clean, noisy, rng: np.random.Generator,
                       mode: str = "training") -> np.ndarray:
    """Blend noisy and clean embeddings with a fresh beta ~ U(0, 1) per row.

    Training-time only: mixing clean values back in during generation would
    void the privacy guarantee, so ``mode="generation"`` is rejected.
    """
    if mode == "generation":
        raise RuntimeError(
            "noise_schedule_mix must not run during generation; the clean "
            "embedding would bypass the privacy mechanism"
        )
    if mode != "training":
        raise ValueError(f"mode must be 'training' or 'generation', got {mode!r}")
    clean = np.asarray(clean, dtype=float)
    noisy = np.asarray(noisy, dtype=float)
    if clean.shape != noisy.shape:
        raise ValueError(f"shape mismatch: {clean.shape} vs {noisy.shape}")
    if clean.ndim == 1:
        beta = rng.uniform()
        return beta * noisy + (1.0 - beta) * clean
    beta = rng.uniform(size=(clean.shape[0],) + (1,) * (clean.ndim - 1))
    return beta * noisy + (1.0 - beta) * clean


def decompress(e: CondEmbedding, dmap: AffineMap) -> CondEmbedding:
    """Expand a privatized embedding row-wise; the budget rides along unchanged."""
    if e.matrix.shape[1] != dmap.d_in:
        raise ValueError(
            f"embedding width {e.matrix.shape[1]} does not match map input {dmap.d_in}"
        )
    return CondEmbedding(matrix=dmap.apply(e.matrix), budget=e.budget)


class ConditionalEmbedder(BaseEstimator):
    """End-to-end DP conditional embedding as a fit/transform estimator.

    ``fit`` fixes the projection maps from the dataset's trajectory length
    (or takes user-provided maps); ``transform`` subsamples ``m``
    trajectories, runs the mechanism, and returns the decompressed
    ``(m, embed_dim)`` conditioning matrix. The spent budget of the last
    transform is available as ``budget_``.

    Parameters mirror :class:`CondEmbedConfig`; ``delta="auto"`` resolves to
    ``1 / n**1.1`` of the dataset being privatized.
    """

    def __init__(self, mechanism="laplace", epsilon=10.0, delta="auto",
                 clip_bound=1.0, d_out=8, m=3000, worst_case_m_equals_n=True,
                 embed_dim=512, compression_map=None, decompression_map=None,
                 random_state=None):
        self.mechanism = mechanism
        self.epsilon = epsilon
        self.delta = delta
        self.clip_bound = clip_bound
        self.d_out = d_out
        self.m = m
        self.worst_case_m_equals_n = worst_case_m_equals_n
        self.embed_dim = embed_dim
        self.compression_map = compression_map
        self.decompression_map = decompression_map
        self.random_state = random_state

    def fit(self, X: TrajectoryDataset, y=None):
        if X.fixed_length is None:
            raise ValueError("fit requires a dataset with a fixed trajectory length")
        rng = as_generator(self.random_state)
        self.d_in_ = 2 * X.fixed_length
        self.compression_map_ = (
            self.compression_map
            if self.compression_map is not None
            else AffineMap.random(self.d_in_, self.d_out, rng)
        )
        if self.compression_map_.d_in != self.d_in_:
            raise ValueError("compression map does not match the trajectory length")
        self.decompression_map_ = (
            self.decompression_map
            if self.decompression_map is not None
            else AffineMap.random(self.d_out, self.embed_dim, rng)
        )
        self._rng_ = rng
        return self

    def _config(self, delta: float | None) -> CondEmbedConfig:
        return CondEmbedConfig(
            mechanism=self.mechanism,
            epsilon=self.epsilon,
            delta=delta,
            clip_bound=self.clip_bound,
            d_out=self.d_out,
            m=self.m,
            worst_case_m_equals_n=self.worst_case_m_equals_n,
        )

    def _resolve_delta(self, n: int) -> float | None:
        if self.delta == "auto":
            return 1.0 / n**1.1 if self.mechanism == "gaussian" else 0.0
        return self.delta

    def privatize_dataset(self, X: TrajectoryDataset,
                          rng: np.random.Generator | None = None) -> PrivatizedConditional:
        if not hasattr(self, "compression_map_"):
            raise NotFittedError("ConditionalEmbedder must be fitted before use")
        rng = self._rng_ if rng is None else rng
        config = self._config(self._resolve_delta(len(X)))
        chosen = sample_conditionals(X, config.m, rng)
        flat = np.stack([flatten_trajectory(t) for t in chosen])
        projected = self.compression_map_.apply(flat)
        if config.mechanism == "vmf":
            bounded = scale_rows(projected, config.clip_bound)
        else:
            bounded = clip_rows(projected, config.clip_bound,
                                p=1 if config.norm_type == "l1" else 2)
        emb = privatize(bounded, config, n=len(X), rng=rng)
        out = decompress(emb, self.decompression_map_)
        self.budget_ = emb.budget
        return PrivatizedConditional(
            ids=tuple(t.id for t in chosen), embedding=emb, decompressed=out
        )

    def transform(self, X: TrajectoryDataset) -> np.ndarray:
        return self.privatize_dataset(X).decompressed.matrix
