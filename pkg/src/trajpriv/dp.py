"""Calibrated noise primitives and privacy accounting.

Implements norm clipping/scaling, the Laplace, analytic Gaussian, and
von Mises-Fisher mechanisms, and amplification-by-subsampling arithmetic.
Every stochastic function takes an explicit ``numpy.random.Generator`` so
callers own their randomness; real deployments must seed from OS entropy,
since differential privacy is only meaningful with unpredictable noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.stats import norm as _norm

from .validation import check_positive, check_vector

__all__ = [
    "ADJACENCIES",
    "PrivacyBudget",
    "NoiseSpec",
    "clip_norm",
    "scale_to_norm",
    "laplace_scale",
    "laplace_sample",
    "gaussian_curve_delta",
    "analytic_gaussian_sigma",
    "classical_gaussian_sigma",
    "vmf_sample",
    "amplify_by_subsampling",
    "calibrate_base_epsilon",
]

ADJACENCIES = ("replace-one", "add-or-remove")
_MECHANISMS = ("laplace", "gaussian", "vmf")


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) guarantee with its adjacency relation and unit.

    ``epsilon`` may be 0 (a mechanism that never touches the protected data)
    or ``inf`` (no guarantee); delta lies in [0, 1).
    """

    epsilon: float
    delta: float = 0.0
    adjacency: str = "replace-one"
    unit: str = "trajectory"

    def __post_init__(self):
        if math.isnan(self.epsilon) or self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"delta must be in [0, 1), got {self.delta}")
        if self.adjacency not in ADJACENCIES:
            raise ValueError(f"adjacency must be one of {ADJACENCIES}")
        if self.unit != "trajectory":
            raise ValueError("only trajectory-level budgets are supported")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PrivacyBudget":
        return cls(
            epsilon=float(d["epsilon"]),
            delta=float(d.get("delta", 0.0)),
            adjacency=d.get("adjacency", "replace-one"),
            unit=d.get("unit", "trajectory"),
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Mechanism name, noise scale, norm type, and clip bound, validated.

    Laplace works on the l1 ball, Gaussian and VMF on the l2 ball, and VMF
    additionally requires unit vectors (clip bound exactly 1).
    """

    mechanism: str
    scale: float
    norm_type: str
    clip_bound: float

    def __post_init__(self):
        if self.mechanism not in _MECHANISMS:
            raise ValueError(f"mechanism must be one of {_MECHANISMS}")
        check_positive(self.scale, "scale", allow_inf=False)
        check_positive(self.clip_bound, "clip_bound")
        if self.mechanism == "laplace" and self.norm_type != "l1":
            raise ValueError("Laplace requires norm_type='l1'")
        if self.mechanism in ("gaussian", "vmf") and self.norm_type != "l2":
            raise ValueError(f"{self.mechanism} requires norm_type='l2'")
        if self.mechanism == "vmf" and self.clip_bound != 1.0:
            raise ValueError("vmf requires clip_bound == 1 (unit vectors)")


def clip_norm(v, clip_bound: float, p: int = 2) -> np.ndarray:
    """Scale ``v`` down so its p-norm is at most ``clip_bound``.

    Vectors already inside the ball are returned unchanged; the zero vector
    is a fixed point. Idempotent and never norm-increasing.
    """
    v = check_vector(v)
    check_positive(clip_bound, "clip_bound")
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    n = np.linalg.norm(v, ord=p)
    if n <= clip_bound:
        return v.copy()
    return v * (clip_bound / n)


def scale_to_norm(v, target_norm: float) -> np.ndarray:
    """Rescale ``v`` so its l2 norm equals ``target_norm`` exactly."""
    v = check_vector(v)
    check_positive(target_norm, "target_norm")
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot scale the zero vector: direction undefined")
    return v * (target_norm / n)


def laplace_scale(clip_bound: float, epsilon: float) -> float:
    """Laplace scale for a clipped vector under replace-one adjacency.

    Replacing one record moves the clipped value by at most ``2 * clip_bound``
    in l1, so the scale is ``2 * clip_bound / epsilon``.
    """
    check_positive(clip_bound, "clip_bound")
    check_positive(epsilon, "epsilon", allow_inf=True)
    return 2.0 * clip_bound / epsilon


def laplace_sample(shape, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Draw iid Laplace(0, scale) noise; scale 0 yields exact zeros."""
    if scale < 0:
        raise ValueError(f"scale must be >= 0, got {scale}")
    if scale == 0.0:
        return np.zeros(shape, dtype=float)
    return rng.laplace(loc=0.0, scale=scale, size=shape)


def gaussian_curve_delta(sigma: float, epsilon: float, sensitivity: float = 1.0) -> float:
    """Exact delta of the Gaussian mechanism at noise level ``sigma``.

    Evaluates Phi(s/(2*sigma) - eps*sigma/s) - e^eps * Phi(-s/(2*sigma) - eps*sigma/s)
    with the second term computed in log space so large epsilon stays stable.
    """
    check_positive(sigma, "sigma")
    check_positive(sensitivity, "sensitivity")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    u = sigma / sensitivity
    a = 1.0 / (2.0 * u) - epsilon * u
    b = -1.0 / (2.0 * u) - epsilon * u
    return float(_norm.cdf(a) - math.exp(min(epsilon + _norm.logcdf(b), 0.0)))


_SIGMA_LO = 1e-9
_SIGMA_HI = 1e9


def analytic_gaussian_sigma(epsilon: float, delta: float, sensitivity: float = 1.0) -> float:
    """Smallest sigma giving (epsilon, delta)-DP for an l2-sensitivity-bounded query.

    The privacy curve delta(sigma) is continuous and strictly decreasing, so
    the optimum is found by bisection over sigma/sensitivity in
    [1e-9, 1e9] down to 1e-12 relative width. This is always at or below the
    classical ``sensitivity * sqrt(2 ln(1.25/delta)) / epsilon`` calibration.
    """
    check_positive(epsilon, "epsilon")
    check_positive(sensitivity, "sensitivity")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")

    def feasible(u: float) -> bool:
        return gaussian_curve_delta(u, epsilon, 1.0) <= delta

    lo, hi = _SIGMA_LO, _SIGMA_HI
    if not feasible(hi):
        raise ValueError("no feasible sigma in the search bracket")
    if feasible(lo):
        return lo * sensitivity
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi * sensitivity


def classical_gaussian_sigma(epsilon: float, delta: float, sensitivity: float = 1.0) -> float:
    """Textbook Gaussian calibration, valid for epsilon < 1."""
    check_positive(epsilon, "epsilon")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def _householder_to(mu: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Reflect rows of ``x`` so the first basis vector maps onto ``mu``."""
    d = mu.shape[0]
    e1 = np.zeros(d)
    e1[0] = 1.0
    u = e1 - mu
    nu = np.linalg.norm(u)
    if nu < 1e-12:
        return x
    u = u / nu
    return x - 2.0 * np.outer(x @ u, u)


def vmf_sample(mu, kappa: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Sample unit vectors from a von Mises-Fisher distribution.

    Uses Wood's rejection scheme: the component along ``mu`` is drawn from
    the marginal via a beta-envelope acceptance step, the tangent component
    uniformly on the orthogonal sphere, and the frame is rotated onto ``mu``
    with a Householder reflection. ``kappa = 0`` reduces to the uniform
    distribution on the sphere. Returns shape ``(d,)`` when ``size`` is None,
    else ``(size, d)``; every output has unit norm.
    """
    mu = check_vector(mu, "mu")
    d = mu.shape[0]
    if d < 2:
        raise ValueError("vmf_sample requires dimension >= 2")
    if abs(np.linalg.norm(mu) - 1.0) > 1e-9:
        raise ValueError("mu must be a unit vector (within 1e-9)")
    if kappa < 0:
        raise ValueError(f"kappa must be >= 0, got {kappa}")
    n = 1 if size is None else int(size)
    if n < 1:
        raise ValueError("size must be >= 1")

    dim = d - 1
    # Wood's envelope constants; b is written in its cancellation-free form.
    b = dim / (2.0 * kappa + math.sqrt(4.0 * kappa**2 + dim**2))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + dim * math.log1p(-x0**2)

    w = np.empty(n)
    have = 0
    rounds = 0
    while have < n:
        rounds += 1
        if rounds > 1000:
            raise RuntimeError("vmf rejection sampler failed to converge")
        m = max(n - have, 256)
        z = rng.beta(dim / 2.0, dim / 2.0, size=m)
        cand = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=m)
        ok = kappa * cand + dim * np.log1p(-x0 * cand) - c >= np.log(u)
        take = min(int(ok.sum()), n - have)
        w[have:have + take] = cand[ok][:take]
        have += take

    tangent = rng.standard_normal((n, dim))
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    frame = np.empty((n, d))
    frame[:, 0] = w
    frame[:, 1:] = np.sqrt(np.maximum(1.0 - w**2, 0.0))[:, None] * tangent
    out = _householder_to(mu, frame)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out[0] if size is None else out


def _check_m_n(m: int, n: int) -> tuple[int, int]:
    m, n = int(m), int(n)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if m > n:
        raise ValueError(f"m={m} exceeds the dataset size n={n}")
    return m, n


def amplify_by_subsampling(epsilon: float, delta: float, m: int, n: int) -> PrivacyBudget:
    """Privacy after running a replace-one DP mechanism on a uniform m-of-n subsample.

    Returns ``(log(1 + (m/n) (e^eps - 1)), (m/n) delta)``. The ``m == n``
    case short-circuits to the input budget so no rounding creeps in.
    """
    if math.isnan(epsilon) or epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must be in [0, 1), got {delta}")
    m, n = _check_m_n(m, n)
    if m == n:
        return PrivacyBudget(epsilon, delta, adjacency="replace-one")
    q = m / n
    if math.isinf(epsilon):
        eps_out = math.inf
    elif epsilon > 700.0:
        # e^eps overflows; log(1 + q e^eps - q) is eps + log(q) to double precision
        eps_out = epsilon + math.log(q)
    else:
        eps_out = math.log1p(q * math.expm1(epsilon))
    return PrivacyBudget(eps_out, q * delta, adjacency="replace-one")


def calibrate_base_epsilon(target_epsilon: float, m: int, n: int) -> float:
    """Base epsilon whose m-of-n amplification lands on ``target_epsilon``.

    Closed-form inverse of :func:`amplify_by_subsampling`:
    ``log(1 + (n/m) (e^target - 1))``.
    """
    check_positive(target_epsilon, "target_epsilon")
    m, n = _check_m_n(m, n)
    if m == n:
        return float(target_epsilon)
    q = n / m
    if target_epsilon > 700.0:
        return target_epsilon + math.log(q)
    return math.log1p(q * math.expm1(target_epsilon))
