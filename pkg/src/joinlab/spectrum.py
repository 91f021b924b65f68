"""Growth rates of orbit counting functions.

Every exponent here is the abscissa of convergence of a series
``sum exp(-s f(mu(gamma)))`` for some score ``f``; at finite depth it is
estimated as the slope of ``log N_f(T)`` against ``T``, where
``N_f(T) = #{gamma : f(mu(gamma)) < T}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .orbit import OrbitDataset

MIN_COUNT = 200
GRID_SIZE = 64
UPPER_FRACTION = 0.9
MIN_SAMPLES = 500
MIN_GRID_POINTS = 5

Score = Callable[[np.ndarray], np.ndarray]


class InsufficientDataError(ValueError):
    """Too few orbit points to support a regression."""


class DualConeError(ValueError):
    """A functional is not positive on the estimated limit cone."""


@dataclass(frozen=True)
class ExponentEstimate:
    value: float
    stderr: float
    window: tuple[float, float]
    samples: int
    low_confidence: bool = False
    # start of the window moved by one grid step changes the slope by < 3 stderr
    window_robust: bool = True
    eps: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __float__(self) -> float:
        return float(self.value)

    def to_json(self) -> dict:
        out = {
            "value": self.value,
            "stderr": self.stderr,
            "window": list(self.window),
            "samples": self.samples,
            "low_confidence": self.low_confidence,
            "window_robust": self.window_robust,
        }
        if self.eps is not None:
            out["eps"] = self.eps
        out.update(self.meta)
        return out


def _sorted_values(data_or_values, f: Score | None) -> np.ndarray:
    if isinstance(data_or_values, OrbitDataset):
        if f is None:
            raise TypeError("a score function is required for a dataset")
        vals = f(data_or_values.mu)
    else:
        vals = np.asarray(data_or_values, dtype=np.float64)
    return np.sort(np.asarray(vals, dtype=np.float64))


def counting_function(data, f: Score | None, grid) -> tuple[np.ndarray, np.ndarray]:
    """(T, N(T)) with N(T) the number of points whose score is strictly below T."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    s = _sorted_values(data, f)
    return grid, np.searchsorted(s, grid, side="left").astype(np.int64)


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xm = x - x.mean()
    sxx = float(xm @ xm)
    slope = float(xm @ (y - y.mean())) / sxx
    resid = y - y.mean() - slope * xm
    dof = len(x) - 2
    stderr = math.sqrt(max(float(resid @ resid), 0.0) / dof / sxx) if dof > 0 else math.inf
    return slope, stderr


def abscissa_from_values(values, horizon: float = math.inf, *, min_count: int = MIN_COUNT,
                         grid_size: int = GRID_SIZE, upper_fraction: float = UPPER_FRACTION,
                         min_samples: int = MIN_SAMPLES, min_window: float = 0.0) -> ExponentEstimate:
    """Slope of log N(T) over [T0, T1].

    T0 is the first score value with at least ``min_count`` points strictly
    below it.  T1 is the smaller of ``upper_fraction * max`` and the
    completeness horizon of the enumeration.  A window shorter than
    ``min_window`` is rejected.
    """
    s = np.sort(np.asarray(values, dtype=np.float64))
    n = len(s)
    if n <= min_count:
        raise InsufficientDataError(f"{n} points, need more than {min_count}")
    idx = int(np.searchsorted(s, s[min_count], side="left"))
    if idx < min_count:
        # ties at s[min_count]: move to the next distinct value
        j = int(np.searchsorted(s, s[min_count], side="right"))
        if j >= n:
            raise InsufficientDataError("score values are degenerate")
        t0 = float(s[j])
    else:
        t0 = float(s[min_count])
    t1 = min(upper_fraction * float(s[-1]), float(horizon))
    if not t1 > t0 or t1 - t0 < min_window:
        raise InsufficientDataError(f"regression window [{t0:.4g}, {t1:.4g}] too short")
    grid = np.linspace(t0, t1, grid_size)
    counts = np.searchsorted(s, grid, side="left")
    ok = counts > 0
    if ok.sum() < MIN_GRID_POINTS or len(np.unique(counts[ok])) < 2:
        raise InsufficientDataError("fewer than 5 usable grid points")
    x, y = grid[ok], np.log(counts[ok])
    slope, stderr = _ols(x, y)
    robust = True
    if len(x) > MIN_GRID_POINTS:
        shifted, _ = _ols(x[1:], y[1:])
        robust = abs(shifted - slope) < 3 * stderr or abs(shifted - slope) < 1e-12
    samples = int(np.searchsorted(s, t1, side="left"))
    return ExponentEstimate(slope, stderr, (t0, t1), samples,
                            low_confidence=samples < min_samples, window_robust=robust)


def abscissa_estimate(data: OrbitDataset, f: Score, **knobs) -> ExponentEstimate:
    """Abscissa of convergence of sum exp(-s f(mu)) over the dataset."""
    if len(data) == 0:
        raise InsufficientDataError("empty dataset")
    return abscissa_from_values(f(data.mu), data.horizon(f), **knobs)


# score functions -----------------------------------------------------------

def norm_score(mu):
    return np.sqrt(np.sum(mu * mu, axis=1))


def factor_score(i: int) -> Score:
    return lambda mu: mu[:, i]


def linear_score(alpha) -> Score:
    alpha = np.asarray(alpha, dtype=np.float64)
    return lambda mu: mu @ alpha


def min_score(mu):
    return np.min(mu, axis=1)


def max_score(mu):
    return np.max(mu, axis=1)


# named exponents -------------------------------------------------------------

def critical_exponent(data: OrbitDataset, **knobs) -> ExponentEstimate:
    return abscissa_estimate(data, norm_score, **knobs)


def factor_exponent(data: OrbitDataset, i: int, **knobs) -> ExponentEstimate:
    if not 0 <= i < data.k:
        raise IndexError(f"factor {i} out of range for k = {data.k}")
    return abscissa_estimate(data, factor_score(i), **knobs)


def cone_directions(data: OrbitDataset, norm_floor: float | None = None) -> np.ndarray:
    """Unit directions of the stored Cartan vectors at or above the norm floor (default: median)."""
    nz = data.norms > 0
    if norm_floor is None:
        norm_floor = float(np.median(data.norms[nz])) if nz.any() else 0.0
    sel = nz & (data.norms >= norm_floor)
    return data.mu[sel] / data.norms[sel, None]


def check_dual(alpha, directions: np.ndarray) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if len(directions) and np.min(directions @ alpha) <= 0:
        raise DualConeError(f"alpha = {alpha.tolist()} is not positive on the limit cone")
    return alpha


def manhattan_exponent(data: OrbitDataset, alpha, directions: np.ndarray | None = None,
                       **knobs) -> ExponentEstimate:
    """D_alpha, the growth rate for the score <alpha, mu>.

    ``directions`` are the cone directions alpha is validated against; by
    default those of the dataset itself above the median norm.
    """
    if directions is None:
        directions = cone_directions(data)
    alpha = check_dual(alpha, directions)
    return abscissa_estimate(data, linear_score(alpha), **knobs)


def minmax_exponents(data: OrbitDataset, **knobs) -> tuple[ExponentEstimate, ExponentEstimate]:
    """(delta_min, delta_max): exponents of the min- and max-of-factors metrics."""
    if data.k < 2:
        raise ValueError("min/max exponents need at least two factors")
    return abscissa_estimate(data, min_score, **knobs), abscissa_estimate(data, max_score, **knobs)


def exponent_chain(delta: ExponentEstimate, delta_max: ExponentEstimate,
                   delta_min: ExponentEstimate, k: int, slack: float = 1e-9) -> dict:
    """delta <= delta_max <= sqrt(k) delta <= delta_min, each link within 2 summed stderrs."""
    rk = math.sqrt(k)
    links = [
        ("delta <= delta_max", delta.value, delta_max.value, delta.stderr + delta_max.stderr),
        ("delta_max <= sqrt(k) delta", delta_max.value, rk * delta.value,
         delta_max.stderr + rk * delta.stderr),
        ("sqrt(k) delta <= delta_min", rk * delta.value, delta_min.value,
         rk * delta.stderr + delta_min.stderr),
    ]
    out = {}
    for name, lo, hi, err in links:
        margin = hi - lo
        out[name] = {"margin": margin, "tolerance": 2 * err, "ok": margin >= -2 * err - slack}
    out["ok"] = all(v["ok"] for v in out.values())
    return out


# independent oracle --------------------------------------------------------

def poincare_bisection_exponent(data: OrbitDataset, f: Score, depth: int | None = None,
                                lo: float = 1e-4, hi: float = 10.0, iters: int = 80) -> float:
    """Exponent from the last two word-length shells of the truncated series.

    Finds s with sum_{|w| = L} exp(-s f) = sum_{|w| = L-1} exp(-s f): below it
    the shell contributions still grow with L, above it they shrink.  Needs an
    uncapped enumeration.  Not used by the production estimators.
    """
    L = data.max_length if depth is None else depth
    if L < 2:
        raise InsufficientDataError("need at least two word-length shells")
    vals = f(data.mu)
    a = np.asarray(vals[data.lengths == L], dtype=np.float64)
    b = np.asarray(vals[data.lengths == L - 1], dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise InsufficientDataError("missing word-length shell")

    def log_shell(x, s):
        m = x.min()
        return math.log(np.sum(np.exp(-s * (x - m)))) - s * m

    def gap(s):
        return log_shell(a, s) - log_shell(b, s)

    if gap(lo) <= 0:
        return lo
    if gap(hi) > 0:
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def scaled(est: ExponentEstimate, c: float) -> ExponentEstimate:
    """Estimate for the score c * f given the estimate for f."""
    return replace(est, value=est.value / c, stderr=est.stderr / c,
                   window=(est.window[0] * c, est.window[1] * c))
