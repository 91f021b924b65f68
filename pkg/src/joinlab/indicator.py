"""Growth indicator profiles, limit cones, dual vectors and the tent/gap checks.

Directions live on the unit sphere of R^k.  For k = 2 a direction is stored
as a unit vector but profiles are indexed by its angle ``theta`` with the
first axis; for k = 3 grids come from subdividing the spherical hull of the
observed directions.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import spectrum
from .checks import Check, jsonable
from .orbit import ConjugacyClassEntry, OrbitDataset
from .spectrum import DualConeError, ExponentEstimate, InsufficientDataError

EPS_SCHEDULE = (0.30, 0.20, 0.12, 0.08)
GRID_SIZE = 33
SHRINK = 0.05
OFFSET_FRACTION = 0.9
GOLDEN = (math.sqrt(5) - 1) / 2


# ---------------------------------------------------------------------------
# limit cone


@dataclass(frozen=True)
class ConeEstimate:
    k: int
    directions: np.ndarray  # extreme unit directions (2 rows for k = 2)
    norm_floor: float
    slope_min: float | None = None
    slope_max: float | None = None
    d_minus: float | None = None
    d_plus: float | None = None
    orbit_slopes: tuple[float, float] | None = None  # before merging the class interval

    @property
    def angles(self) -> tuple[float, float]:
        return math.atan(self.slope_min), math.atan(self.slope_max)

    def to_json(self) -> dict:
        out = {"k": self.k, "norm_floor": self.norm_floor,
               "directions": self.directions.tolist()}
        if self.k == 2:
            out.update(slope_min=self.slope_min, slope_max=self.slope_max,
                       d_minus=self.d_minus, d_plus=self.d_plus,
                       orbit_slopes=list(self.orbit_slopes))
        return out


def stretch_constants(classes: Sequence[ConjugacyClassEntry]) -> tuple[float, float]:
    """(d_-, d_+): extreme translation-length ratios l_2 / l_1 over the classes."""
    if not classes:
        raise InsufficientDataError("no conjugacy classes")
    r = np.array([c.lengths[1] / c.lengths[0] for c in classes])
    return float(r.min()), float(r.max())


def _gnomonic(dirs: np.ndarray) -> np.ndarray:
    """Central projection of positive directions to the plane sum(x) = 1, as 2-D coordinates."""
    p = dirs / dirs.sum(axis=1, keepdims=True)
    return p[:, :2]


def _from_gnomonic(xy: np.ndarray) -> np.ndarray:
    xy = np.atleast_2d(xy)
    p = np.column_stack([xy[:, 0], xy[:, 1], 1.0 - xy[:, 0] - xy[:, 1]])
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def limit_cone_estimate(data: OrbitDataset, classes: Sequence[ConjugacyClassEntry] | None = None,
                        norm_floor: float | None = None) -> ConeEstimate:
    """Directions of the Cartan vectors above ``norm_floor`` (default: median norm)."""
    nz = data.norms > 0
    if norm_floor is None:
        norm_floor = float(np.median(data.norms[nz])) if nz.any() else 0.0
    sel = nz & (data.norms >= norm_floor)
    if not sel.any():
        raise InsufficientDataError("no orbit points above the norm floor")
    mu = data.mu[sel]
    dirs = mu / data.norms[sel, None]
    if data.k == 1:
        return ConeEstimate(1, np.ones((1, 1)), norm_floor)
    if data.k == 2:
        slopes = mu[:, 1] / mu[:, 0]
        smin, smax = float(slopes.min()), float(slopes.max())
        orbit_slopes = (smin, smax)
        ext = np.array([[1.0, smin], [1.0, smax]])
        ext /= np.linalg.norm(ext, axis=1, keepdims=True)
        dm = dp = None
        if classes:
            dm, dp = stretch_constants(classes)
            # both intervals approximate the limit cone from inside
            smin, smax = min(smin, dm), max(smax, dp)
            ext = np.array([[1.0, smin], [1.0, smax]])
            ext /= np.linalg.norm(ext, axis=1, keepdims=True)
        return ConeEstimate(2, ext, norm_floor, smin, smax, dm, dp, orbit_slopes)
    from scipy.spatial import ConvexHull

    xy = _gnomonic(dirs)
    try:
        hull = ConvexHull(xy)
        ext = _from_gnomonic(xy[hull.vertices])
    except Exception:  # degenerate (collinear) direction sets
        ext = np.unique(np.round(dirs, 12), axis=0)
    return ConeEstimate(data.k, ext, norm_floor)


# ---------------------------------------------------------------------------
# growth indicator


def generator_norm(data: OrbitDataset) -> float:
    """Largest |mu| over the generators: the period of the cluster structure of the counts."""
    sel = data.lengths == 1
    return float(data.norms[sel].max()) if sel.any() else 0.0


class ConeView:
    """Unit directions and norms of a dataset, precomputed for repeated cone queries."""

    def __init__(self, data: OrbitDataset):
        nz = data.norms > 0
        self.k = data.k
        self.min_window = 2.0 * generator_norm(data)
        self.norms = data.norms[nz]
        self.dirs = data.mu[nz] / self.norms[:, None]
        self.horizon = data.horizon(spectrum.norm_score)

    def norms_in_cone(self, v: np.ndarray, eps: float) -> np.ndarray:
        return self.norms[self.dirs @ v > math.cos(eps)]


def _tangent_offsets(v: np.ndarray, angle: float) -> list[np.ndarray]:
    """Unit vectors at the given angle from v, one pair per tangent axis."""
    k = len(v)
    q, _ = np.linalg.qr(np.column_stack([v, np.eye(k)]))
    out = []
    for j in range(1, k):
        t = q[:, j]
        t = t - (t @ v) * v
        t /= np.linalg.norm(t)
        for sgn in (1.0, -1.0):
            out.append(math.cos(angle) * v + sgn * math.sin(angle) * t)
    return out


def _cone_abscissa(view: ConeView, v, eps, min_samples, knobs):
    vals = view.norms_in_cone(v, eps)
    if len(vals) < min_samples:
        raise InsufficientDataError(f"{len(vals)} points in the cone")
    knobs = {"min_window": view.min_window, **knobs}
    return spectrum.abscissa_from_values(vals, view.horizon, min_samples=min_samples, **knobs)


def growth_indicator(data: OrbitDataset | ConeView, v, eps_schedule=EPS_SCHEDULE,
                     min_samples: int = spectrum.MIN_SAMPLES, offsets: bool = True,
                     **knobs) -> ExponentEstimate:
    """psi(v) for a unit direction v, as a cone-restricted abscissa.

    For each half-angle (smallest first) the abscissa of the cone centred at v
    is computed; with ``offsets`` the cones of the same half-angle centred at
    ``OFFSET_FRACTION * eps`` from v also contain v and enter the infimum.
    The first half-angle whose centred cone holds ``min_samples`` points wins.
    """
    view = data if isinstance(data, ConeView) else ConeView(data)
    v = np.asarray(v, dtype=np.float64)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    last_err = None
    for eps in sorted(eps_schedule):
        try:
            best = _cone_abscissa(view, v, eps, min_samples, knobs)
            where = 0
            if offsets:
                # every cone containing v bounds psi(v) from above; one that cannot
                # be fitted makes this half-angle infeasible rather than ignored
                for j, w in enumerate(_tangent_offsets(v, OFFSET_FRACTION * eps), start=1):
                    est = _cone_abscissa(view, w, eps, min_samples, knobs)
                    if est.value < best.value:
                        best, where = est, j
        except InsufficientDataError as err:
            last_err = err
            continue
        return ExponentEstimate(best.value, best.stderr, best.window, best.samples,
                                best.low_confidence, best.window_robust, eps=eps,
                                meta={"cone": where})
    raise InsufficientDataError(f"no cone around {v.tolist()} holds {min_samples} points"
                                + (f" ({last_err})" if last_err else ""))


# ---------------------------------------------------------------------------
# profile


@dataclass(frozen=True)
class DualPair:
    alpha: np.ndarray
    u_alpha: np.ndarray  # on the slice <alpha, u> = 1
    delta_u: float  # psi at u_alpha
    psi_u: np.ndarray  # delta_u * alpha

    @property
    def direction(self) -> np.ndarray:
        return self.u_alpha / np.linalg.norm(self.u_alpha)

    def psi_u_of(self, mu: np.ndarray) -> np.ndarray:
        return np.asarray(mu) @ self.psi_u

    def to_json(self) -> dict:
        return {"alpha": self.alpha.tolist(), "u_alpha": self.u_alpha.tolist(),
                "delta_u": self.delta_u, "psi_u": self.psi_u.tolist()}


@dataclass
class GrowthIndicatorProfile:
    k: int
    directions: np.ndarray
    estimates: list  # ExponentEstimate or None per direction
    eps_schedule: tuple
    cone: ConeEstimate
    u_max: np.ndarray
    psi_max: float
    psi_max_stderr: float
    low_curvature: bool = False
    dual_cache: dict = field(default_factory=dict)

    @property
    def psi(self) -> np.ndarray:
        return np.array([np.nan if e is None else e.value for e in self.estimates])

    @property
    def stderr(self) -> np.ndarray:
        return np.array([np.nan if e is None else e.stderr for e in self.estimates])

    @property
    def valid(self) -> np.ndarray:
        return np.array([e is not None for e in self.estimates])

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.directions[:, 1], self.directions[:, 0])

    def interpolate(self, v) -> float:
        """Piecewise-linear psi at a unit direction; NaN outside the sampled range."""
        v = np.asarray(v, dtype=np.float64)
        v = v / np.linalg.norm(v)
        ok = self.valid
        if self.k == 2:
            th = math.atan2(v[1], v[0])
            a = self.angles[ok]
            if th < a[0] - 1e-12 or th > a[-1] + 1e-12:
                return math.nan
            return float(np.interp(th, a, self.psi[ok]))
        from scipy.interpolate import LinearNDInterpolator

        if "_interp" not in self.dual_cache:
            self.dual_cache["_interp"] = LinearNDInterpolator(
                _gnomonic(self.directions[ok]), self.psi[ok])
        return float(self.dual_cache["_interp"](_gnomonic(v[None, :]))[0])

    def value_at(self, u) -> float:
        """Homogeneous extension: psi(u) = |u| psi(u / |u|)."""
        u = np.asarray(u, dtype=np.float64)
        n = float(np.linalg.norm(u))
        return n * self.interpolate(u / n)

    def to_rows(self) -> list[dict]:
        rows = []
        for d, e in zip(self.directions, self.estimates):
            row = {f"v{i + 1}": float(x) for i, x in enumerate(d)}
            if e is None:
                row.update(psi=math.nan, stderr=math.nan, eps_used=math.nan, samples=0)
            else:
                row.update(psi=e.value, stderr=e.stderr, eps_used=e.eps, samples=e.samples)
            rows.append(row)
        return rows

    def to_csv(self) -> str:
        rows = self.to_rows()
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "eps_schedule": list(self.eps_schedule),
            "u_max": self.u_max.tolist(),
            "psi_max": {"value": self.psi_max, "stderr": self.psi_max_stderr},
            "low_curvature": self.low_curvature,
            "cone": self.cone.to_json(),
            "grid": jsonable(self.to_rows()),
        }


def _grid_k2(cone: ConeEstimate, n: int, shrink: float) -> np.ndarray:
    t0, t1 = cone.angles
    w = t1 - t0
    if w <= 1e-12:
        ths = np.full(1, 0.5 * (t0 + t1))
    else:
        ths = np.linspace(t0 + shrink * w, t1 - shrink * w, n)
    return np.column_stack([np.cos(ths), np.sin(ths)])


def _grid_k3(cone: ConeEstimate, depth: int, shrink: float) -> np.ndarray:
    ext = _gnomonic(cone.directions)
    c = ext.mean(axis=0)
    ext = c + (1 - 2 * shrink) * (ext - c)
    tris = [(c, ext[i], ext[(i + 1) % len(ext)]) for i in range(len(ext))]
    for _ in range(depth):
        nxt = []
        for a, b, d in tris:
            ab, bd, da = (a + b) / 2, (b + d) / 2, (d + a) / 2
            nxt += [(a, ab, da), (ab, b, bd), (da, bd, d), (ab, bd, da)]
        tris = nxt
    pts = np.unique(np.round(np.array([p for t in tris for p in t]), 12), axis=0)
    return _from_gnomonic(pts)


def _golden_max(g, lo, hi, iters=40):
    a, b = lo, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    for _ in range(iters):
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - GOLDEN * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + GOLDEN * (b - a)
            gd = g(d)
    return (c, gc) if gc >= gd else (d, gd)


def build_profile(data: OrbitDataset, grid_size: int = GRID_SIZE, eps_schedule=EPS_SCHEDULE,
                  cone: ConeEstimate | None = None, shrink: float = SHRINK,
                  min_samples: int = spectrum.MIN_SAMPLES, refine_steps: int = 12,
                  subdivision: int = 3, **knobs) -> GrowthIndicatorProfile:
    """psi on a direction grid inside the cone estimate, plus the maximizing direction."""
    if cone is None:
        cone = limit_cone_estimate(data)
    view = ConeView(data)
    if data.k == 2:
        dirs = _grid_k2(cone, grid_size, shrink)
    elif data.k == 3:
        dirs = _grid_k3(cone, subdivision, shrink)
    else:
        dirs = np.ones((1, 1))

    def psi(v):
        try:
            return growth_indicator(view, v, eps_schedule, min_samples, **knobs)
        except InsufficientDataError:
            return None

    ests = [psi(v) for v in dirs]
    vals = np.array([-np.inf if e is None else e.value for e in ests])
    if not np.isfinite(vals).any():
        raise InsufficientDataError("no grid direction has enough samples")
    i = int(np.argmax(vals))

    # refinement: direct evaluations near the best grid direction
    evaluated = [(dirs[j], ests[j]) for j in range(len(dirs)) if ests[j] is not None]
    if data.k == 2 and len(dirs) > 2:
        ths = np.arctan2(dirs[:, 1], dirs[:, 0])
        lo, hi = ths[max(i - 1, 0)], ths[min(i + 1, len(ths) - 1)]
        cache = {}

        def g(th):
            v = np.array([math.cos(th), math.sin(th)])
            e = psi(v)
            cache[th] = (v, e)
            return -np.inf if e is None else e.value

        a, b = lo, hi
        c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
        gc, gd = g(c), g(d)
        for _ in range(refine_steps):
            if gc >= gd:
                b, d, gd = d, c, gc
                c = b - GOLDEN * (b - a)
                gc = g(c)
            else:
                a, c, gc = c, d, gd
                d = a + GOLDEN * (b - a)
                gd = g(d)
        evaluated += [(v, e) for v, e in cache.values() if e is not None]
    elif data.k == 3:
        best_v = dirs[i]
        step = 0.5 * float(np.min(np.linalg.norm(dirs - best_v, axis=1)[
            np.linalg.norm(dirs - best_v, axis=1) > 0])) if len(dirs) > 1 else 0.0
        for _ in range(refine_steps if step > 0 else 0):
            improved = False
            for w in _tangent_offsets(best_v, step):
                e = psi(w)
                if e is not None:
                    evaluated.append((w, e))
                    if e.value > max(x.value for _, x in evaluated[:-1]):
                        best_v, improved = w, True
            if not improved:
                step *= 0.5

    top = max(e.value for _, e in evaluated)
    best = max(evaluated, key=lambda t: t[1].value)
    tol = best[1].stderr
    ties = [v for v, e in evaluated if e.value >= top - tol]
    low_curv = False
    u_max = best[0]
    if data.k == 2 and len(ties) > 1:
        tt = np.array([math.atan2(v[1], v[0]) for v in ties])
        step = (cone.angles[1] - cone.angles[0]) * (1 - 2 * shrink) / max(grid_size - 1, 1)
        if tt.max() - tt.min() > step:
            low_curv = True
            mid = 0.5 * (tt.max() + tt.min())
            u_max = np.array([math.cos(mid), math.sin(mid)])
    u_max = u_max / np.linalg.norm(u_max)
    return GrowthIndicatorProfile(data.k, dirs, ests, tuple(eps_schedule), cone, u_max,
                                  float(best[1].value), float(best[1].stderr), low_curv)


# ---------------------------------------------------------------------------
# duality


def dual_vector(profile: GrowthIndicatorProfile, alpha) -> DualPair:
    """u_alpha: maximizer of psi on the slice <alpha, v> = 1 inside the sampled cone."""
    alpha = np.asarray(alpha, dtype=np.float64)
    key = tuple(np.round(alpha, 15))
    if key in profile.dual_cache:
        return profile.dual_cache[key]
    ok = profile.valid
    dirs = profile.directions[ok]
    dots = dirs @ alpha
    if np.any(dots <= 0) or np.any(profile.cone.directions @ alpha <= 0):
        raise DualConeError(f"slice <alpha, v> = 1 misses the cone for alpha = {alpha.tolist()}")
    vals = profile.psi[ok] / dots
    i = int(np.argmax(vals))
    if profile.k == 2:
        ths = np.arctan2(dirs[:, 1], dirs[:, 0])

        def g(th):
            w = np.array([math.cos(th), math.sin(th)])
            return profile.interpolate(w) / float(w @ alpha)

        th, gv = ths[i], vals[i]
        if len(ths) > 1:
            th2, g2 = _golden_max(g, ths[max(i - 1, 0)], ths[min(i + 1, len(ths) - 1)])
            if g2 > gv:
                th, gv = th2, g2
        w = np.array([math.cos(th), math.sin(th)])
    elif profile.k == 3:
        from scipy.optimize import minimize

        def negg(xy):
            w = _from_gnomonic(xy)[0]
            val = profile.interpolate(w)
            return 1e9 if not np.isfinite(val) else -val / float(w @ alpha)

        res = minimize(negg, _gnomonic(dirs[i][None, :])[0], method="Nelder-Mead",
                       options={"xatol": 1e-8, "fatol": 1e-12})
        w, gv = dirs[i], vals[i]
        if -res.fun > gv:
            w, gv = _from_gnomonic(res.x)[0], -res.fun
    else:
        w, gv = dirs[0], vals[0]
    u = w / float(w @ alpha)
    pair = DualPair(alpha, u, float(gv), float(gv) * alpha)
    profile.dual_cache[key] = pair
    return pair


def dual_at_max(profile: GrowthIndicatorProfile, delta: float | None = None) -> DualPair:
    """Dual pair at u_max, where grad psi is parallel to u_max and psi = delta.

    Exact at the maximizer, so it needs no derivative of the noisy profile;
    ``delta`` defaults to the profile maximum.
    """
    u = profile.u_max / np.linalg.norm(profile.u_max)
    d = profile.psi_max if delta is None else float(delta)
    return DualPair(u.copy(), u.copy(), d, d * u)


def dual_at_direction(profile: GrowthIndicatorProfile, u, half_width: int = 3) -> DualPair:
    """Dual pair whose u_alpha is the unit direction u (k = 2).

    alpha = grad psi(u) / psi(u) with the gradient read off a local quadratic fit
    of the profile: grad psi = p e_r + p' e_theta in polar form.
    """
    if profile.k != 2:
        raise NotImplementedError("dual_at_direction is implemented for k = 2")
    u = np.asarray(u, dtype=np.float64)
    u = u / np.linalg.norm(u)
    ok = profile.valid
    ths, ps = profile.angles[ok], profile.psi[ok]
    th = math.atan2(u[1], u[0])
    if th < ths[0] - 1e-12 or th > ths[-1] + 1e-12:
        raise DualConeError("direction outside the sampled cone")
    j = int(np.argmin(np.abs(ths - th)))
    lo, hi = max(j - half_width, 0), min(j + half_width + 1, len(ths))
    if hi - lo < 3:
        raise InsufficientDataError("too few profile points near the direction")
    c = np.polyfit(ths[lo:hi] - th, ps[lo:hi], 2)
    p, dp = float(c[2]), float(c[1])
    if p <= 0:
        raise InsufficientDataError("non-positive growth indicator at the direction")
    e_r = u
    e_t = np.array([-u[1], u[0]])
    grad = p * e_r + dp * e_t
    alpha = grad / p
    return DualPair(alpha, u.copy(), p, grad)


# ---------------------------------------------------------------------------
# checks


def tent_function(v: np.ndarray, factor_exponents) -> np.ndarray:
    d = np.array([float(x) for x in factor_exponents])
    return np.min(np.atleast_2d(v) * d[None, :], axis=1)


def _values(xs):
    return np.array([float(x) for x in xs])


def _stderrs(xs):
    return np.array([x.stderr if isinstance(x, ExponentEstimate) else 0.0 for x in xs])


def tent_check(profile: GrowthIndicatorProfile, factor_exponents, tol: float = 0.05) -> Check:
    """psi <= T on the grid, with equality at the directions of u_{e_i}."""
    d = _values(factor_exponents)
    ok = profile.valid
    dirs = profile.directions[ok]
    psi, se = profile.psi[ok], profile.stderr[ok]
    margins = tent_function(dirs, d) - psi
    j = int(np.argmin(margins))
    locus = np.abs(margins) <= 2 * se
    at_dual = []
    for i in range(profile.k):
        e = np.zeros(profile.k)
        e[i] = 1.0
        pair = dual_vector(profile, e)
        w = pair.direction
        m = float(tent_function(w, d)[0] - profile.interpolate(w))
        at_dual.append({"factor": i, "direction": w, "u": pair.u_alpha, "margin": m})
    ok_min = margins[j] >= -tol
    ok_eq = all(abs(a["margin"]) <= tol for a in at_dual)
    return Check("tent property", bool(ok_min and ok_eq), {
        "min_margin": float(margins[j]),
        "min_margin_direction": dirs[j],
        "tolerance": tol,
        "margins": margins,
        "equality_locus": dirs[locus],
        "at_u_e": at_dual,
    })


def gap_check(profile: GrowthIndicatorProfile, factor_exponents, dim_lambda: float,
              delta: ExponentEstimate | float, margin: float = 0.0,
              bound: float | None = None) -> Check:
    """delta < min_i u_i delta_i and delta < dim(Lambda) / sqrt(k), with u = u_max.

    A comparison passes when it holds by more than ``margin`` plus the
    combined standard errors.  ``bound`` adds the comparison delta < bound.
    """
    d = _values(factor_exponents)
    se = _stderrs(factor_exponents)
    dv = float(delta)
    dse = delta.stderr if isinstance(delta, ExponentEstimate) else 0.0
    u = profile.u_max
    tent = u * d
    i = int(np.argmin(tent))
    m1 = float(tent[i] - dv)
    e1 = dse + u[i] * se[i]
    m2 = float(dim_lambda) / math.sqrt(profile.k) - dv
    vals = {"delta": dv, "u_max": u, "tent_at_u_max": float(tent[i]),
            "gap_tent": m1, "gap_dim": m2, "required": margin}
    ok = m1 > margin + e1 and m2 > margin + dse
    vals["tent_ok"] = m1 > margin + e1
    vals["dim_ok"] = m2 > margin + dse
    if bound is not None:
        m3 = bound - dv
        vals.update(bound=bound, gap_bound=m3, bound_ok=m3 > margin + dse)
        ok = ok and vals["bound_ok"]
    return Check("gap and rigidity", bool(ok), vals)


def rigidity_check(profile: GrowthIndicatorProfile, factor_exponents,
                   delta: ExponentEstimate | float, tol: float = 0.05) -> Check:
    """Conjugate pairs: delta equals min_i u_i delta_i within tol."""
    d = _values(factor_exponents)
    m = float(np.min(profile.u_max * d) - float(delta))
    return Check("rigidity equality", abs(m) <= tol, {"gap_tent": m, "tolerance": tol})


def lower_bound_check(profile: GrowthIndicatorProfile, factor_exponents, n: int = 11,
                      tol: float = 0.05, hyperbolic_dims: Sequence[int] | None = None) -> Check:
    """psi(sum w_i u_{e_i}) >= sum w_i delta_i on the simplex, plus the half-sum upper bound."""
    d = _values(factor_exponents)
    k = profile.k
    us = [dual_vector(profile, np.eye(k)[i]).u_alpha for i in range(k)]
    if k == 2:
        weights = np.column_stack([1 - np.linspace(0, 1, n), np.linspace(0, 1, n)])
    else:
        pts = [(a, b, n - 1 - a - b) for a in range(n) for b in range(n - a)]
        weights = np.array(pts, dtype=float) / (n - 1)
    rows = []
    for w in weights:
        x = sum(wi * ui for wi, ui in zip(w, us))
        lhs = profile.value_at(x)
        rhs = float(w @ d)
        rows.append({"weights": w, "lhs": lhs, "rhs": rhs, "margin": lhs - rhs})
    margins = np.array([r["margin"] for r in rows])
    finite = np.isfinite(margins)
    ok_lower = bool(np.all(margins[finite] >= -tol))
    vertex = [r for r in rows if np.max(r["weights"]) == 1.0]
    mid = rows[len(rows) // 2] if k == 2 else None
    ndims = hyperbolic_dims or [2] * k
    rho = np.array([n_i - 1 for n_i in ndims], dtype=float)
    ok = profile.valid
    half = profile.directions[ok] @ rho / 2 - profile.psi[ok]
    ok_half = bool(np.all(half >= -tol))
    return Check("lower bound", ok_lower and ok_half, {
        "rows": rows,
        "vertex_margins": [r["margin"] for r in vertex],
        "midpoint_margin": None if mid is None else mid["margin"],
        "half_sum_min_margin": float(half.min()),
    })


def thurston_check(cone: ConeEstimate, factor_exponents, margin: float = 0.0,
                   conjugate_tol: float = 1e-6) -> Check:
    """d_+ delta_2 > delta_1 and delta_1 / d_- > delta_2."""
    if cone.k != 2 or cone.d_plus is None:
        return Check("stretch vs dimension", None, note="needs k = 2 and conjugacy classes")
    d1, d2 = _values(factor_exponents)
    if abs(cone.d_plus - 1) < conjugate_tol and abs(cone.d_minus - 1) < conjugate_tol:
        return Check("stretch vs dimension", None, {"d_minus": cone.d_minus, "d_plus": cone.d_plus},
                     note="d_- = d_+ = 1: conjugate pair, boundary case")
    m1 = cone.d_plus * d2 - d1
    m2 = d1 / cone.d_minus - d2
    return Check("stretch vs dimension", bool(m1 > margin and m2 > margin), {
        "d_minus": cone.d_minus, "d_plus": cone.d_plus,
        "d_plus_delta2_minus_delta1": m1, "delta1_over_d_minus_minus_delta2": m2,
        "required": margin})


def symmetry_check(profile: GrowthIndicatorProfile, perm: Sequence[int] | None = None,
                   tol: float = 0.05, angle_tol_deg: float = 5.0) -> Check:
    """psi(v) = psi(v o perm) on the grid and u_max on the diagonal."""
    k = profile.k
    perm = list(perm) if perm is not None else [(i + 1) % k for i in range(k)]
    ok = profile.valid
    devs = []
    for v, p in zip(profile.directions[ok], profile.psi[ok]):
        q = profile.interpolate(v[perm])
        if np.isfinite(q):
            devs.append(abs(p - q))
    dev = float(max(devs)) if devs else math.nan
    diag = np.ones(k) / math.sqrt(k)
    ang = math.degrees(math.acos(min(1.0, float(profile.u_max @ diag))))
    se = float(np.nanmax(profile.stderr))
    vals = {"sup_deviation": dev, "u_max_angle_deg": ang, "max_stderr": se,
            "compared": len(devs)}
    cone = profile.cone
    if k == 2 and cone.d_minus is not None:
        vals.update(d_minus=cone.d_minus, d_plus=cone.d_plus)
    return Check("symmetric indicator", bool(dev <= tol and ang <= angle_tol_deg), vals)


def profile_json(profile: GrowthIndicatorProfile, tent: Check | None = None) -> str:
    out = profile.to_json()
    if tent is not None:
        out["tent"] = tent.to_json()
    return json.dumps(jsonable(out), indent=2, sort_keys=True)


def interior_duals(cone: ConeEstimate, n: int, rng) -> list[np.ndarray]:
    """n unit functionals drawn from the middle half of the dual cone (k = 2)."""
    t0, t1 = cone.angles
    lo, hi = t1 - math.pi / 2, t0 + math.pi / 2
    mid, half = 0.5 * (lo + hi), 0.25 * (hi - lo)
    return [np.array([math.cos(b), math.sin(b)]) for b in rng.uniform(mid - half, mid + half, n)]


def duality_check(data: OrbitDataset, profile: GrowthIndicatorProfile, alphas, factor_exponents,
                  tol: float = 0.05, slice_tol: float = 1e-6) -> Check:
    """D_alpha = psi(u_alpha) for each alpha, plus the shape of u_{e_i}."""
    d = _values(factor_exponents)
    k = profile.k
    rows = []
    for a in alphas:
        a = np.asarray(a, dtype=np.float64)
        D = spectrum.manhattan_exponent(data, a, directions=profile.cone.directions)
        pair = dual_vector(profile, a)
        rows.append({"alpha": a, "D_alpha": D, "u_alpha": pair.u_alpha, "delta_u": pair.delta_u,
                     "difference": pair.delta_u - D.value, "ok": abs(pair.delta_u - D.value) <= tol})
    shape = []
    for i in range(k):
        u = dual_vector(profile, np.eye(k)[i]).u_alpha
        others = [j for j in range(k) if j != i]
        need = [d[i] / d[j] - tol for j in others]
        ok = abs(u[i] - 1.0) <= slice_tol and all(u[j] >= nd for j, nd in zip(others, need))
        shape.append({"factor": i, "u": u, "required_other": need, "ok": ok})
    ok = all(r["ok"] for r in rows) and all(s["ok"] for s in shape)
    return Check("duality", bool(ok), {"rows": rows, "u_e": shape, "tolerance": tol})
