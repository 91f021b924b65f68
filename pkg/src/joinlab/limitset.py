"""Limit-set samples, box dimension, approximate Patterson-Sullivan measures and shadows.

Boundary points of a factor live on the unit sphere S^1 in R^2 or S^2 in R^3;
a point of the product boundary is the concatenation of its factor blocks.
Distances are chordal within a factor and combined by max across factors.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from . import repcore, spectrum
from .checks import Check
from .indicator import DualPair
from .orbit import OrbitDataset, bits_per_letter, filter_strip, unpack_word
from .spectrum import InsufficientDataError

log = logging.getLogger(__name__)

SATURATION = 32  # usable scales have at most samples / SATURATION boxes
MIN_BOXES = 32  # ... and at least this many
MAX_SCALE = 48
FIRST_SCALE = 2
MIN_SCALES = 3
RECOMMENDED_SAMPLES = 10_000
STRIP_SCHEDULE = (3.0, 5.0, 8.0)
ETA_SCHEDULE = (0.10, 0.05, 0.02)


class DivergentMeasureError(ValueError):
    """The requested exponent does not exceed the abscissa of the weight series."""


# ---------------------------------------------------------------------------
# boundary samples


@dataclass(frozen=True)
class BoundarySample:
    xi: tuple[np.ndarray, ...]
    word: tuple[int, ...]
    norm: float


class BoundarySamples:
    """Columnar collection of product-boundary points with their producing words."""

    def __init__(self, xi, dims, codes, lengths, mu, rank):
        self.xi = np.asarray(xi, dtype=np.float64)
        self.dims = tuple(dims)
        self.codes = np.asarray(codes, dtype=np.uint64)
        self.lengths = np.asarray(lengths, dtype=np.uint8)
        self.mu = np.asarray(mu, dtype=np.float64).reshape(len(self.xi), len(self.dims))
        self.rank = rank

    def __len__(self) -> int:
        return len(self.xi)

    @property
    def k(self) -> int:
        return len(self.dims)

    @property
    def norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.mu ** 2, axis=1))

    def slices(self) -> list[slice]:
        out, start = [], 0
        for n in self.dims:
            out.append(slice(start, start + n))
            start += n
        return out

    def factor(self, i: int) -> np.ndarray:
        return self.xi[:, self.slices()[i]]

    def __getitem__(self, i: int) -> BoundarySample:
        return BoundarySample(tuple(self.xi[i, s].copy() for s in self.slices()),
                              unpack_word(self.codes[i], self.lengths[i], self.rank),
                              float(self.norms[i]))

    def subset(self, sel) -> "BoundarySamples":
        return BoundarySamples(self.xi[sel], self.dims, self.codes[sel], self.lengths[sel],
                               self.mu[sel], self.rank)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = [f"xi{i + 1}_{j}" for i, n in enumerate(self.dims) for j in range(n)]
        w.writerow(head + ["word", "mu_norm"])
        norms = self.norms
        for i in range(len(self)):
            word = repcore.word_to_str(unpack_word(self.codes[i], self.lengths[i], self.rank))
            w.writerow([f"{x:.12g}" for x in self.xi[i]] + [word, f"{norms[i]:.12g}"])
        return buf.getvalue()


def _samples_from(data: OrbitDataset, sel, xi=None) -> BoundarySamples:
    xi = data.xi if xi is None else xi
    return BoundarySamples(xi[sel], data.rep.boundary_dims, data.codes[sel], data.lengths[sel],
                           data.mu[sel], data.rep.rank)


def boundary_samples(data: OrbitDataset, norm_floor: float = 0.0) -> BoundarySamples:
    """Attracting fixed points of the loxodromic orbit points with |mu| >= norm_floor."""
    sel = data.loxodromic & (data.norms >= norm_floor)
    return _samples_from(data, sel)


def directional_samples(data: OrbitDataset, u, R: float, norm_floor: float = 0.0) -> BoundarySamples:
    """Boundary samples of the orbit points within distance R of the ray through u."""
    u = np.asarray(u, dtype=np.float64)
    strip = filter_strip(data, u / np.linalg.norm(u), R)
    out = boundary_samples(strip, norm_floor)
    if len(out) == 0:
        raise InsufficientDataError(f"no loxodromic points in the strip of width {R}")
    return out


def ray_endpoints(data: OrbitDataset, rows=None) -> np.ndarray:
    """gamma . xi+(x) for each word gamma ending in the letter x.

    This is the endpoint of the word ray gamma x x x ..., which lies in the
    cylinder of gamma; unlike the attracting point of gamma it tracks where
    gamma o sits on the boundary even when gamma is not cyclically reduced.
    """
    rep = data.rep
    idx = np.arange(len(data)) if rows is None else np.asarray(rows)
    codes = data.codes[idx]
    lengths = data.lengths[idx].astype(np.int64)
    b = bits_per_letter(rep.rank)
    mask = np.uint64((1 << b) - 1)
    out = np.empty((len(idx), sum(rep.boundary_dims)))
    last = ((codes >> (np.uint64(b) * (lengths - 1).astype(np.uint64))) & mask).astype(np.int64)
    start = 0
    for fac in rep.factors:
        mats = np.array([fac.letter_matrix(x) for x in range(2 * rep.rank)])
        fix = np.array([repcore.attracting_point(m, fac.kind) for m in mats]).reshape(len(mats), -1)
        a = np.ones(len(idx), dtype=mats.dtype)
        bb = np.zeros(len(idx), dtype=mats.dtype)
        c = np.zeros(len(idx), dtype=mats.dtype)
        d = np.ones(len(idx), dtype=mats.dtype)
        for p in range(int(lengths.max(initial=0))):
            live = lengths > p
            x = ((codes[live] >> np.uint64(b * p)) & mask).astype(np.int64)
            m = mats[x]
            a[live], bb[live], c[live], d[live] = repcore.batch_multiply(
                a[live], bb[live], c[live], d[live], m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1])
        n = fac.kind.ambient_dim
        out[:, start:start + n] = repcore.batch_boundary_action(a, bb, c, d, fix[last], fac.kind)
        start += n
    return out


# ---------------------------------------------------------------------------
# box dimension


@dataclass(frozen=True)
class DimensionEstimate:
    value: float
    stderr: float
    window: tuple[int, int]
    scales: np.ndarray
    counts: np.ndarray
    samples: int
    low_confidence: bool = False

    def __float__(self) -> float:
        return float(self.value)

    def to_json(self) -> dict:
        return {"value": self.value, "stderr": self.stderr,
                "window": [2.0 ** -self.window[0], 2.0 ** -self.window[1]],
                "scales": self.scales.tolist(), "counts": self.counts.tolist(),
                "samples": self.samples, "low_confidence": self.low_confidence}


def _chart(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stereographic chart from the farther pole: (chart id, coordinates in the unit ball)."""
    z = p[:, -1]
    north = z > 0
    return north.astype(np.int64), p[:, :-1] / (1.0 + np.abs(z))[:, None]


def box_counts(samples: BoundarySamples | np.ndarray, scales: Sequence[int],
               dims: Sequence[int] | None = None) -> np.ndarray:
    """Occupied dyadic boxes of the product of factor charts at each scale j (side 2^(1-j))."""
    if isinstance(samples, BoundarySamples):
        xi, dims = samples.xi, samples.dims
    else:
        xi = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        dims = tuple(dims) if dims is not None else (xi.shape[1],)
    charts, coords, start = [], [], 0
    for n in dims:
        cid, y = _chart(xi[:, start:start + n])
        charts.append(cid)
        coords.append(y)
        start += n
    out = []
    for j in scales:
        m = 2 ** int(j)
        cols = []
        for cid, y in zip(charts, coords):
            cols.append(cid)
            cols.extend(np.clip(np.floor((y.T + 1.0) * 0.5 * m), 0, m - 1).astype(np.int64))
        keys = np.array(cols)
        if keys.shape[1] == 0:
            out.append(0)
            continue
        order = np.lexsort(keys)
        k = keys[:, order]
        out.append(1 + int(np.count_nonzero(np.any(k[:, 1:] != k[:, :-1], axis=0))))
    return np.array(out, dtype=np.int64)


def box_dimension(samples: BoundarySamples | np.ndarray, dims: Sequence[int] | None = None,
                  scales: Sequence[int] | None = None, min_boxes: int = MIN_BOXES,
                  saturation: float = SATURATION) -> DimensionEstimate:
    """Slope of log2(occupied boxes) against the scale index j.

    Only scales with at least ``min_boxes`` occupied boxes (coarse quantization)
    and at most samples / ``saturation`` of them (the sample, not the set, being
    counted) enter the fit.  A set with fewer distinct boxes than ``min_boxes``
    at every scale is fitted on its plateau.
    """
    n = len(samples)
    if n == 0:
        raise InsufficientDataError("no samples")
    scales = np.arange(FIRST_SCALE, MAX_SCALE + 1) if scales is None else np.asarray(scales)
    counts = box_counts(samples, scales, dims)
    lo = min(min_boxes, int(counts.max()))
    keep = (counts >= lo) & (counts <= max(n / saturation, 1))
    if np.count_nonzero(keep) < MIN_SCALES:
        raise InsufficientDataError(
            f"{np.count_nonzero(keep)} scales with {lo} to {n / saturation:.0f} boxes, need {MIN_SCALES}")
    x, c = scales[keep], counts[keep]
    slope, stderr = spectrum._ols(x.astype(float), np.log2(c))
    return DimensionEstimate(slope, stderr, (int(x[0]), int(x[-1])), scales, counts, n,
                             low_confidence=n < RECOMMENDED_SAMPLES)


# ---------------------------------------------------------------------------
# Patterson-Sullivan approximations


@dataclass
class PSMeasureApprox:
    """Normalized atoms at ray endpoints with weights exp(-s psi_u(mu))."""

    points: np.ndarray
    weights: np.ndarray
    mu: np.ndarray
    codes: np.ndarray
    lengths: np.ndarray
    dims: tuple
    dual: DualPair
    s: float
    log_normalizer: float
    abscissa: float
    dropped: int = 0
    _index: object = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.weights)

    def slices(self) -> list[slice]:
        out, start = [], 0
        for n in self.dims:
            out.append(slice(start, start + n))
            start += n
        return out

    def factor(self, i: int) -> np.ndarray:
        return self.points[:, self.slices()[i]]

    @property
    def index(self) -> cKDTree:
        """Spatial index on the first factor; other factors are filtered per query."""
        if self._index is None:
            self._index = cKDTree(self.factor(0))
        return self._index

    def in_product_ball(self, center, radii) -> np.ndarray:
        """Indices of atoms within chordal distance radii[i] of center[i] in every factor."""
        sl = self.slices()
        center = np.asarray(center, dtype=np.float64)
        cand = np.asarray(self.index.query_ball_point(center[sl[0]], radii[0]), dtype=np.int64)
        for i in range(1, len(sl)):
            if len(cand) == 0:
                break
            dist = np.linalg.norm(self.points[cand, sl[i]] - center[sl[i]], axis=1)
            cand = cand[dist <= radii[i]]
        return cand

    def mass(self, center, radii) -> float:
        return float(self.weights[self.in_product_ball(center, radii)].sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = [f"xi{i + 1}_{j}" for i, n in enumerate(self.dims) for j in range(n)]
        w.writerow(head + ["weight"])
        for p, wt in zip(self.points, self.weights):
            w.writerow([f"{x:.12g}" for x in p] + [f"{wt:.12g}"])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"atoms": len(self), "s": self.s, "abscissa": self.abscissa,
                "log_normalizer": self.log_normalizer, "dropped_non_loxodromic": self.dropped,
                "dual": self.dual.to_json()}


def psu_abscissa(data: OrbitDataset, dual: DualPair, **knobs) -> spectrum.ExponentEstimate:
    return spectrum.abscissa_estimate(data, dual.psi_u_of, **knobs)


def ps_measure(data: OrbitDataset, dual: DualPair, s: float | None = None,
               eta: float = 0.05, abscissa: float | None = None) -> PSMeasureApprox:
    """Atomic approximation of nu_u at exponent s (default (1 + eta) * abscissa).

    Only orbit points inside the completeness horizon of psi_u carry atoms.
    """
    f = dual.psi_u_of(data.mu)
    if abscissa is None:
        abscissa = psu_abscissa(data, dual).value
    if s is None:
        s = (1.0 + eta) * abscissa
    if not s > abscissa:
        raise DivergentMeasureError(
            f"s = {s:.4g} does not exceed the estimated abscissa {abscissa:.4g}; the series diverges")
    keep = f <= data.horizon(dual.psi_u_of)
    dropped = int(np.count_nonzero(keep & ~data.loxodromic))
    if dropped:
        log.info("dropped %d non-loxodromic atoms", dropped)
    keep &= data.loxodromic
    if not keep.any():
        raise InsufficientDataError("no atoms inside the completeness horizon")
    rows = np.flatnonzero(keep)
    lw = -s * f[rows]
    lz = float(logsumexp(lw))
    return PSMeasureApprox(ray_endpoints(data, rows), np.exp(lw - lz), data.mu[rows],
                           data.codes[rows], data.lengths[rows], data.rep.boundary_dims, dual,
                           float(s), lz, float(abscissa), dropped)


# ---------------------------------------------------------------------------
# shadows


@dataclass(frozen=True)
class Shadow:
    center: tuple[np.ndarray, ...]
    radii: np.ndarray

    def flat_center(self) -> np.ndarray:
        return np.concatenate(self.center)


def shadow(data: OrbitDataset, row: int, R: float) -> Shadow:
    """Shadow of gamma o: product of balls of chordal radius e^R e^(-mu_i) around the ray endpoint."""
    if not data.loxodromic[row]:
        raise repcore.NonLoxodromicError("shadow of a non-loxodromic element")
    c = ray_endpoints(data, [row])[0]
    sl = data.factor_slices()
    return Shadow(tuple(c[s] for s in sl), shadow_radii(data.mu[row], R))


def shadow_radii(mu, R: float) -> np.ndarray:
    return math.exp(R) * np.exp(-np.asarray(mu, dtype=np.float64))


# ---------------------------------------------------------------------------
# checks


def psu_abscissa_check(data: OrbitDataset, dual: DualPair, lo: float = 0.9, hi: float = 1.1,
                       **knobs) -> Check:
    """The series of exp(-s psi_u(mu)) has abscissa 1."""
    est = psu_abscissa(data, dual, **knobs)
    return Check("psi_u abscissa", bool(lo <= est.value <= hi),
                 {"estimate": est, "target": 1.0, "window": [lo, hi], "u": dual.u_alpha})


def strip_abscissa_check(data: OrbitDataset, dual: DualPair, radii=STRIP_SCHEDULE,
                         lo: float = 0.85, hi: float = 1.1, **knobs) -> Check:
    """Abscissa of the psi_u series restricted to strips around u; the widest must land near 1."""
    u = dual.direction
    rows = []
    for R in radii:
        try:
            est = spectrum.abscissa_estimate(filter_strip(data, u, R), dual.psi_u_of, **knobs)
            rows.append({"R": R, "estimate": est})
        except InsufficientDataError as err:
            rows.append({"R": R, "estimate": None, "error": str(err)})
    final = rows[-1]["estimate"]
    vals = [r["estimate"].value for r in rows if r["estimate"] is not None]
    se = max((r["estimate"].stderr for r in rows if r["estimate"] is not None), default=0.0)
    monotone = all(b >= a - 2 * se for a, b in zip(vals, vals[1:]))
    ok = final is not None and lo <= final.value <= hi
    return Check("strip abscissa", bool(ok), {"rows": rows, "target": 1.0, "window": [lo, hi],
                                              "monotone_in_R": monotone, "u": u})


def _mid_depth_rows(data: OrbitDataset, n: int, rng) -> np.ndarray:
    depth = max(1, data.max_length // 2)
    pool = np.flatnonzero((data.lengths == depth) & data.loxodromic)
    if len(pool) == 0:
        raise InsufficientDataError("no loxodromic elements at mid depth")
    return np.sort(rng.choice(pool, size=min(n, len(pool)), replace=False))


def shadow_lemma_check(measure: PSMeasureApprox, data: OrbitDataset, R: float = 2.0,
                       n: int = 200, seed: int = 0, max_spread: float = math.log(400)) -> Check:
    """log nu(O_R(gamma)) + psi_u(mu(gamma)) stays in a window of width log(c^2)."""
    rng = np.random.default_rng(seed)
    rows = _mid_depth_rows(data, n, rng)
    centers = ray_endpoints(data, rows)
    psi = measure.dual.psi_u_of(data.mu[rows])
    out = np.full(len(rows), np.nan)
    for j, (c, m) in enumerate(zip(centers, data.mu[rows])):
        mass = measure.mass(c, shadow_radii(m, R))
        if mass > 0:
            out[j] = math.log(mass) + psi[j]
    ok = np.isfinite(out)
    empty = int(np.count_nonzero(~ok))
    if not ok.any():
        return Check("shadow lemma", False, {"empty": empty}, note="every shadow is empty")
    spread = float(out[ok].max() - out[ok].min())
    return Check("shadow lemma", spread <= max_spread, {
        "spread": spread, "max_spread": max_spread, "sampled": len(rows), "empty": empty,
        "R": R, "depth": int(data.lengths[rows[0]]), "log_c_low": float(out[ok].min()),
        "log_c_high": float(out[ok].max())})


def ball_profile(measure: PSMeasureApprox, center, u, t_grid) -> np.ndarray:
    """nu(prod_i B(xi_i, 2 e^(-u_i t))) for each t; radius 2 at t = 0 is the whole sphere."""
    u = np.asarray(u, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    # t*(atom): largest t at which the atom is still in the ball
    tstar = np.full(len(measure), np.inf)
    for i, sl in enumerate(measure.slices()):
        dist = np.linalg.norm(measure.points[:, sl] - center[sl], axis=1)
        with np.errstate(divide="ignore"):
            tstar = np.minimum(tstar, np.log(2.0 / np.maximum(dist, 1e-300)) / u[i])
    order = np.argsort(-tstar)
    ts = tstar[order]
    cum = np.cumsum(measure.weights[order])
    counts = np.searchsorted(-ts, -np.asarray(t_grid, dtype=np.float64), side="right")
    mass = np.where(counts > 0, cum[np.maximum(counts - 1, 0)], 0.0)
    return mass, counts


def ball_decay_check(measure: PSMeasureApprox, centers: BoundarySamples, dual: DualPair,
                     n_centers: int = 50, min_atoms: int = 20, eps: float = 0.1,
                     tol: float = 0.15, pass_fraction: float = 0.8, grid_size: int = 40,
                     seed: int = 0) -> Check:
    """Slopes of log nu(ball) in t against -delta_u, per sampled u-directional center."""
    if len(centers) == 0:
        raise InsufficientDataError("no directional centers")
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(centers), size=min(n_centers, len(centers)), replace=False))
    u = dual.u_alpha
    du = dual.delta_u
    rows, passed = [], 0
    for j in pick:
        c = centers.xi[j]
        # window: from the first t at which no factor ball is the whole sphere,
        # to the last t at which the ball holds min_atoms atoms
        t_lo = float(np.max(math.log(2.0) / u))
        mass, counts = ball_profile(measure, c, u, [t_lo])
        probe = np.linspace(t_lo, t_lo + 200.0 / float(np.min(u)), 4001)
        _, cnt = ball_profile(measure, c, u, probe)
        good = np.flatnonzero(cnt >= min_atoms)
        if len(good) == 0 or probe[good[-1]] - t_lo <= 0:
            rows.append({"center": int(j), "slope": None, "flag": "ball empty at the start"})
            continue
        t_hi = float(probe[good[-1]])
        tg = np.linspace(t_lo, t_hi, grid_size)
        mass, _ = ball_profile(measure, c, u, tg)
        slope, se = spectrum._ols(tg, np.log(mass))
        upper = slope <= -du + tol
        lower = slope >= -du * (1 + eps) - tol
        passed += bool(upper and lower)
        rows.append({"center": int(j), "slope": slope, "stderr": se, "window": [t_lo, t_hi],
                     "upper_ok": bool(upper), "lower_ok": bool(lower)})
    fitted = [r for r in rows if r.get("slope") is not None]
    frac = passed / len(rows) if rows else 0.0
    slopes = np.array([r["slope"] for r in fitted]) if fitted else np.array([np.nan])
    return Check("ball decay", frac >= pass_fraction, {
        "delta_u": du, "u": u, "pass_fraction": frac, "required_fraction": pass_fraction,
        "median_slope": float(np.median(slopes)), "fitted": len(fitted), "centers": rows})


def dimension_checks(data: OrbitDataset, profile, factor_exponents, delta_min, delta_max,
                     lam_dim: DimensionEstimate | None = None, directions=None,
                     R: float = 8.0, norm_floor: float | None = None, tol: float = 0.15, bracket_tol: float = 0.2,
                     max_tol: float = 0.1) -> Check:
    """Box dimension against max delta_i and delta_min; directional brackets; delta_max."""
    d = np.array([float(x) for x in factor_exponents])
    if lam_dim is None:
        lam_dim = box_dimension(boundary_samples(data))
    trio = {"box_dim": lam_dim.value, "max_delta_i": float(d.max()), "delta_min": float(delta_min)}
    names = list(trio)
    pairs = {f"{a} vs {b}": abs(trio[a] - trio[b])
             for i, a in enumerate(names) for b in names[i + 1:]}
    ok_a = all(v <= tol for v in pairs.values())

    if directions is None:
        directions = interior_directions(profile)
    if norm_floor is None:
        # shallow points sit within R of every ray; only deep ones resolve a direction
        norm_floor = float(np.median(data.norms))
    brackets = []
    for v in directions:
        v = np.asarray(v, dtype=np.float64)
        v = v / np.linalg.norm(v)
        du = profile.interpolate(v)
        lo_b, hi_b = du / v.max() - bracket_tol, du / v.min() + bracket_tol
        try:
            est = box_dimension(directional_samples(data, v, R, norm_floor))
            brackets.append({"u": v, "delta_u": du, "box_dim": est, "bracket": [lo_b, hi_b],
                             "ok": bool(lo_b <= est.value <= hi_b)})
        except InsufficientDataError as err:
            brackets.append({"u": v, "delta_u": du, "box_dim": None, "bracket": [lo_b, hi_b],
                             "ok": False, "error": str(err)})
    ok_b = all(b["ok"] for b in brackets)

    ok = profile.valid
    ratio = profile.psi[ok] / np.max(np.abs(profile.directions[ok]), axis=1)
    sup_ratio = float(np.max(ratio))
    ok_c = abs(float(delta_max) - sup_ratio) <= max_tol
    return Check("dimension identities", bool(ok_a and ok_b and ok_c), {
        **trio, "pairwise": pairs, "pairwise_ok": ok_a, "directional": brackets,
        "directional_ok": ok_b, "delta_max": float(delta_max),
        "sup_psi_over_max_norm": sup_ratio, "delta_max_ok": ok_c})


def interior_directions(profile, n: int = 3) -> list[np.ndarray]:
    """u_max and the grid points halfway between it and either end of the valid range."""
    dirs = profile.directions[profile.valid]
    i = int(np.argmin(np.linalg.norm(dirs - profile.u_max, axis=1)))
    picks = [j for j in (i // 2, (i + len(dirs) - 1) // 2) if j != i]
    return ([profile.u_max] + [dirs[j] for j in picks])[:n]
