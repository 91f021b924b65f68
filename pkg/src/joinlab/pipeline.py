"""Stage orchestration, dataset cache and report emission.

Every stage recomputes what it needs from the cached orbit dataset, so any
stage can run on its own once ``enumerate`` has written the cache.  Reports
contain no timings or paths and are serialized with sorted keys, which makes
reruns byte-identical.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from functools import cached_property
from pathlib import Path

import numpy as np

from . import indicator as ind
from . import limitset as ls
from . import orbit
from . import spectrum as sp
from .checks import Check, jsonable
from .config import ExperimentConfig
from .spectrum import DualConeError, InsufficientDataError

log = logging.getLogger(__name__)

SCHEMA = 1
STAGES = ("enumerate", "exponents", "indicator", "tent", "limitset", "psmeasure")
SAMPLE_EXPORT_CAP = 20_000
RANDOM_DUALS = 2
STRICT = 0.0  # report verdicts test the strict inequalities, stderr-aware


class MissingCacheError(RuntimeError):
    """A stage needs the orbit cache and none exists for these budgets."""


def cache_key(cfg: ExperimentConfig) -> str:
    blob = json.dumps({"rep": cfg.rep.to_json(), "L": cfg.max_word_length,
                       "t_cap": None if math.isinf(cfg.t_cap) else cfg.t_cap},
                      sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def cache_path(cfg: ExperimentConfig, out: Path) -> Path:
    return Path(out) / "cache" / f"{cache_key(cfg)}.jlab"


def _delta_bound(rep) -> float | None:
    """1 / sqrt(sum 1/(n_i - 1)^2): the critical exponent bound for mixed rank-one factors."""
    rho = np.array([n - 1 for n in rep.boundary_dims], dtype=float)
    if np.all(rho == rho[0]):
        return None
    return float(1.0 / math.sqrt(np.sum(1.0 / rho ** 2)))


def _guard(name: str, fn, *args, **kw) -> Check:
    """Run a check; data shortfalls become an inapplicable verdict with the reason."""
    try:
        return fn(*args, **kw)
    except (InsufficientDataError, DualConeError) as err:
        return Check(name, None, note=f"insufficient data: {err}")


class Run:
    """Lazily computed quantities shared between stages for one configuration."""

    def __init__(self, cfg: ExperimentConfig, out, threads: int | None = None,
                 enumerate_missing: bool = False):
        self.cfg = cfg
        self.out = Path(out)
        self.threads = threads or cfg.threads
        self.enumerate_missing = enumerate_missing
        self.insufficient: list[str] = []

    # -- data ---------------------------------------------------------------

    @property
    def cache(self) -> Path:
        return cache_path(self.cfg, self.out)

    def enumerate(self) -> orbit.OrbitDataset:
        path = self.cache
        if path.exists():
            data = orbit.load_dataset(path, self.cfg.rep)
            if data.max_length == self.cfg.max_word_length:
                return data
        data = orbit.enumerate_orbit(self.cfg.rep, self.cfg.max_word_length, self.cfg.t_cap,
                                     threads=self.threads)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        orbit.save_dataset(data, tmp)
        tmp.replace(path)
        return data

    @cached_property
    def data(self) -> orbit.OrbitDataset:
        if not self.cache.exists():
            if not self.enumerate_missing:
                raise MissingCacheError(
                    f"no orbit cache at {self.cache}; run `joinlab enumerate` with the same "
                    "--config, --out and --max-word-length first")
            return self.enumerate()
        return orbit.load_dataset(self.cache, self.cfg.rep)

    @cached_property
    def classes(self):
        return orbit.enumerate_conjugacy_classes(self.cfg.rep, self.cfg.class_length)

    # -- exponents ----------------------------------------------------------

    @cached_property
    def delta(self):
        return sp.critical_exponent(self.data)

    @cached_property
    def factor_exps(self):
        return [sp.factor_exponent(self.data, i) for i in range(self.data.k)]

    @cached_property
    def minmax(self):
        return sp.minmax_exponents(self.data)

    @cached_property
    def conjugate(self) -> bool:
        c = self.cone
        return c.k == 2 and abs(c.d_minus - 1) < 1e-6 and abs(c.d_plus - 1) < 1e-6

    # -- indicator ----------------------------------------------------------

    @cached_property
    def cone(self):
        return ind.limit_cone_estimate(self.data, self.classes if self.data.k == 2 else None)

    @cached_property
    def profile(self):
        return ind.build_profile(self.data, self.cfg.grid_size, self.cfg.eps_schedule, self.cone)

    @cached_property
    def duals(self) -> dict:
        """Dual pairs for the measure checks: u_max, and the diagonal when it is interior."""
        out = {"u_max": ind.dual_at_max(self.profile, self.delta.value)}
        k = self.data.k
        diag = np.ones(k) / math.sqrt(k)
        if float(diag @ self.profile.u_max) > 1 - 1e-9:
            out["diagonal"] = out["u_max"]
        elif k == 2:
            try:
                out["diagonal"] = ind.dual_at_direction(self.profile, diag)
            except (DualConeError, InsufficientDataError) as err:
                out["diagonal"] = None
                self.notes["diagonal"] = str(err)
        return out

    @cached_property
    def notes(self) -> dict:
        return {}

    @cached_property
    def alphas(self) -> dict:
        k = self.data.k
        out = {f"e{i + 1}": np.eye(k)[i] for i in range(k)}
        out["diagonal"] = np.ones(k) / math.sqrt(k)
        if k == 2:
            rng = np.random.default_rng(self.cfg.seed)
            for j, a in enumerate(ind.interior_duals(self.cone, RANDOM_DUALS, rng)):
                out[f"random{j + 1}"] = a
        return out

    # -- limit set ----------------------------------------------------------

    @cached_property
    def samples(self):
        return ls.boundary_samples(self.data)

    @cached_property
    def lam_dim(self):
        return ls.box_dimension(self.samples)


# ---------------------------------------------------------------------------
# stages: each returns (section, checks)


def stage_enumerate(run: Run):
    data = run.data
    return {"points": len(data), "max_word_length": data.max_length,
            "t_cap": None if math.isinf(data.t_cap) else data.t_cap,
            "k": data.k, "boundary_dims": list(data.rep.boundary_dims),
            "fingerprint": data.fingerprint(),
            "loxodromic_fraction": float(np.mean(data.loxodromic))}, []


def stage_exponents(run: Run):
    d = run.data
    sec = {"delta": run.delta, "factor_exponents": run.factor_exps}
    checks = []
    if d.k >= 2:
        ones = np.ones(d.k)
        sec["D_ones"] = sp.manhattan_exponent(d, ones, directions=run.cone.directions)
        dmin, dmax = run.minmax
        sec.update(delta_min=dmin, delta_max=dmax)
        chain = sp.exponent_chain(run.delta, dmax, dmin, d.k)
        checks.append(Check("exponent chain", chain["ok"], chain))
        if run.conjugate:
            d1 = run.factor_exps[0].value
            m1 = run.delta.value - d1 / math.sqrt(d.k)
            m2 = sec["D_ones"].value - d1 / d.k
            collapsed = run.cone.slope_min >= 0.999 and run.cone.slope_max <= 1.001
            ok = collapsed and abs(m1) <= 0.05 and abs(m2) <= 0.03
            checks.append(Check("conjugate degeneracy", ok, {
                "delta_minus_delta1_over_sqrt_k": m1, "tolerance_delta": 0.05,
                "D_ones_minus_delta1_over_k": m2, "tolerance_D": 0.03,
                "slopes": [run.cone.slope_min, run.cone.slope_max],
                "cone_collapsed": collapsed}))
    return sec, checks


def stage_indicator(run: Run):
    prof = run.profile
    sec = {"cone": run.cone, "profile": prof}
    checks = []
    duals = {}
    for name, a in run.alphas.items():
        try:
            duals[name] = ind.dual_vector(prof, a)
        except (DualConeError, InsufficientDataError) as err:
            duals[name] = {"error": str(err)}
    sec["duals"] = duals
    if prof.valid.sum() >= 3:
        checks.append(_guard("duality", ind.duality_check, run.data, prof,
                             list(run.alphas.values()), run.factor_exps))
    else:
        checks.append(Check("duality", None, note="degenerate cone: single profile direction"))
    if run.cfg.twist is not None:
        checks.append(ind.symmetry_check(prof))
    return sec, checks


def stage_tent(run: Run):
    prof, fe = run.profile, run.factor_exps
    checks = []
    if run.conjugate or prof.valid.sum() < 3:
        checks.append(ind.rigidity_check(prof, fe, run.delta))
    else:
        checks.append(_guard("tent property", ind.tent_check, prof, fe))
        checks.append(ind.gap_check(prof, fe, run.lam_dim.value, run.delta, STRICT,
                                    _delta_bound(run.cfg.rep)))
        checks.append(_guard("lower bound", ind.lower_bound_check, prof, fe,
                             hyperbolic_dims=run.cfg.rep.boundary_dims))
    checks.append(ind.thurston_check(run.cone, fe, STRICT))
    dirs = prof.directions[prof.valid]
    sec = {"tent_margins": [{"v": v, "psi": p, "tent": t, "margin": t - p}
                            for v, p, t in zip(dirs, prof.psi[prof.valid],
                                               ind.tent_function(dirs, fe))],
           "box_dimension": run.lam_dim, "delta_bound": _delta_bound(run.cfg.rep)}
    return sec, checks


def stage_limitset(run: Run):
    sec = {"samples": len(run.samples), "box_dimension": run.lam_dim}
    checks = []
    if run.data.k >= 2:
        dmin, dmax = run.minmax
        checks.append(ls.dimension_checks(run.data, run.profile, run.factor_exps, dmin, dmax,
                                          run.lam_dim))
        if run.profile.valid.sum() < 3:
            # a single profile direction has no interior neighbours to bracket
            c = checks[-1]
            c.values["directional_note"] = "degenerate cone: u_max only"
    return sec, checks


def stage_psmeasure(run: Run):
    sec, checks = {}, []
    for name, dual in run.duals.items():
        if dual is None:
            checks.append(Check(f"psi_u abscissa [{name}]", None,
                                note=f"direction on the cone boundary: {run.notes.get(name, '')}"))
            continue
        entry = {"dual": dual}
        c1 = _guard("psi_u abscissa", ls.psu_abscissa_check, run.data, dual)
        c2 = _guard("strip abscissa", ls.strip_abscissa_check, run.data, dual, run.cfg.strip_radii)
        for c in (c1, c2):
            c.name = f"{c.name} [{name}]"
            checks.append(c)
        if c1.ok is None:
            sec[name] = entry
            continue
        absc = c1.values["estimate"].value
        etas = []
        for eta in run.cfg.eta_schedule:
            m = ls.ps_measure(run.data, dual, s=run.cfg.s_override, eta=eta, abscissa=absc)
            etas.append({"eta": eta, **m.to_json()})
        entry["eta_sequence"] = etas
        mid = sorted(run.cfg.eta_schedule)[len(run.cfg.eta_schedule) // 2]
        measure = ls.ps_measure(run.data, dual, s=run.cfg.s_override, eta=mid, abscissa=absc)
        entry["measure"] = measure
        c3 = _guard("shadow lemma", ls.shadow_lemma_check, measure, run.data, seed=run.cfg.seed)
        try:
            centers = ls.directional_samples(run.data, dual.direction, max(run.cfg.strip_radii),
                                             float(np.median(run.data.norms)))
            c4 = ls.ball_decay_check(measure, centers, dual, seed=run.cfg.seed)
        except InsufficientDataError as err:
            c4 = Check("ball decay", None, note=f"insufficient data: {err}")
        for c in (c3, c4):
            c.name = f"{c.name} [{name}]"
            checks.append(c)
        sec[name] = entry
        run.notes.setdefault("measures", {})[name] = measure
    return sec, checks


STAGE_FUNCS = {"enumerate": stage_enumerate, "exponents": stage_exponents,
               "indicator": stage_indicator, "tent": stage_tent, "limitset": stage_limitset,
               "psmeasure": stage_psmeasure}


# ---------------------------------------------------------------------------
# reports


def exit_status(checks, insufficient: bool = False) -> int:
    if any(c.ok is False for c in checks):
        return 2
    if insufficient or any(c.ok is None and c.note.startswith("insufficient") for c in checks):
        return 3
    return 0


def run_stage(run: Run, stage: str) -> dict:
    sec, checks = STAGE_FUNCS[stage](run)
    return {"stage": stage, "section": sec, "checks": checks}


def stage_document(run: Run, result: dict) -> dict:
    return {"schema": SCHEMA, "stage": result["stage"], "config": run.cfg.to_json(),
            "dataset_fingerprint": run.data.fingerprint(),
            result["stage"]: result["section"],
            "checks": [c.to_json() for c in result["checks"]]}


def dumps(doc) -> str:
    return json.dumps(jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def run_pipeline(cfg: ExperimentConfig, out, threads: int | None = None, plots: bool = True):
    """Every stage, then report.json, tables.txt, CSV exports and SVG plots under ``out``.

    Returns (report dict, checks, exit status).
    """
    out = Path(out)
    run = Run(cfg, out, threads, enumerate_missing=True)
    results = [run_stage(run, s) for s in STAGES]
    checks = [c for r in results for c in r["checks"]]
    report = {"schema": SCHEMA, "config": cfg.to_json(),
              "dataset_fingerprint": run.data.fingerprint(),
              "exact": ["config", "dataset_fingerprint", "enumerate"],
              "notes": {k: v for k, v in run.notes.items() if k != "measures"},
              **{r["stage"]: r["section"] for r in results},
              "checks": [c.to_json() for c in checks],
              "summary": {"passed": sum(c.ok is True for c in checks),
                          "failed": sum(c.ok is False for c in checks),
                          "not_applicable": sum(c.ok is None for c in checks)}}
    status = exit_status(checks)
    report["summary"]["exit_status"] = status
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dumps(report))
    (out / "tables.txt").write_text(tables(run, results))
    write_exports(run, out)
    if plots:
        from . import plots as pl

        pl.write_plots(run, out / "plots")
    return report, checks, status


def write_exports(run: Run, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "profile.csv").write_text(run.profile.to_csv())
    s = run.samples
    if len(s) > SAMPLE_EXPORT_CAP:
        rng = np.random.default_rng(run.cfg.seed)
        s = s.subset(np.sort(rng.choice(len(s), SAMPLE_EXPORT_CAP, replace=False)))
    (out / "samples.csv").write_text(s.to_csv())
    for name, m in run.notes.get("measures", {}).items():
        (out / f"atoms_{name}.csv").write_text(m.to_csv())


def _fmt(x) -> str:
    if isinstance(x, sp.ExponentEstimate):
        return f"{x.value:.4f} ± {x.stderr:.4f}"
    if isinstance(x, ls.DimensionEstimate):
        return f"{x.value:.4f} ± {x.stderr:.4f}"
    if isinstance(x, float):
        return f"{x:.4f}"
    return str(x)


def table_lines(stage: str, sec: dict, checks) -> list[str]:
    lines = [f"== {stage} =="]
    if stage == "exponents":
        lines.append(f"  delta          {_fmt(sec['delta'])}")
        for i, e in enumerate(sec["factor_exponents"]):
            lines.append(f"  delta_rho{i + 1}     {_fmt(e)}")
        for key in ("D_ones", "delta_min", "delta_max"):
            if key in sec:
                lines.append(f"  {key:<14} {_fmt(sec[key])}")
    elif stage == "indicator":
        prof = sec["profile"]
        lines.append(f"  u_max          {np.round(prof.u_max, 4).tolist()}  psi_max {prof.psi_max:.4f}")
        for name, d in sec["duals"].items():
            if isinstance(d, ind.DualPair):
                lines.append(f"  u[{name:<9}]   {np.round(d.u_alpha, 4).tolist()}  delta_u {d.delta_u:.4f}")
    elif stage == "tent":
        lines.append("  direction                 psi      tent     margin")
        for r in sec["tent_margins"]:
            v = np.round(r["v"], 4).tolist()
            lines.append(f"  {str(v):<24} {r['psi']:.4f}   {r['tent']:.4f}   {r['margin']:+.4f}")
    elif stage == "limitset":
        lines.append(f"  samples        {sec['samples']}")
        lines.append(f"  box dimension  {_fmt(sec['box_dimension'])}")
    elif stage == "psmeasure":
        for name, e in sec.items():
            for row in e.get("eta_sequence", []):
                lines.append(f"  [{name}] eta {row['eta']:.2f}  s {row['s']:.4f}  atoms {row['atoms']}")
    elif stage == "enumerate":
        for key in ("points", "max_word_length", "fingerprint"):
            lines.append(f"  {key:<16} {sec[key]}")
    lines += ["  " + c.line() for c in checks]
    return lines


def tables(run: Run, results) -> str:
    lines = [f"configuration {run.cfg.name}  L = {run.cfg.max_word_length}"]
    for r in results:
        lines += table_lines(r["stage"], r["section"], r["checks"])
    return "\n".join(lines) + "\n"
