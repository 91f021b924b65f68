"""Minimal SVG figures written as plain text."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import indicator as ind

W, H, PAD = 480, 360, 48


class Canvas:
    """Fixed-size SVG canvas with a linear data-to-pixel map."""

    def __init__(self, xlim, ylim, title: str = ""):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.parts = []
        if title:
            self.text(W / 2, PAD / 2, title, anchor="middle", size=14)
        self._axes()

    def px(self, x, y):
        sx = PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2 * PAD)
        sy = H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2 * PAD)
        return sx, sy

    def _axes(self):
        a, b = self.px(self.x0, self.y0), self.px(self.x1, self.y1)
        self.parts.append(f'<rect x="{a[0]:.1f}" y="{b[1]:.1f}" width="{b[0] - a[0]:.1f}" '
                          f'height="{a[1] - b[1]:.1f}" fill="none" stroke="#444"/>')
        for x in np.linspace(self.x0, self.x1, 5):
            sx, sy = self.px(x, self.y0)
            self.text(sx, sy + 16, f"{x:.3g}", anchor="middle")
        for y in np.linspace(self.y0, self.y1, 5):
            sx, sy = self.px(self.x0, y)
            self.text(sx - 6, sy + 4, f"{y:.3g}", anchor="end")

    def text(self, x, y, s, anchor="start", size=11):
        self.parts.append(f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" '
                          f'text-anchor="{anchor}" font-family="sans-serif">{s}</text>')

    def polyline(self, xs, ys, color="#000", width=1.5, dash=None):
        pts = " ".join("{:.1f},{:.1f}".format(*self.px(x, y))
                       for x, y in zip(xs, ys) if np.isfinite(x) and np.isfinite(y))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}"{extra}/>')

    def points(self, xs, ys, color="#000", r=1.0, opacity=0.5):
        for x, y in zip(xs, ys):
            sx, sy = self.px(x, y)
            self.parts.append(f'<circle cx="{sx:.1f}" cy="{sy:.1f}" r="{r}" fill="{color}" '
                              f'fill-opacity="{opacity}"/>')

    def arrow(self, x, y, color, label):
        (ax, ay), (bx, by) = self.px(0, 0), self.px(x, y)
        self.parts.append(f'<line x1="{ax:.1f}" y1="{ay:.1f}" x2="{bx:.1f}" y2="{by:.1f}" '
                          f'stroke="{color}" stroke-width="2"/>')
        self.text(bx + 4, by - 4, label)

    def legend(self, rows):
        for j, (color, label) in enumerate(rows):
            y = PAD + 14 + 14 * j
            self.parts.append(f'<rect x="{W - PAD - 110}" y="{y - 8}" width="10" height="10" fill="{color}"/>')
            self.text(W - PAD - 96, y + 1, label)

    def svg(self) -> str:
        body = "\n".join(self.parts)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
                f'viewBox="0 0 {W} {H}">\n<rect width="{W}" height="{H}" fill="white"/>\n{body}\n</svg>\n')


def _range(vals, pad=0.05):
    vals = np.asarray(vals, dtype=float)
    vals = vals[np.isfinite(vals)]
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


def profile_svg(profile, factor_exponents) -> str:
    """psi along the angular grid (k = 2) with the tent overlay."""
    ok = profile.valid
    th = np.degrees(profile.angles[ok])
    psi = profile.psi[ok]
    fine = np.linspace(th.min(), th.max(), 200) if len(th) > 1 else th
    dirs = np.column_stack([np.cos(np.radians(fine)), np.sin(np.radians(fine))])
    tent = ind.tent_function(dirs, factor_exponents)
    c = Canvas(_range(th), _range(np.concatenate([psi, tent])), "growth indicator and tent")
    c.polyline(fine, tent, "#c33", dash="5,3")
    c.polyline(th, psi, "#236")
    c.points(th, psi, "#236", r=2.0, opacity=1.0)
    c.legend([("#236", "psi estimate"), ("#c33", "tent")])
    return c.svg()


def cone_svg(profile, duals: dict) -> str:
    """Limit cone in the (mu_1, mu_2) plane with u_{e_i} and u_max."""
    cone = profile.cone
    vecs = {k: d.u_alpha for k, d in duals.items() if isinstance(d, ind.DualPair)}
    vecs["u_max"] = profile.u_max
    m = max([1.0] + [float(np.max(v)) for v in vecs.values()]) * 1.1
    c = Canvas((0, m), (0, m), "limit cone and dual vectors")
    for d in cone.directions:
        c.polyline([0, m * d[0] / max(d)], [0, m * d[1] / max(d)], "#999", dash="4,3")
    colors = {"u_max": "#c33"}
    palette = ["#236", "#393", "#939", "#963", "#366"]
    for j, (k, v) in enumerate(sorted(vecs.items())):
        c.arrow(v[0], v[1], colors.get(k, palette[j % len(palette)]), k)
    return c.svg()


def limitset_svg(samples, n: int = 4000, seed: int = 0) -> str:
    """First boundary coordinate angle of each factor against the next."""
    rng = np.random.default_rng(seed)
    sel = np.sort(rng.choice(len(samples), size=min(n, len(samples)), replace=False))
    a = [np.degrees(np.arctan2(samples.factor(i)[sel, 1], samples.factor(i)[sel, 0]))
         for i in range(min(2, samples.k))]
    if len(a) == 1:
        a.append(np.zeros_like(a[0]))
    c = Canvas((-180, 180), (-180, 180), "limit set (boundary angles)")
    c.points(a[0], a[1], "#236", r=0.8)
    return c.svg()


def write_plots(run, folder) -> None:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    prof = run.profile
    if prof.k == 2:
        (folder / "profile.svg").write_text(profile_svg(prof, run.factor_exps))
        duals = {}
        for i in range(prof.k):
            key = f"e{i + 1}"
            try:
                duals[f"u_{key}"] = ind.dual_vector(prof, np.eye(prof.k)[i])
            except (ind.DualConeError, ind.InsufficientDataError):
                pass
        (folder / "cone.svg").write_text(cone_svg(prof, duals))
    (folder / "limitset.svg").write_text(limitset_svg(run.samples, seed=run.cfg.seed))
