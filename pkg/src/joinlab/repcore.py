"""Rank-one hyperbolic matrix kernel for PSL(2,R) and PSL(2,C) factors.

Isometries are plain 2x2 numpy arrays with unit determinant.  The basepoint
is ``i`` in the upper half-plane (``j`` in upper half-space), which is the
origin of the ball model; boundary points are unit vectors obtained from
homogeneous coordinates ``(x : y)`` by inverse stereographic projection, with
``infinity = (1 : 0)`` sent to the last coordinate axis.

Most functions come in two flavours: a scalar one taking a single matrix and
a ``batch_*`` one taking the four entry arrays ``a, b, c, d`` of a stack of
matrices.  The orbit enumerator only uses the batch kernels.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DET_TOL = 1e-12
LOX_TOL = 1e-9
ACOSH_CLAMP = 1e-12
DET_RENORM_LIMIT = 1e3


class RepresentationError(ValueError):
    """Invalid generator data or factor layout."""


class NonLoxodromicError(ValueError):
    pass


class NonReducedWordError(ValueError):
    pass


class FactorKind(enum.Enum):
    REAL2 = "Real2"
    COMPLEX3 = "Complex3"

    @property
    def boundary_dim(self) -> int:
        return 1 if self is FactorKind.REAL2 else 2

    @property
    def ambient_dim(self) -> int:
        """Dimension of the Euclidean space containing the boundary sphere."""
        return self.boundary_dim + 1

    @property
    def dtype(self):
        return np.float64 if self is FactorKind.REAL2 else np.complex128


# ---------------------------------------------------------------------------
# words


def letter_inverse(x: int) -> int:
    return x ^ 1


def is_reduced(word: Sequence[int]) -> bool:
    return all(word[i + 1] != (word[i] ^ 1) for i in range(len(word) - 1))


def word_inverse(word: Sequence[int]) -> tuple[int, ...]:
    return tuple(x ^ 1 for x in reversed(word))


def word_from_str(text: str) -> tuple[int, ...]:
    """Parse ``"abA"`` style words: lowercase letters are generators, uppercase their inverses."""
    out = []
    for ch in text.strip():
        if ch.isspace():
            continue
        if not ch.isalpha():
            raise ValueError(f"bad letter {ch!r} in word {text!r}")
        j = ord(ch.lower()) - ord("a")
        out.append(2 * j + (1 if ch.isupper() else 0))
    return tuple(out)


def word_to_str(word: Sequence[int]) -> str:
    return "".join(
        chr(ord("a") + x // 2).upper() if x & 1 else chr(ord("a") + x // 2) for x in word
    )


# ---------------------------------------------------------------------------
# matrices


def normalize(m) -> np.ndarray:
    """Rescale to determinant one and pick the sign with non-negative real trace."""
    m = np.asarray(m)
    kind = np.complex128 if np.iscomplexobj(m) else np.float64
    m = m.astype(kind)
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if abs(det) < 1e-300:
        raise RepresentationError("singular matrix")
    if kind is np.float64:
        if det < 0:
            raise RepresentationError("real generator with negative determinant is not in PSL(2,R)")
        m = m / np.sqrt(det)
    else:
        m = m / np.sqrt(complex(det))
    if np.real(m[0, 0] + m[1, 1]) < 0:
        m = -m
    return m


def inverse(m: np.ndarray) -> np.ndarray:
    return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])


def batch_multiply(a, b, c, d, e, f, g, h):
    """Entries of ``[[a, b], [c, d]] @ [[e, f], [g, h]]``, determinant-renormalized and sign-fixed.

    The determinant is only trusted (and divided out) while ``|ps| + |qr|``
    stays below ``DET_RENORM_LIMIT``; beyond that the computed ``ps - qr`` is
    dominated by rounding while the entries themselves still carry only
    relative rounding error, so rescaling would inject noise instead of
    removing drift.
    """
    p = a * e + b * g
    q = a * f + b * h
    r = c * e + d * g
    s = c * f + d * h
    ps, qr = p * s, q * r
    det = ps - qr
    trusted = (np.abs(ps) + np.abs(qr)) <= DET_RENORM_LIMIT
    det = np.where(trusted, det, 1.0)
    scale = 1.0 / np.sqrt(det)
    p, q, r, s = p * scale, q * scale, r * scale, s * scale
    flip = np.real(p + s) < 0
    if np.any(flip):
        sign = np.where(flip, -1.0, 1.0)
        p, q, r, s = p * sign, q * sign, r * sign, s * sign
    return p, q, r, s


def batch_displacement(a, b, c, d) -> np.ndarray:
    """d(g.o, o) for a stack of unit-determinant matrices.

    Uses cosh d = |g|_F^2 / 2 rewritten as sinh^2(d/2) = (|a - conj d|^2 + |b + conj c|^2) / 4,
    which avoids the cancellation of arccosh near 1.
    """
    half_frob = 0.5 * (np.abs(a) ** 2 + np.abs(b) ** 2 + np.abs(c) ** 2 + np.abs(d) ** 2)
    if np.any(half_frob < 1.0 - ACOSH_CLAMP):
        raise RepresentationError("Frobenius norm below the SL(2) minimum; matrix is corrupted")
    s2 = 0.25 * (np.abs(a - np.conj(d)) ** 2 + np.abs(b + np.conj(c)) ** 2)
    return 2.0 * np.arcsinh(np.sqrt(s2))


def _dominant_eigenvalue(a, d, sign_ok=True):
    t = np.asarray(a + d, dtype=np.complex128)
    disc = np.sqrt((t - 2.0) * (t + 2.0))
    lam_p = 0.5 * (t + disc)
    lam_m = 0.5 * (t - disc)
    return np.where(np.abs(lam_p) >= np.abs(lam_m), lam_p, lam_m)


def batch_eigen_modulus(a, d) -> np.ndarray:
    """Modulus of the larger eigenvalue (always >= 1 for unit determinant)."""
    return np.abs(_dominant_eigenvalue(a, d))


def batch_is_loxodromic(a, d) -> np.ndarray:
    lam = batch_eigen_modulus(a, d)
    return lam * lam > 1.0 + LOX_TOL


def batch_translation_length(a, d) -> np.ndarray:
    return 2.0 * np.log(batch_eigen_modulus(a, d))


def homogeneous_to_sphere(x, y, kind: FactorKind) -> np.ndarray:
    """Inverse stereographic projection of ``(x : y)``; ``(1 : 0)`` maps to the last axis."""
    x = np.asarray(x)
    y = np.asarray(y)
    n2 = np.abs(x) ** 2 + np.abs(y) ** 2
    xy = x * np.conj(y)
    top = (np.abs(x) ** 2 - np.abs(y) ** 2) / n2
    if kind is FactorKind.REAL2:
        return np.stack([2.0 * np.real(xy) / n2, top], axis=-1)
    return np.stack([2.0 * np.real(xy) / n2, 2.0 * np.imag(xy) / n2, top], axis=-1)


def sphere_to_homogeneous(p, kind: FactorKind):
    """Inverse of :func:`homogeneous_to_sphere`, choosing the better-conditioned chart."""
    p = np.asarray(p, dtype=np.float64)
    last = p[..., -1]
    if kind is FactorKind.REAL2:
        w = p[..., 0].astype(np.complex128)
    else:
        w = p[..., 0] + 1j * p[..., 1]
    south = last < 0
    x = np.where(south, w, 1.0 + last)
    y = np.where(south, 1.0 - last, np.conj(w))
    return x, y


def batch_attracting_point(a, b, c, d, kind: FactorKind) -> np.ndarray:
    """Attracting fixed points on the boundary sphere; NaN rows for non-loxodromic input."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    c = np.asarray(c, dtype=np.complex128)
    d = np.asarray(d, dtype=np.complex128)
    lam = _dominant_eigenvalue(a, d)
    # two candidate eigenvectors; take the larger one to avoid (0 : 0)
    x1, y1 = b, lam - a
    x2, y2 = lam - d, c
    use1 = (np.abs(x1) ** 2 + np.abs(y1) ** 2) >= (np.abs(x2) ** 2 + np.abs(y2) ** 2)
    x = np.where(use1, x1, x2)
    y = np.where(use1, y1, y2)
    pts = homogeneous_to_sphere(x, y, kind)
    lox = np.abs(lam) ** 2 > 1.0 + LOX_TOL
    return np.where(lox[..., None], pts, np.nan)


def batch_boundary_action(a, b, c, d, points, kind: FactorKind) -> np.ndarray:
    x, y = sphere_to_homogeneous(points, kind)
    return homogeneous_to_sphere(a * x + b * y, c * x + d * y, kind)


# ---------------------------------------------------------------------------
# scalar conveniences


def _entries(g):
    g = np.asarray(g)
    return g[0, 0], g[0, 1], g[1, 0], g[1, 1]


def displacement(g) -> float:
    return float(batch_displacement(*_entries(g)))


def is_loxodromic(g) -> bool:
    a, _, _, d = _entries(g)
    return bool(batch_is_loxodromic(a, d))


def translation_length(g) -> float:
    a, _, _, d = _entries(g)
    if not batch_is_loxodromic(a, d):
        raise NonLoxodromicError("translation length requested for a non-loxodromic element")
    return float(batch_translation_length(a, d))


def attracting_point(g, kind: FactorKind) -> np.ndarray:
    a, b, c, d = _entries(g)
    if not batch_is_loxodromic(a, d):
        raise NonLoxodromicError("non-loxodromic element has no attracting point")
    return batch_attracting_point(a, b, c, d, kind)


def boundary_action(h, point, kind: FactorKind) -> np.ndarray:
    a, b, c, d = _entries(h)
    return batch_boundary_action(a, b, c, d, point, kind)


def chordal_distance(p, q) -> np.ndarray:
    return np.linalg.norm(np.asarray(p) - np.asarray(q), axis=-1)


# ---------------------------------------------------------------------------
# representations


@dataclass(frozen=True)
class Factor:
    kind: FactorKind
    generators: tuple[np.ndarray, ...]

    def letter_matrix(self, x: int) -> np.ndarray:
        g = self.generators[x // 2]
        return inverse(g) if x & 1 else g


@dataclass(frozen=True)
class RepresentationSpec:
    """Free group of rank ``rank`` mapped into a product of ``k`` rank-one factors."""

    rank: int
    factors: tuple[Factor, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.rank < 1:
            raise RepresentationError("rank must be at least 1")
        if not 1 <= len(self.factors) <= 3:
            raise RepresentationError(
                f"k = {len(self.factors)} factors; the strip theorem behind the "
                "estimators needs 1 <= k <= 3"
            )
        fixed = []
        for i, fac in enumerate(self.factors):
            if len(fac.generators) != self.rank:
                raise RepresentationError(
                    f"factor {i} has {len(fac.generators)} generators, expected {self.rank}"
                )
            gens = []
            for j, g in enumerate(fac.generators):
                g = np.asarray(g)
                if g.shape != (2, 2):
                    raise RepresentationError(f"generator {j} of factor {i} is not 2x2")
                if fac.kind is FactorKind.REAL2:
                    if np.iscomplexobj(g):
                        if np.any(np.abs(np.imag(g)) > 0):
                            raise RepresentationError(f"factor {i} is Real2 but generator {j} is complex")
                        g = np.real(g)
                    g = normalize(g.astype(np.float64))
                else:
                    g = normalize(g.astype(np.complex128))
                if not is_loxodromic(g):
                    raise NonLoxodromicError(f"generator {j} of factor {i} is not loxodromic")
                g.setflags(write=False)
                gens.append(g)
            fixed.append(Factor(fac.kind, tuple(gens)))
        object.__setattr__(self, "factors", tuple(fixed))

    @property
    def k(self) -> int:
        return len(self.factors)

    @property
    def kinds(self) -> tuple[FactorKind, ...]:
        return tuple(f.kind for f in self.factors)

    @property
    def boundary_dims(self) -> tuple[int, ...]:
        return tuple(f.kind.ambient_dim for f in self.factors)

    def to_json(self) -> dict:
        out = {"rank": self.rank, "factors": []}
        for fac in self.factors:
            gens = []
            for g in fac.generators:
                if fac.kind is FactorKind.REAL2:
                    gens.append([[float(v) for v in row] for row in g])
                else:
                    gens.append([[[float(v.real), float(v.imag)] for v in row] for row in g])
            out["factors"].append({"kind": fac.kind.value, "generators": gens})
        return out


def compose(word: Sequence[int], rep: RepresentationSpec, factor: int) -> np.ndarray:
    """rho_factor(word) as a left-to-right product of generator matrices."""
    if not 0 <= factor < rep.k:
        raise IndexError(f"factor {factor} out of range for k = {rep.k}")
    if not is_reduced(word):
        raise NonReducedWordError(f"word {word_to_str(word)!r} is not reduced")
    fac = rep.factors[factor]
    if any(not 0 <= x < 2 * rep.rank for x in word):
        raise ValueError("letter outside the alphabet")
    if not word:
        return np.eye(2, dtype=fac.kind.dtype)
    if len(word) == 1:
        return fac.letter_matrix(word[0]).copy()
    m = fac.letter_matrix(word[0])
    a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    for x in word[1:]:
        n = fac.letter_matrix(x)
        a, b, c, d = batch_multiply(a, b, c, d, n[0, 0], n[0, 1], n[1, 0], n[1, 1])
    return np.array([[a, b], [c, d]])


# ---------------------------------------------------------------------------
# standard matrices used by the bundled configurations and tests


def diag(lam) -> np.ndarray:
    lam = complex(lam) if np.iscomplexobj(lam) else float(lam)
    return np.array([[lam, 0.0], [0.0, 1.0 / lam]])


def rotation(theta: float) -> np.ndarray:
    """Elliptic element fixing the basepoint; rotates the boundary circle by ``2 * theta``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def axial_rotation(phi: float) -> np.ndarray:
    """Complex elliptic element rotating H^3 by angle ``phi`` about the geodesic 0 -> infinity."""
    return np.array([[np.exp(0.5j * phi), 0.0], [0.0, np.exp(-0.5j * phi)]])


def conjugate(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    return normalize(h @ g @ np.linalg.inv(h))
