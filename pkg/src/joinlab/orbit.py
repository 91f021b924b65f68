"""Enumeration of the joined orbit over reduced words, plus conjugacy classes.

The dataset is columnar: one array per quantity, rows sorted by the Euclidean
norm of the Cartan vector.  Words are packed into a single ``uint64`` per row
(``ceil(log2(2r))`` bits per letter, first letter in the lowest bits) with a
separate ``uint8`` length column.
"""
from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import repcore
from .repcore import FactorKind, RepresentationSpec

log = logging.getLogger(__name__)

MAGIC = b"JLAB"
FORMAT_VERSION = 1
DEFAULT_MEMORY_BUDGET = 3 * 2**30


class EnumerationBudgetError(RuntimeError):
    """Raised when the next depth would exceed the memory budget.

    ``completed_depth`` is the deepest fully enumerated level and ``partial``
    holds the dataset up to that depth.
    """

    def __init__(self, completed_depth: int, partial: "OrbitDataset | None"):
        super().__init__(f"memory budget exceeded; completed depth {completed_depth}")
        self.completed_depth = completed_depth
        self.partial = partial


class CacheFormatError(ValueError):
    pass


def bits_per_letter(rank: int) -> int:
    return max(1, math.ceil(math.log2(2 * rank)))


def words_at_depth(rank: int, n: int) -> int:
    if n == 0:
        return 1
    return 2 * rank * (2 * rank - 1) ** (n - 1)


def pack_word(word: Sequence[int], rank: int) -> int:
    b = bits_per_letter(rank)
    code = 0
    for i, x in enumerate(word):
        code |= int(x) << (b * i)
    return code


def unpack_word(code: int, length: int, rank: int) -> tuple[int, ...]:
    b = bits_per_letter(rank)
    mask = (1 << b) - 1
    code = int(code)
    return tuple((code >> (b * i)) & mask for i in range(length))


@dataclass(frozen=True)
class OrbitPoint:
    word: tuple[int, ...]
    mu: np.ndarray
    xi: tuple[np.ndarray, ...] | None

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.mu))


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


class OrbitDataset:
    """Immutable table of orbit points sorted by ``|mu|``.

    ``frontier_mu`` holds the Cartan vectors of the deepest enumerated words of
    the *parent* enumeration; subsets keep the parent's frontier so that
    counting horizons stay honest after filtering.
    """

    def __init__(self, rep, max_length, t_cap, lengths, codes, mu, xi, loxodromic,
                 frontier_mu=None, _sorted=False):
        self.rep = rep
        self.max_length = int(max_length)
        self.t_cap = float(t_cap)
        lengths = np.asarray(lengths, dtype=np.uint8)
        codes = np.asarray(codes, dtype=np.uint64)
        mu = np.asarray(mu, dtype=np.float64).reshape(len(lengths), rep.k)
        xi = np.asarray(xi, dtype=np.float64).reshape(len(lengths), sum(rep.boundary_dims))
        loxodromic = np.asarray(loxodromic, dtype=bool)
        norms = np.sqrt(np.sum(mu * mu, axis=1))
        if not _sorted:
            order = np.lexsort((codes, lengths, norms))
            lengths, codes, mu, xi, loxodromic, norms = (
                lengths[order], codes[order], mu[order], xi[order], loxodromic[order], norms[order])
        if frontier_mu is None:
            frontier_mu = mu[lengths == self.max_length]
        frontier_mu = np.asarray(frontier_mu, dtype=np.float64).reshape(-1, rep.k)
        self.lengths, self.codes, self.mu, self.xi = lengths, codes, mu, xi
        self.loxodromic, self.norms, self.frontier_mu = loxodromic, norms, frontier_mu
        _freeze(self.lengths, self.codes, self.mu, self.xi, self.loxodromic, self.norms,
                self.frontier_mu)

    def __len__(self) -> int:
        return len(self.lengths)

    def __repr__(self) -> str:
        return (f"OrbitDataset(k={self.k}, rank={self.rep.rank}, L={self.max_length}, "
                f"points={len(self)})")

    @property
    def k(self) -> int:
        return self.rep.k

    def factor_slices(self) -> list[slice]:
        out, start = [], 0
        for n in self.rep.boundary_dims:
            out.append(slice(start, start + n))
            start += n
        return out

    def xi_factor(self, i: int) -> np.ndarray:
        return self.xi[:, self.factor_slices()[i]]

    def word(self, idx: int) -> tuple[int, ...]:
        return unpack_word(self.codes[idx], self.lengths[idx], self.rep.rank)

    def point(self, idx: int) -> OrbitPoint:
        xi = None
        if self.loxodromic[idx]:
            xi = tuple(self.xi[idx, s].copy() for s in self.factor_slices())
        return OrbitPoint(self.word(idx), self.mu[idx].copy(), xi)

    def subset(self, mask_or_index) -> "OrbitDataset":
        sel = np.asarray(mask_or_index)
        if sel.dtype != bool:
            sel = np.sort(sel)
        return OrbitDataset(self.rep, self.max_length, self.t_cap, self.lengths[sel],
                            self.codes[sel], self.mu[sel], self.xi[sel], self.loxodromic[sel],
                            frontier_mu=self.frontier_mu, _sorted=True)

    def horizon(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Largest T below which the count of f-values is believed complete.

        Unenumerated words extend a frontier word, so their score is bounded
        below by the frontier minimum (up to the bounded backtracking of a
        quasi-geodesic word path).  A finite displacement cap adds the bound
        ``T_cap * min f/|mu|`` over the stored directions.
        """
        h = math.inf
        if len(self.frontier_mu):
            h = float(np.min(f(self.frontier_mu)))
        if math.isfinite(self.t_cap) and len(self):
            nz = self.norms > 0
            ratio = f(self.mu[nz]) / self.norms[nz]
            h = min(h, self.t_cap * float(np.min(ratio)))
        return h

    def fingerprint(self) -> str:
        return hashlib.sha256(dataset_to_bytes(self)).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, OrbitDataset):
            return NotImplemented
        return dataset_to_bytes(self) == dataset_to_bytes(other)

    __hash__ = None


# ---------------------------------------------------------------------------
# enumeration


def _generator_tables(rep: RepresentationSpec):
    """Per factor, per letter: (a, b, c, d) scalars."""
    tables = []
    for fac in rep.factors:
        row = []
        for x in range(2 * rep.rank):
            m = fac.letter_matrix(x)
            row.append((m[0, 0], m[0, 1], m[1, 0], m[1, 1]))
        tables.append(row)
    return tables


class _Level:
    """Words of one depth inside one subtree, with their factor matrices."""

    __slots__ = ("codes", "last", "mats")

    def __init__(self, codes, last, mats):
        self.codes = codes
        self.last = last
        self.mats = mats  # list over factors of (a, b, c, d)


def _extend(level: _Level, tables, rank: int, depth: int) -> _Level:
    """Append one letter to every word of ``level`` (producing words of length depth+1)."""
    b = bits_per_letter(rank)
    codes, lasts, mats = [], [], [[[] for _ in range(4)] for _ in tables]
    for x in range(2 * rank):
        keep = level.last != (x ^ 1)
        if not np.any(keep):
            continue
        codes.append(level.codes[keep] | np.uint64(x << (b * depth)))
        lasts.append(np.full(int(keep.sum()), x, dtype=np.int8))
        for fi, table in enumerate(tables):
            a, bb, c, d = (m[keep] for m in level.mats[fi])
            e, f, g, h = table[x]
            prod = repcore.batch_multiply(a, bb, c, d, e, f, g, h)
            for j in range(4):
                mats[fi][j].append(prod[j])
    return _Level(np.concatenate(codes), np.concatenate(lasts),
                  [tuple(np.concatenate(m[j]) for j in range(4)) for m in mats])


def _describe(level: _Level, rep: RepresentationSpec, depth: int):
    """mu, xi and loxodromic flags for the words of a level."""
    n = len(level.codes)
    mu = np.empty((n, rep.k))
    xis = []
    lox = np.ones(n, dtype=bool)
    for fi, fac in enumerate(rep.factors):
        a, b, c, d = level.mats[fi]
        mu[:, fi] = repcore.batch_displacement(a, b, c, d)
        lox &= repcore.batch_is_loxodromic(a, d)
        xis.append(repcore.batch_attracting_point(a, b, c, d, fac.kind))
    xi = np.concatenate(xis, axis=1)
    xi[~lox] = np.nan
    lengths = np.full(n, depth, dtype=np.uint8)
    return lengths, level.codes, mu, xi, lox


def _subtree(root: _Level, root_depth: int, max_depth: int, rep, tables, t_cap: float,
             max_gen_norm: float):
    """Enumerate the subtree below ``root`` (exclusive) down to ``max_depth``."""
    chunks = []
    level = root
    for depth in range(root_depth, max_depth):
        if len(level.codes) == 0:
            break
        level = _extend(level, tables, rep.rank, depth)
        chunk = _describe(level, rep, depth + 1)
        norms = np.sqrt(np.sum(chunk[2] ** 2, axis=1))
        if math.isfinite(t_cap):
            store = norms <= t_cap
            chunks.append(tuple(arr[store] for arr in chunk))
            remaining = max_depth - (depth + 1)
            # triangle inequality: descendants have |mu| >= |mu(w)| - remaining * max generator norm
            alive = norms - remaining * max_gen_norm <= t_cap
            level = _Level(level.codes[alive], level.last[alive],
                           [tuple(m[alive] for m in mats) for mats in level.mats])
        else:
            chunks.append(chunk)
    return chunks


def _concat(chunks, k, nxi):
    if not chunks:
        return (np.zeros(0, np.uint8), np.zeros(0, np.uint64), np.zeros((0, k)),
                np.zeros((0, nxi)), np.zeros(0, bool))
    return tuple(np.concatenate([c[j] for c in chunks]) for j in range(5))


def _bytes_per_point(rep) -> int:
    # stored columns plus a generous allowance for matrix scratch during extension
    return 8 * rep.k + 8 * sum(rep.boundary_dims) + 1 + 8 + 1 + 8 + 4 * 16 * rep.k * 3


def enumerate_orbit(rep: RepresentationSpec, max_length: int = 12, t_cap: float = math.inf,
                    threads: int = 1, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> OrbitDataset:
    """Breadth-first enumeration of reduced words up to ``max_length``.

    Subtrees below the depth-2 prefixes are processed independently (and in
    parallel when ``threads > 1``); the merge is a single stable sort, so the
    output does not depend on the thread count.
    """
    if max_length < 1:
        raise ValueError("max_length must be >= 1")
    if not t_cap > 0:
        raise ValueError("t_cap must be positive")
    if max_length * bits_per_letter(rep.rank) > 64:
        raise ValueError(f"words of length {max_length} do not fit the 64-bit packing for rank {rep.rank}")

    per_point = _bytes_per_point(rep)
    total, reachable = 0, 0
    for n in range(1, max_length + 1):
        total += words_at_depth(rep.rank, n)
        if total * per_point > memory_budget:
            break
        reachable = n
    if reachable == 0:
        raise EnumerationBudgetError(0, None)

    depth_limit = reachable
    tables = _generator_tables(rep)
    k, nxi = rep.k, sum(rep.boundary_dims)

    gen_mu = np.array([[repcore.displacement(f.generators[j]) for f in rep.factors]
                       for j in range(rep.rank)])
    max_gen_norm = float(np.max(np.linalg.norm(gen_mu, axis=1)))

    # depth 1
    first = _Level(np.arange(2 * rep.rank, dtype=np.uint64),
                   np.arange(2 * rep.rank, dtype=np.int8),
                   [tuple(np.array([t[x][j] for x in range(2 * rep.rank)]) for j in range(4))
                    for t in tables])
    chunks = [_describe(first, rep, 1)]
    if math.isfinite(t_cap):
        norms = np.sqrt(np.sum(chunks[0][2] ** 2, axis=1))
        chunks[0] = tuple(arr[norms <= t_cap] for arr in chunks[0])

    if depth_limit >= 2:
        roots = []
        for x in range(2 * rep.rank):
            sel = np.array([x])
            roots.append(_Level(first.codes[sel], first.last[sel],
                                [tuple(m[sel] for m in mats) for mats in first.mats]))
        # depth-2 prefixes: split each depth-1 root into its children
        prefix_levels = []
        for root in roots:
            lvl2 = _extend(root, tables, rep.rank, 1)
            for i in range(len(lvl2.codes)):
                sel = np.array([i])
                prefix_levels.append(_Level(lvl2.codes[sel], lvl2.last[sel],
                                            [tuple(m[sel] for m in mats) for mats in lvl2.mats]))

        def work(prefix: _Level):
            own = _describe(prefix, rep, 2)
            if math.isfinite(t_cap):
                nrm = np.sqrt(np.sum(own[2] ** 2, axis=1))
                stored = tuple(arr[nrm <= t_cap] for arr in own)
                if float(nrm[0]) - (depth_limit - 2) * max_gen_norm > t_cap:
                    return [stored]
                return [stored] + _subtree(prefix, 2, depth_limit, rep, tables, t_cap, max_gen_norm)
            return [own] + _subtree(prefix, 2, depth_limit, rep, tables, t_cap, max_gen_norm)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(work, prefix_levels))
        else:
            results = [work(p) for p in prefix_levels]
        for r in results:
            chunks.extend(r)

    cols = _concat(chunks, k, nxi)
    data = OrbitDataset(rep, depth_limit, t_cap, *cols)
    log.info("enumerated %d points up to length %d", len(data), depth_limit)
    if depth_limit < max_length:
        raise EnumerationBudgetError(depth_limit, data)
    return data


# ---------------------------------------------------------------------------
# filters


def filter_cone(data: OrbitDataset, v, eps: float) -> OrbitDataset:
    """Points whose Cartan vector makes an angle < eps with the unit direction v."""
    v = np.asarray(v, dtype=np.float64)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    nz = data.norms > 0
    cos = np.full(len(data), -2.0)
    cos[nz] = (data.mu[nz] @ v) / data.norms[nz]
    return data.subset(nz & (cos > math.cos(eps)))


def strip_distance(mu: np.ndarray, u) -> np.ndarray:
    """Euclidean distance from each row of mu to the ray R_{>=0} u."""
    u = np.asarray(u, dtype=np.float64)
    t = np.maximum(mu @ u, 0.0)
    return np.linalg.norm(mu - t[:, None] * u[None, :], axis=1)


def filter_strip(data: OrbitDataset, u, width: float) -> OrbitDataset:
    u = np.asarray(u, dtype=np.float64)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    if not width > 0:
        raise ValueError("strip width must be positive")
    return data.subset(strip_distance(data.mu, u) <= width)


# ---------------------------------------------------------------------------
# conjugacy classes


@dataclass(frozen=True)
class ConjugacyClassEntry:
    word: tuple[int, ...]
    lengths: tuple[float, ...]

    @property
    def name(self) -> str:
        return repcore.word_to_str(self.word)


def canonical_class_word(word: Sequence[int]) -> tuple[int, ...]:
    """Lexicographically least cyclic rotation of the word or of its inverse."""
    w = tuple(word)
    inv = repcore.word_inverse(w)
    n = len(w)
    return min(min(w[i:] + w[:i] for i in range(n)), min(inv[i:] + inv[:i] for i in range(n)))


def _reduced_words(rank: int, max_length: int) -> Iterable[tuple[int, ...]]:
    level = [(x,) for x in range(2 * rank)]
    yield from level
    for _ in range(max_length - 1):
        level = [w + (x,) for w in level for x in range(2 * rank) if x != (w[-1] ^ 1)]
        yield from level


def enumerate_conjugacy_classes(rep: RepresentationSpec, max_length: int = 8) -> list[ConjugacyClassEntry]:
    """One entry per conjugacy class of cyclically reduced words up to ``max_length``."""
    if max_length < 1:
        raise ValueError("max_length must be >= 1")
    out = []
    for w in _reduced_words(rep.rank, max_length):
        if len(w) > 1 and w[-1] == (w[0] ^ 1):
            continue
        if canonical_class_word(w) != w:
            continue
        lens = []
        ok = True
        for fi in range(rep.k):
            g = repcore.compose(w, rep, fi)
            if not repcore.is_loxodromic(g):
                ok = False
                break
            lens.append(repcore.translation_length(g))
        if ok:
            out.append(ConjugacyClassEntry(w, tuple(lens)))
    return out


# ---------------------------------------------------------------------------
# binary cache

_HEADER = struct.Struct("<4sHBBHdQ")


def rep_fingerprint(rep: RepresentationSpec) -> bytes:
    return hashlib.sha256(json.dumps(rep.to_json(), sort_keys=True).encode()).digest()


def dataset_to_bytes(data: OrbitDataset) -> bytes:
    buf = io.BytesIO()
    rep = data.rep
    buf.write(_HEADER.pack(MAGIC, FORMAT_VERSION, rep.k, rep.rank, data.max_length,
                           data.t_cap, len(data)))
    buf.write(bytes(f.kind is FactorKind.COMPLEX3 for f in rep.factors))
    buf.write(rep_fingerprint(rep))
    buf.write(struct.pack("<Q", len(data.frontier_mu)))
    buf.write(data.lengths.astype("<u1").tobytes())
    buf.write(data.codes.astype("<u8").tobytes())
    buf.write(np.ascontiguousarray(data.mu, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(data.xi, dtype="<f8").tobytes())
    buf.write(data.loxodromic.astype("<u1").tobytes())
    buf.write(np.ascontiguousarray(data.frontier_mu, dtype="<f8").tobytes())
    return buf.getvalue()


def dataset_from_bytes(blob: bytes, rep: RepresentationSpec) -> OrbitDataset:
    if len(blob) < _HEADER.size or blob[:4] != MAGIC:
        raise CacheFormatError("not a JLAB dataset cache")
    magic, version, k, rank, max_length, t_cap, n = _HEADER.unpack_from(blob, 0)
    if version != FORMAT_VERSION:
        raise CacheFormatError(f"unsupported cache version {version}")
    if k != rep.k or rank != rep.rank:
        raise CacheFormatError("cache was built for a different representation shape")
    pos = _HEADER.size
    kinds = blob[pos:pos + k]
    pos += k
    if tuple(bool(b) for b in kinds) != tuple(f.kind is FactorKind.COMPLEX3 for f in rep.factors):
        raise CacheFormatError("cache factor kinds do not match")
    if blob[pos:pos + 32] != rep_fingerprint(rep):
        raise CacheFormatError("cache was built for different generators")
    pos += 32
    (nf,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    nxi = sum(rep.boundary_dims)

    def take(dtype, count):
        nonlocal pos
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
        pos += arr.nbytes
        return arr.copy()

    lengths = take("<u1", n)
    codes = take("<u8", n)
    mu = take("<f8", n * k).reshape(n, k)
    xi = take("<f8", n * nxi).reshape(n, nxi)
    lox = take("<u1", n).astype(bool)
    frontier = take("<f8", nf * k).reshape(nf, k)
    if pos != len(blob):
        raise CacheFormatError("trailing bytes in cache")
    return OrbitDataset(rep, max_length, t_cap, lengths, codes.astype(np.uint64), mu, xi, lox,
                        frontier_mu=frontier, _sorted=True)


def save_dataset(data: OrbitDataset, path) -> None:
    Path(path).write_bytes(dataset_to_bytes(data))


def load_dataset(path, rep: RepresentationSpec) -> OrbitDataset:
    return dataset_from_bytes(Path(path).read_bytes(), rep)
