"""Laguerre (power) diagrams of weighted points in a box.

Each cell is built independently by clipping a starting box with the
power bisectors of candidate generators, visited in order of increasing
distance. Clipping stops as soon as no further candidate can reach the
cell: for a candidate at distance ``d`` the bisector sits at least
``(d^2 + w_i - w_max) / (2 d)`` from the generator, which grows with ``d``.

Periodic diagrams replicate the generators over a shell of ``3^d`` (or, if
needed, ``5^d``) boxes. Cells are kept unwrapped: convex, centred on their
generator, and bounded by the box ``x_i +- L/2`` formed by the generator's
own images.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .errors import (
    CellExceedsMinimalImage,
    CellTooComplex,
    CoincidentSeeds,
    DegenerateDomain,
)
from .geometry import EPS_GEOM, ConvexPolytope, HalfSpace, clip_halfspace

_FIRST_K = {2: 16, 3: 48}
_FACE_WIDTH = {2: 128, 3: 128}
_MAX_BUFFER_SCALE = 4


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box ``[lower, upper]``, optionally periodic."""

    lower: np.ndarray
    upper: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape or lo.size not in (2, 3):
            raise DegenerateDomain("domain bounds must be 2- or 3-vectors")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DegenerateDomain("domain bounds must be finite")
        if np.any(hi <= lo):
            raise DegenerateDomain("domain needs lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "periodic", bool(self.periodic))

    @classmethod
    def unit(cls, dim: int, periodic: bool = False) -> Domain:
        return cls(np.zeros(dim), np.ones(dim), periodic)

    @classmethod
    def from_lengths(cls, lengths, periodic: bool = False) -> Domain:
        lengths = np.asarray(lengths, float)
        return cls(np.zeros_like(lengths), lengths, periodic)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def lengths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.lengths))

    @property
    def tolerance(self) -> float:
        return EPS_GEOM * self.diameter

    def polytope(self) -> ConvexPolytope:
        return ConvexPolytope.box(self.lower, self.upper)

    def wrap(self, points) -> np.ndarray:
        """Map points into ``[lower, upper)`` along every axis."""
        p = np.asarray(points, float)
        rel = np.mod(p - self.lower, self.lengths)
        # mod can round up to exactly L
        rel = np.where(rel >= self.lengths, 0.0, rel)
        return self.lower + rel

    def displacement(self, a, b) -> np.ndarray:
        """``b - a``, using the nearest periodic image when periodic."""
        delta = np.asarray(b, float) - np.asarray(a, float)
        if self.periodic:
            delta -= self.lengths * np.round(delta / self.lengths)
        return delta

    def distance(self, a, b) -> np.ndarray:
        return np.linalg.norm(self.displacement(a, b), axis=-1)

    def contains(self, points, tol=0.0) -> np.ndarray:
        p = np.asarray(points, float)
        return np.all((p >= self.lower - tol) & (p <= self.upper + tol), axis=-1)


@dataclass(frozen=True)
class WeightedSeed:
    position: np.ndarray
    weight: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, float))
        object.__setattr__(self, "weight", float(self.weight))


def seeds_to_arrays(seeds: Sequence[WeightedSeed]):
    positions = np.array([s.position for s in seeds], dtype=float)
    weights = np.array([s.weight for s in seeds], dtype=float)
    return positions, weights


def bisector(seed_i: WeightedSeed, seed_j: WeightedSeed) -> HalfSpace:
    """Points whose power distance to ``seed_i`` is at most that to ``seed_j``.

    ``|x - x_i|^2 - w_i <= |x - x_j|^2 - w_j`` is linear in ``x``:
    ``2 (x_j - x_i) . x <= |x_j|^2 - |x_i|^2 - w_j + w_i``.
    """
    xi, xj = seed_i.position, seed_j.position
    if np.allclose(xi, xj, rtol=0.0, atol=0.0):
        raise CoincidentSeeds("bisector of coincident seeds is undefined")
    normal = 2.0 * (xj - xi)
    offset = xj @ xj - xi @ xi - seed_j.weight + seed_i.weight
    return HalfSpace(normal, offset)


class CandidateIndex:
    """Distance-ordered neighbour candidates for every generator.

    Wraps a k-d tree over the generators (bounded case) or over their
    periodic images in a shell of ``(2*shell + 1)^d`` boxes. Candidate lists
    depend only on positions, so one index serves every weight vector.
    """

    def __init__(self, domain: Domain, positions, shell: int = 1):
        self.domain = domain
        self.positions = np.array(positions, dtype=float)
        n, d = self.positions.shape
        self.shell = shell if domain.periodic else 0
        if domain.periodic:
            rng = range(-shell, shell + 1)
            shifts = np.array(list(itertools.product(rng, repeat=d)), dtype=np.int64)
            # put the unshifted copy first so point index == seed id for it
            zero = np.flatnonzero(~shifts.any(axis=1))[0]
            shifts = np.concatenate([shifts[zero : zero + 1],
                                     np.delete(shifts, zero, axis=0)])
            offsets = shifts * domain.lengths
            self.points = (self.positions[None, :, :] + offsets[:, None, :]).reshape(-1, d)
            self.owner = np.tile(np.arange(n, dtype=np.int64), len(shifts))
            self.shift = np.repeat(shifts, n, axis=0)
        else:
            self.points = self.positions
            self.owner = np.arange(n, dtype=np.int64)
            self.shift = np.zeros((n, d), dtype=np.int64)
        self.tree = cKDTree(self.points)
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def size(self) -> int:
        return len(self.points)

    def matches(self, positions) -> bool:
        return np.array_equal(self.positions, positions)

    def outer_bound(self) -> float:
        """Lower bound on the distance to any point outside the index."""
        if not self.domain.periodic:
            return np.inf
        return self.shell * float(self.domain.lengths.min())

    def _query_all(self, k: int):
        if k not in self._cache:
            dist, idx = self.tree.query(self.positions, k=k)
            dist = np.asarray(dist, float).reshape(len(self.positions), -1)
            idx = np.asarray(idx, np.int64).reshape(len(self.positions), -1)
            # ties in distance resolved by seed index
            owner = np.where(idx < self.size, self.owner[np.minimum(idx, self.size - 1)], 0)
            order = np.lexsort((idx, owner, dist), axis=1)
            dist = np.take_along_axis(dist, order, axis=1)
            idx = np.take_along_axis(idx, order, axis=1)
            self._cache[k] = (dist, idx)
        return self._cache[k]

    def query(self, which, k: int):
        """Candidate rows for the generators in ``which`` and, per row, a
        lower bound on the distance of every candidate not listed."""
        k = int(min(k, self.size))
        dist, idx = self._query_all(k)
        cand = idx[which]
        if k >= self.size:
            bound = np.full(len(which), self.outer_bound())
        else:
            bound = dist[which, -1].copy()
        return np.ascontiguousarray(cand), bound

    def candidates(self, i: int) -> np.ndarray:
        """All candidates for generator ``i`` (own images excluded), ordered
        by distance with ties broken by seed index."""
        _, idx = self._query_all(self.size)
        row = idx[i]
        return row[self.owner[row] != i]


def neighbor_candidates(positions, query_id: int, index: CandidateIndex | None = None,
                        domain: Domain | None = None) -> list[int]:
    """Ordered candidate list for ``query_id``.

    Entries index ``index.points``; in a bounded domain these are seed ids,
    in a periodic one ``index.owner`` maps them back to seeds.
    """
    if index is None:
        if domain is None:
            raise ValueError("need an index or a domain")
        index = CandidateIndex(domain, positions)
    return [int(c) for c in index.candidates(query_id)]


class Adjacency(NamedTuple):
    neighbor: int
    area: float
    multiplicity: int


@dataclass
class LaguerreDiagram:
    """Cells, their measures and the face graph of a power diagram.

    Per-cell arrays are indexed by seed id. Face arrays hold one row per
    cell face: ``face_cell`` (owning cell), ``face_other`` (neighbour seed id,
    or a negative wall id in a bounded domain), ``face_point`` (index of the
    neighbouring point in ``index.points``, -1 for walls and own images),
    ``face_shift`` (periodic image offset of the neighbour, in box lengths),
    ``face_area`` and ``face_distance`` (distance between the two generators
    of the face, the image one in the periodic case).
    """

    domain: Domain
    positions: np.ndarray
    weights: np.ndarray
    volumes: np.ndarray
    centroids: np.ndarray
    moments: np.ndarray
    surfaces: np.ndarray
    boundary_distance: np.ndarray
    face_cell: np.ndarray
    face_other: np.ndarray
    face_point: np.ndarray
    face_shift: np.ndarray
    face_area: np.ndarray
    face_distance: np.ndarray
    index: CandidateIndex = field(repr=False)
    k_used: np.ndarray = field(repr=False)
    buffer_scale: int = field(default=1, repr=False)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def periodic(self) -> bool:
        return self.domain.periodic

    @property
    def empty(self) -> np.ndarray:
        """Mask of empty cells."""
        return self.volumes <= 0.0

    @property
    def generators(self) -> list[WeightedSeed]:
        return [WeightedSeed(p, w) for p, w in zip(self.positions, self.weights)]

    def total_volume(self) -> float:
        return float(np.sum(self.volumes))

    def relative_errors(self, targets) -> np.ndarray:
        t = np.asarray(targets, float)
        return np.abs(self.volumes - t) / t

    def adjacency(self, i: int) -> list[Adjacency]:
        """Neighbours of cell ``i`` with summed shared area and face count."""
        sel = self.face_cell == i
        out = []
        others = self.face_other[sel]
        areas = self.face_area[sel]
        for j in np.unique(others):
            m = others == j
            out.append(Adjacency(int(j), float(areas[m].sum()), int(m.sum())))
        return out

    def interior_faces(self):
        """Faces between two distinct generators with non-negligible area."""
        tol = self.domain.tolerance
        keep = (self.face_other >= 0) & (self.face_other != self.face_cell)
        keep &= self.face_area >= tol ** (self.dim - 1)
        return (self.face_cell[keep], self.face_other[keep],
                self.face_area[keep], self.face_distance[keep])

    def cell(self, i: int) -> ConvexPolytope:
        """Geometry of cell ``i``; faces tagged with neighbour seed ids
        (own seed id for a periodic self-image) or negative wall ids."""
        idx = self.index
        cand, bound = idx.query(np.array([i]), int(self.k_used[i]))
        lo, hi = _start_box(self.domain, self.positions[i : i + 1])
        args = (self.positions[i], float(self.weights[i]), i, lo[0], hi[0],
                idx.points, _image_weights(idx, self.weights), idx.owner,
                cand[0], float(bound[0]), float(self.weights.max()),
                self.domain.tolerance, True, self.buffer_scale)
        if self.dim == 2:
            ring, tags, _ = K.cell_geometry_2d(*args)
            return ConvexPolytope.from_ring(ring, self._tags(i, tags))
        fv, fc, ft, _ = K.cell_geometry_3d(*args)
        return ConvexPolytope.from_face_rings(fv, fc, self._tags(i, ft),
                                              tol=self.domain.tolerance)

    def cells(self) -> list[ConvexPolytope]:
        return [self.cell(i) for i in range(self.n)]

    def _tags(self, i, raw):
        raw = np.asarray(raw, np.int64)
        tags = np.where(raw >= 0, self.index.owner[np.maximum(raw, 0)], raw)
        if self.periodic:
            tags = np.where(raw < 0, i, tags)
        return tags


def _image_weights(index: CandidateIndex, weights) -> np.ndarray:
    return np.asarray(weights, float)[index.owner]


def _start_box(domain: Domain, positions):
    n = len(positions)
    if domain.periodic:
        half = 0.5 * domain.lengths
        return positions - half, positions + half
    return (np.tile(domain.lower, (n, 1)), np.tile(domain.upper, (n, 1)))


def check_distinct(domain: Domain, positions) -> None:
    """Raise :class:`CoincidentSeeds` if two generators (or, in a periodic
    box, two images) are closer than the geometric tolerance."""
    n = len(positions)
    if n < 2:
        return
    tol = domain.tolerance
    if domain.periodic:
        rel = domain.wrap(positions) - domain.lower
        tree = cKDTree(rel, boxsize=domain.lengths)
    else:
        tree = cKDTree(positions)
    dist, _ = tree.query(tree.data, k=2)
    if np.min(dist[:, 1]) <= tol:
        raise CoincidentSeeds(f"seeds closer than {tol:.3g}")


def _construct(domain: Domain, positions, weights, index=None, naive=False,
               check=True) -> LaguerreDiagram:
    P = np.ascontiguousarray(positions, dtype=float)
    W = np.ascontiguousarray(weights, dtype=float).ravel()
    if P.ndim != 2 or P.shape[1] != domain.dim:
        raise ValueError(f"positions must be (n, {domain.dim})")
    n, d = P.shape
    if W.shape != (n,):
        raise ValueError("one weight per seed required")
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(W))):
        raise ValueError("positions and weights must be finite")
    if domain.periodic:
        P = domain.wrap(P)
    if index is None or not index.matches(P):
        if check:
            check_distinct(domain, P)
        index = CandidateIndex(domain, P)
    lo_all, hi_all = _start_box(domain, P)
    width = _FACE_WIDTH[d]
    scale = 1
    # huge cells (e.g. at a line-search trial point) outgrow the default
    # buffers; rerun with larger ones
    while True:
        try:
            return _measure(domain, P, W, index, naive, lo_all, hi_all, width, scale)
        except _NarrowFaceTable as exc:
            width = exc.needed
        except _BufferOverflow as exc:
            if scale >= _MAX_BUFFER_SCALE:
                raise CellTooComplex(f"cell {exc.cell} exceeds the kernel buffers") from None
            scale *= 2


class _NarrowFaceTable(Exception):
    def __init__(self, needed: int):
        self.needed = needed


class _BufferOverflow(Exception):
    def __init__(self, cell: int):
        self.cell = cell


def _measure(domain, P, W, index, naive, lo_all, hi_all, width, scale) -> LaguerreDiagram:
    n, d = P.shape
    tol = domain.tolerance
    vol = np.zeros(n)
    cen = np.full((n, d), np.nan)
    m2 = np.zeros(n)
    cdist = np.zeros(n)
    surf = np.zeros(n)
    nfo = np.zeros(n, np.int64)
    ftag = np.zeros((n, width), np.int64)
    farea = np.zeros((n, width))
    status = np.zeros(n, np.int64)
    k_used = np.zeros(n, np.int64)
    kernel = K.cells_2d if d == 2 else K.cells_3d
    wmax = float(W.max())

    while True:
        QW = _image_weights(index, W)
        which = np.arange(n, dtype=np.int64)
        if naive:
            cand = np.tile(np.arange(index.size, dtype=np.int64), (n, 1))
            bound = np.full(n, np.inf)
            kernel(P, W, index.points, QW, index.owner, cand, bound, lo_all,
                   hi_all, wmax, tol, False, which, vol, cen, m2, cdist, surf,
                   nfo, ftag, farea, status, scale)
            k_used[:] = index.size
            break
        k = min(_FIRST_K[d], index.size)
        while len(which):
            cand, bound = index.query(which, k)
            kernel(P, W, index.points, QW, index.owner, cand, bound, lo_all,
                   hi_all, wmax, tol, True, which, vol, cen, m2, cdist, surf,
                   nfo, ftag, farea, status, scale)
            k_used[which] = k
            which = which[status[which] == K.NEED_MORE]
            if len(which) == 0 or k >= index.size:
                break
            k = min(2 * k, index.size)
        if len(which) == 0:
            break
        if domain.periodic and index.shell < 2:
            index = CandidateIndex(domain, P, shell=index.shell + 1)
            continue
        raise CellExceedsMinimalImage(
            f"{len(which)} cells reach beyond the periodic image shell "
            f"(first: seed {int(which[0])})")

    if np.any(status == K.TOO_COMPLEX):
        bad = np.flatnonzero(status == K.TOO_COMPLEX)
        overflow = bad[nfo[bad] <= width]
        if len(overflow):
            raise _BufferOverflow(int(overflow[0]))
        raise _NarrowFaceTable(int(nfo[bad].max()))

    mask = np.arange(width)[None, :] < nfo[:, None]
    face_cell = np.repeat(np.arange(n, dtype=np.int64), nfo)
    tags = ftag[mask]
    face_area = farea[mask]
    inner = tags >= 0
    point = np.where(inner, tags, -1)
    safe = np.maximum(point, 0)
    face_other = np.where(inner, index.owner[safe], tags)
    face_shift = np.where(inner[:, None], index.shift[safe], 0)
    face_distance = np.where(
        inner, np.linalg.norm(index.points[safe] - P[face_cell], axis=1), np.nan)
    if domain.periodic:
        # box faces of a periodic cell are shared with the seed's own images
        walls = ~inner
        code = -tags[walls] - 1
        axis, side = code // 2, code % 2
        face_other[walls] = face_cell[walls]
        sh = np.zeros((walls.sum(), d), np.int64)
        sh[np.arange(len(axis)), axis] = np.where(side == 1, 1, -1)
        face_shift[walls] = sh
        face_distance[walls] = domain.lengths[axis]

    return LaguerreDiagram(
        domain=domain, positions=P, weights=W, volumes=vol, centroids=cen,
        moments=m2, surfaces=surf, boundary_distance=cdist,
        face_cell=face_cell, face_other=face_other, face_point=point,
        face_shift=face_shift, face_area=face_area,
        face_distance=face_distance, index=index, k_used=k_used,
        buffer_scale=scale)


def compute_diagram(domain: Domain, positions, weights=None, *, index=None,
                    naive: bool = False) -> LaguerreDiagram:
    """Power diagram of weighted points restricted to a bounded box.

    ``naive=True`` clips every cell against all other generators in index
    order without early termination; it exists as a reference.
    """
    if domain.periodic:
        raise ValueError("use compute_periodic_diagram for a periodic domain")
    if weights is None:
        weights = np.zeros(len(positions))
    return _construct(domain, positions, weights, index=index, naive=naive)


def compute_periodic_diagram(domain: Domain, positions, weights=None, *,
                             index=None, naive: bool = False) -> LaguerreDiagram:
    """Power diagram in a periodic box, computed on periodic images."""
    if not domain.periodic:
        raise ValueError("domain is not periodic")
    if weights is None:
        weights = np.zeros(len(positions))
    return _construct(domain, positions, weights, index=index, naive=naive)


def build_diagram(domain: Domain, positions, weights=None, *, index=None,
                  naive: bool = False) -> LaguerreDiagram:
    """Dispatch on ``domain.periodic``."""
    if weights is None:
        weights = np.zeros(len(positions))
    return _construct(domain, positions, weights, index=index, naive=naive)


def wrap_cell(poly: ConvexPolytope, domain: Domain) -> list[tuple[ConvexPolytope, np.ndarray]]:
    """Split an unwrapped periodic cell into convex pieces inside the box.

    Returns ``(piece, shift)`` pairs, where ``piece`` lies in the domain and
    equals the part of ``poly`` in the box translated by ``shift * L``,
    moved back by ``-shift * L``.
    """
    if poly.is_empty:
        return []
    L = domain.lengths
    vmin = poly.vertices.min(axis=0)
    vmax = poly.vertices.max(axis=0)
    lo_s = np.floor((vmin - domain.lower) / L).astype(int)
    hi_s = np.floor((vmax - domain.lower) / L).astype(int)
    pieces = []
    ranges = [range(a, b + 1) for a, b in zip(lo_s, hi_s)]
    for s in itertools.product(*ranges):
        s = np.array(s)
        lo = domain.lower + s * L
        hi = domain.upper + s * L
        piece = poly
        for axis in range(domain.dim):
            e = np.zeros(domain.dim)
            e[axis] = 1.0
            piece = clip_halfspace(piece, HalfSpace(e, hi[axis]), K.wall_tag(axis, 1))
            if piece.is_empty:
                break
            piece = clip_halfspace(piece, HalfSpace(-e, -lo[axis]), K.wall_tag(axis, 0))
            if piece.is_empty:
                break
        if not piece.is_empty:
            pieces.append((piece.translated(-s * L), s))
    return pieces
