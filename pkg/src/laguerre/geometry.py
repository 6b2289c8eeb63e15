"""Convex polytopes in 2D and 3D: half-space clipping and exact measures.

A :class:`ConvexPolytope` is stored in boundary form. In 3D each face is a
cyclic list of vertex indices, ordered counter-clockwise when seen from
outside; in 2D the faces are the edges ``(k, k+1)`` of a counter-clockwise
vertex ring. Every face carries an integer tag (a box wall or the id of the
neighbouring generator).

All integrals are exact for polytopes: the cell is split into a fan of
simplices around the vertex mean and the polynomial moments of each simplex
are summed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import EmptyCell, MalformedPolytope

#: tag given to faces created by :func:`clip_halfspace` when none is passed
CUT_TAG = -999

#: relative geometric tolerance (times a length scale)
EPS_GEOM = 1e-9


@dataclass(frozen=True)
class HalfSpace:
    """The set ``{x : normal . x <= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float)
        if normal.ndim != 1 or not np.any(normal):
            raise ValueError("half-space normal must be a non-zero vector")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    def flipped(self) -> HalfSpace:
        """Closure of the complement."""
        return HalfSpace(-self.normal, -self.offset)

    def contains(self, x, tol=0.0) -> bool:
        return float(self.normal @ np.asarray(x, float)) <= self.offset + tol


@dataclass(frozen=True)
class ConvexPolytope:
    vertices: np.ndarray
    faces: tuple
    face_tags: tuple = field(default=())

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise MalformedPolytope("vertices must be an (m, 2) or (m, 3) array")
        faces = tuple(tuple(int(k) for k in f) for f in self.faces)
        tags = tuple(int(t) for t in self.face_tags) or (CUT_TAG,) * len(faces)
        if len(tags) != len(faces):
            raise MalformedPolytope("one tag per face required")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "face_tags", tags)

    # -- construction ------------------------------------------------

    @classmethod
    def box(cls, lower, upper) -> ConvexPolytope:
        """Axis-aligned box with faces tagged as walls."""
        lo = np.asarray(lower, float)
        hi = np.asarray(upper, float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise MalformedPolytope("box needs lower < upper componentwise")
        if lo.size == 2:
            ring = np.array([[lo[0], lo[1]], [hi[0], lo[1]],
                             [hi[0], hi[1]], [lo[0], hi[1]]])
            tags = np.array([K.wall_tag(1, 0), K.wall_tag(0, 1),
                             K.wall_tag(1, 1), K.wall_tag(0, 0)])
            return cls.from_ring(ring, tags)
        fv = np.empty((6, 4, 3))
        fc = np.empty(6, np.int64)
        ft = np.empty(6, np.int64)
        K.init_box_3d(fv, fc, ft, lo, hi)
        return cls.from_face_rings(fv, fc, ft)

    @classmethod
    def empty(cls, dim: int) -> ConvexPolytope:
        return cls(np.zeros((0, dim)), ())

    @classmethod
    def from_ring(cls, ring, tags) -> ConvexPolytope:
        ring = np.asarray(ring, float).reshape(-1, 2)
        m = len(ring)
        if m < 3:
            return cls.empty(2)
        faces = tuple((k, (k + 1) % m) for k in range(m))
        return cls(ring, faces, tuple(int(t) for t in tags))

    @classmethod
    def from_face_rings(cls, fv, fc, ft, tol=None) -> ConvexPolytope:
        """Build from per-face coordinate rings, merging shared vertices."""
        nf = len(fc)
        if nf == 0:
            return cls.empty(3)
        pts = np.concatenate([fv[f, : fc[f]] for f in range(nf)])
        if tol is None:
            tol = EPS_GEOM * max(_diameter(pts), 1e-300)
        uniq: list[np.ndarray] = []
        index = np.empty(len(pts), dtype=int)
        for p, x in enumerate(pts):
            for u, y in enumerate(uniq):
                if np.sum((x - y) ** 2) <= tol * tol:
                    index[p] = u
                    break
            else:
                index[p] = len(uniq)
                uniq.append(x)
        faces = []
        start = 0
        for f in range(nf):
            ids = index[start : start + fc[f]]
            start += fc[f]
            faces.append(tuple(int(k) for k in ids))
        return cls(np.array(uniq), tuple(faces), tuple(int(t) for t in ft))

    # -- basic properties --------------------------------------------

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def diameter(self) -> float:
        return _diameter(self.vertices)

    def tolerance(self) -> float:
        return EPS_GEOM * max(self.diameter(), 1e-300)

    def ring(self) -> np.ndarray:
        """Vertex ring of a 2D polygon."""
        return self.vertices[[f[0] for f in self.faces]]

    def face_rings(self):
        """Padded (faces, max_vertices, 3) coordinate array plus counts and tags."""
        nf = len(self.faces)
        width = max((len(f) for f in self.faces), default=1)
        fv = np.zeros((nf, width, 3))
        fc = np.zeros(nf, dtype=np.int64)
        for k, f in enumerate(self.faces):
            fv[k, : len(f)] = self.vertices[list(f)]
            fc[k] = len(f)
        return fv, fc, np.array(self.face_tags, dtype=np.int64)

    def translated(self, t) -> ConvexPolytope:
        return ConvexPolytope(self.vertices + np.asarray(t, float), self.faces,
                              self.face_tags)

    def face_plane(self, k: int):
        """Unit outward normal and offset of face ``k``."""
        pts = self.vertices[list(self.faces[k])]
        if self.dim == 2:
            e = pts[1] - pts[0]
            n = np.array([e[1], -e[0]])
        else:
            n = _newell(pts)
        ln = np.linalg.norm(n)
        if ln == 0:
            raise MalformedPolytope(f"face {k} is degenerate")
        n = n / ln
        return n, float(n @ pts.mean(axis=0))

    def validate(self, tol=None) -> None:
        """Raise :class:`MalformedPolytope` unless convex and (3D) planar."""
        if self.is_empty:
            return
        if tol is None:
            tol = 1e3 * self.tolerance()
        if len(self.faces) < self.dim + 1:
            raise MalformedPolytope("too few faces for a solid")
        for k, f in enumerate(self.faces):
            if len(f) < self.dim:
                raise MalformedPolytope(f"face {k} has too few vertices")
            n, c = self.face_plane(k)
            pts = self.vertices[list(f)]
            if self.dim == 3 and np.max(np.abs(pts @ n - c)) > tol:
                raise MalformedPolytope(f"face {k} is not planar")
            if np.max(self.vertices @ n - c) > tol:
                raise MalformedPolytope(f"vertices lie outside face {k}")


def _diameter(pts) -> float:
    if len(pts) == 0:
        return 0.0
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def _newell(pts) -> np.ndarray:
    nxt = np.roll(pts, -1, axis=0)
    return 0.5 * np.cross(pts, nxt).sum(axis=0)


def clip_halfspace(poly: ConvexPolytope, h: HalfSpace, tag: int = CUT_TAG,
                   tol=None) -> ConvexPolytope:
    """Intersect ``poly`` with ``h``; the new face (if any) carries ``tag``.

    An empty result is returned as an empty polytope, not raised.
    """
    if h.normal.size != poly.dim:
        raise MalformedPolytope("half-space and polytope dimensions differ")
    if poly.is_empty:
        return poly
    poly.validate()
    if tol is None:
        tol = poly.tolerance()
    if poly.dim == 2:
        tags = np.array(poly.face_tags, dtype=np.int64)
        ring, rtags, ok = K.clip_ring_2d(poly.ring(), tags, h.normal,
                                         h.offset, tag, tol)
        if not ok:
            raise MalformedPolytope("polygon exceeds kernel capacity")
        return ConvexPolytope.from_ring(ring, rtags)
    fv, fc, ft = poly.face_rings()
    big = np.zeros((len(fc), K.MAXV3, 3))
    if fv.shape[1] > K.MAXV3:
        raise MalformedPolytope("face exceeds kernel capacity")
    big[:, : fv.shape[1]] = fv
    nv, nc, nt, ok = K.clip_faces_3d(big, fc, ft, len(fc), h.normal, h.offset,
                                     tag, tol)
    if not ok:
        raise MalformedPolytope("polyhedron exceeds kernel capacity")
    return ConvexPolytope.from_face_rings(nv, nc, nt, tol=tol)


def _measures(poly: ConvexPolytope, p):
    p = np.asarray(p, float)
    if poly.is_empty:
        return 0.0, np.full(poly.dim, np.nan), 0.0, np.zeros(0)
    if poly.dim == 2:
        return K.measures_ring_2d(poly.ring(), p)
    fv, fc, _ = poly.face_rings()
    return K.measures_faces_3d(fv, fc, len(fc), p)


def volume(poly: ConvexPolytope) -> float:
    """Area (2D) or volume (3D)."""
    return float(_measures(poly, np.zeros(poly.dim))[0])


def centroid(poly: ConvexPolytope) -> np.ndarray:
    vol, c, _, _ = _measures(poly, np.zeros(poly.dim))
    if vol <= 0.0:
        raise EmptyCell("centroid of an empty polytope")
    return c


def second_moment(poly: ConvexPolytope, p) -> float:
    """``integral over poly of |x - p|^2 dx``."""
    return float(_measures(poly, p)[2])


def face_areas(poly: ConvexPolytope) -> np.ndarray:
    """Edge lengths (2D) or planar face areas (3D), in face order."""
    return np.asarray(_measures(poly, np.zeros(poly.dim))[3])


def face_area(poly: ConvexPolytope, k: int) -> float:
    return float(face_areas(poly)[k])


def surface_area(poly: ConvexPolytope) -> float:
    """Perimeter (2D) or boundary area (3D)."""
    return float(np.sum(face_areas(poly)))


def equivalent_radius(measure, dim: int):
    """Radius of the disc (2D) or ball (3D) with the given area or volume."""
    measure = np.asarray(measure, float)
    if dim == 2:
        return np.sqrt(measure / math.pi)
    return np.cbrt(3.0 * measure / (4.0 * math.pi))


def sphericity_from(measure, surface, dim: int):
    """Surface of the volume-equivalent ball over the actual surface."""
    r = equivalent_radius(measure, dim)
    ball = 2.0 * math.pi * r if dim == 2 else 4.0 * math.pi * r * r
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(np.asarray(surface) > 0, ball / surface, np.nan)


def sphericity(poly: ConvexPolytope) -> float:
    """Roundness in (0, 1); 2D uses perimeters of the area-equivalent disc."""
    vol, _, _, areas = _measures(poly, np.zeros(poly.dim))
    if vol <= 0.0:
        raise EmptyCell("sphericity of an empty polytope")
    return float(sphericity_from(vol, np.sum(areas), poly.dim))
