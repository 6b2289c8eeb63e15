"""Initial seed positions and target-volume lists.

Randomness comes from a counter-based Philox generator keyed by an integer
seed, so a given layout spec produces the same numbers on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .diagram import Domain
from .errors import InfeasibleSpec, InvalidTargets
from .transport import TargetSpec

SPATIAL_KINDS = ("uniform", "banded", "clustered", "gradient", "mixed", "explicit")
VOLUME_KINDS = ("explicit", "bimodal", "lognormal", "uniform-ratio")

#: minimum pairwise distance between generated seeds, relative to the diameter
MIN_SEPARATION = 1e-6


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class Band:
    """Slab ``lo <= t < hi`` along the band axis, ``t`` in box fractions."""

    label: int
    lo: float
    hi: float


@dataclass
class Disc:
    centre: tuple
    radius: float


@dataclass
class SpatialSpec:
    """How initial seeds are laid out.

    ``labels`` assigns each seed a size class; banded, clustered and mixed
    layouts place each class in its own regions. ``gradient`` instead orders
    seeds along ``axis`` by ``sizes``.

    Parameters
    ----------
    kind : str
        One of ``uniform``, ``banded``, ``clustered``, ``gradient``, ``mixed``
        or ``explicit``.
    rng_seed : int
        Key for the Philox generator.
    axis : int
        Band or gradient axis.
    bands : list of Band
        For ``banded`` and ``mixed``.
    discs : list of Disc
        For ``clustered``: seeds of ``cluster_label`` go inside the discs,
        all others outside them.
    mixed_fraction : float
        For ``mixed``: share of ``cluster_label`` seeds placed in its bands,
        the rest uniformly over the domain.
    profile : str
        For ``gradient``: ``increasing`` or ``decreasing`` size along ``axis``.
    points : array, optional
        For ``explicit``.
    """

    kind: str = "uniform"
    rng_seed: int = 0
    labels: np.ndarray | None = None
    axis: int = 0
    bands: list = field(default_factory=list)
    discs: list = field(default_factory=list)
    cluster_label: int = 0
    mixed_fraction: float = 0.5
    sizes: np.ndarray | None = None
    profile: str = "increasing"
    points: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in SPATIAL_KINDS:
            raise InfeasibleSpec(f"unknown layout {self.kind!r}")
        self.bands = [b if isinstance(b, Band) else Band(**b) for b in self.bands]
        self.discs = [d if isinstance(d, Disc) else Disc(**d) for d in self.discs]


def alternating_bands(n_bands: int, widths: dict) -> list[Band]:
    """``n_bands`` slabs cycling through labels, widths proportional to ``widths``."""
    labels = list(widths)
    raw = [widths[labels[k % len(labels)]] for k in range(n_bands)]
    total = float(sum(raw))
    out, t = [], 0.0
    for k, wdt in enumerate(raw):
        hi = 1.0 if k == n_bands - 1 else t + wdt / total
        out.append(Band(labels[k % len(labels)], t, hi))
        t = hi
    return out


def _uniform(domain: Domain, rng, count: int) -> np.ndarray:
    return domain.lower + rng.random((count, domain.dim)) * domain.lengths


def _in_bands(domain: Domain, rng, count: int, bands, axis: int) -> np.ndarray:
    if not bands:
        raise InfeasibleSpec("no bands for this size class")
    widths = np.array([b.hi - b.lo for b in bands])
    if np.any(widths <= 0) or any(b.lo < 0 or b.hi > 1 for b in bands):
        raise InfeasibleSpec("bands must be non-empty slabs inside the box")
    pick = rng.choice(len(bands), size=count, p=widths / widths.sum())
    pts = _uniform(domain, rng, count)
    lo = np.array([b.lo for b in bands])[pick]
    t = lo + rng.random(count) * widths[pick]
    pts[:, axis] = domain.lower[axis] + t * domain.lengths[axis]
    return pts


def _in_discs(domain: Domain, rng, count: int, discs) -> np.ndarray:
    if not discs:
        raise InfeasibleSpec("clustered layout needs at least one disc")
    d = domain.dim
    centres = np.array([np.asarray(c.centre, float) for c in discs])
    radii = np.array([c.radius for c in discs], float)
    if centres.shape[1] != d or np.any(radii <= 0):
        raise InfeasibleSpec("discs need a centre in the domain dimension and positive radius")
    if np.any(centres - radii[:, None] < domain.lower) or np.any(
            centres + radii[:, None] > domain.upper):
        raise InfeasibleSpec("discs must lie inside the domain")
    for a in range(len(discs)):
        for b in range(a + 1, len(discs)):
            if np.linalg.norm(centres[a] - centres[b]) < radii[a] + radii[b]:
                raise InfeasibleSpec("discs overlap")
    sep = MIN_SEPARATION * domain.diameter
    capacity = np.sum(radii ** d) / (0.5 * sep) ** d
    if count > capacity:
        raise InfeasibleSpec("discs cannot hold the requested seeds at the minimum separation")
    vol = radii ** d
    pick = rng.choice(len(discs), size=count, p=vol / vol.sum())
    # uniform in the unit ball: gaussian direction, radius u^(1/d)
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(count) ** (1.0 / d)
    return centres[pick] + (r * radii[pick])[:, None] * g


def _outside_discs(domain: Domain, rng, count: int, discs) -> np.ndarray:
    out = np.empty((0, domain.dim))
    for _ in range(1000):
        if len(out) >= count:
            break
        pts = _uniform(domain, rng, 2 * (count - len(out)) + 8)
        ok = np.ones(len(pts), bool)
        for c in discs:
            ok &= np.linalg.norm(pts - np.asarray(c.centre, float), axis=1) > c.radius
        out = np.concatenate([out, pts[ok]])
    if len(out) < count:
        raise InfeasibleSpec("no room outside the discs")
    return out[:count]


def _resample_close(domain: Domain, pts, regen, rng) -> np.ndarray:
    """Redraw points closer than the minimum separation to an earlier one."""
    sep = MIN_SEPARATION * domain.diameter
    for _ in range(100):
        if domain.periodic:
            tree = cKDTree(domain.wrap(pts) - domain.lower, boxsize=domain.lengths)
        else:
            tree = cKDTree(pts)
        pairs = tree.query_pairs(sep, output_type="ndarray")
        if len(pairs) == 0:
            return pts
        bad = np.unique(pairs.max(axis=1))
        pts[bad] = regen(bad, rng)
    raise InfeasibleSpec("could not separate seeds")


def sample_positions(domain: Domain, n: int, spec: SpatialSpec) -> np.ndarray:
    """``n`` distinct seed positions in ``domain`` following ``spec``."""
    rng = make_rng(spec.rng_seed)
    labels = None if spec.labels is None else np.asarray(spec.labels, int)
    if labels is not None and len(labels) != n:
        raise InfeasibleSpec("one label per seed required")
    kind = spec.kind
    if kind == "explicit":
        pts = np.asarray(spec.points, float)
        if pts.shape != (n, domain.dim):
            raise InfeasibleSpec(f"expected {n} points of dimension {domain.dim}")
        if not np.all(domain.contains(pts)):
            raise InfeasibleSpec("explicit points must lie in the domain")
        return pts.copy()

    if kind in ("banded", "clustered", "mixed") and labels is None:
        raise InfeasibleSpec(f"{kind} layout needs size-class labels")

    # one sampler per seed index, so rejected points can be redrawn in place
    def draw(idx, rng):
        idx = np.asarray(idx)
        if kind == "uniform" or kind == "gradient":
            return _uniform(domain, rng, len(idx))
        out = np.empty((len(idx), domain.dim))
        for lab in np.unique(labels[idx]):
            sel = labels[idx] == lab
            cnt = int(sel.sum())
            if kind == "banded":
                bands = [b for b in spec.bands if b.label == lab]
                out[sel] = _in_bands(domain, rng, cnt, bands, spec.axis)
            elif kind == "clustered":
                if lab == spec.cluster_label:
                    out[sel] = _in_discs(domain, rng, cnt, spec.discs)
                else:
                    out[sel] = _outside_discs(domain, rng, cnt, spec.discs)
            else:
                bands = [b for b in spec.bands if b.label == lab]
                if lab == spec.cluster_label:
                    k = rng.random(cnt) < spec.mixed_fraction
                    part = _uniform(domain, rng, cnt)
                    if k.any():
                        part[k] = _in_bands(domain, rng, int(k.sum()), bands, spec.axis)
                    out[sel] = part
                else:
                    out[sel] = _in_bands(domain, rng, cnt, bands, spec.axis)
        return out

    pts = draw(np.arange(n), rng)
    pts = _resample_close(domain, pts, draw, rng)
    if kind == "gradient":
        pts = _order_by_size(domain, pts, spec)
    return pts


def _order_by_size(domain: Domain, pts, spec: SpatialSpec) -> np.ndarray:
    if spec.sizes is None or len(spec.sizes) != len(pts):
        raise InfeasibleSpec("gradient layout needs one size per seed")
    if spec.profile not in ("increasing", "decreasing"):
        raise InfeasibleSpec(f"unknown gradient profile {spec.profile!r}")
    sizes = np.asarray(spec.sizes, float)
    order = np.argsort(sizes, kind="stable")
    if spec.profile == "decreasing":
        order = order[::-1]
    coord = np.sort(pts[:, spec.axis])
    out = pts.copy()
    out[order, spec.axis] = coord
    return out


@dataclass
class VolumeSpec:
    """Target-volume generator.

    ``bimodal`` gives ``n1`` cells of size ``x`` and ``n2`` of size
    ``ratio * x``; ``lognormal`` draws radii with the given mean and
    standard deviation and sets volumes to ``r ** exponent``;
    ``uniform-ratio`` draws volumes uniformly in ``[1, max_ratio]``.
    Every kind is rescaled to fill the domain.
    """

    kind: str = "bimodal"
    n: int | None = None
    n1: int = 0
    n2: int = 0
    ratio: float = 1.0
    mean: float = 1.0
    sd: float = 0.35
    exponent: float = 3.0
    max_ratio: float = 100.0
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in VOLUME_KINDS:
            raise InvalidTargets(f"unknown target kind {self.kind!r}")


def lognormal_parameters(mean: float, sd: float) -> tuple[float, float]:
    """``(mu, sigma)`` of the underlying normal for a log-normal with this mean and sd."""
    sigma = math.sqrt(math.log1p((sd / mean) ** 2))
    return math.log(mean) - 0.5 * sigma * sigma, sigma


def make_targets(domain: Domain, spec: VolumeSpec, rng=None) -> TargetSpec:
    """Targets summing to the domain volume; bimodal targets carry labels
    (0 small, 1 large) with the small class first."""
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = make_rng(0 if rng is None else rng)
    labels = None
    kind = spec.kind
    if kind == "explicit":
        raw = np.asarray(spec.values, float)
    elif kind == "bimodal":
        if spec.n1 < 0 or spec.n2 < 0 or spec.n1 + spec.n2 == 0 or spec.ratio <= 0:
            raise InvalidTargets("bimodal needs n1 + n2 > 0 and a positive ratio")
        x = domain.volume / (spec.n1 + spec.ratio * spec.n2)
        raw = np.r_[np.full(spec.n1, x), np.full(spec.n2, spec.ratio * x)]
        labels = np.r_[np.zeros(spec.n1, int), np.ones(spec.n2, int)]
    elif kind == "lognormal":
        n = _count(spec)
        mu, sigma = lognormal_parameters(spec.mean, spec.sd)
        raw = rng.lognormal(mu, sigma, n) ** spec.exponent
    else:
        if spec.max_ratio < 1:
            raise InvalidTargets("max_ratio must be at least 1")
        raw = rng.uniform(1.0, spec.max_ratio, _count(spec))
    if raw.size == 0 or np.any(~np.isfinite(raw)) or np.any(raw <= 0):
        raise InvalidTargets("targets must be positive")
    m = raw * (domain.volume / raw.sum())
    return TargetSpec(m, labels)


def _count(spec: VolumeSpec) -> int:
    if spec.n is None or spec.n < 1:
        raise InvalidTargets(f"{spec.kind} targets need a positive count n")
    return int(spec.n)
