import numpy as np
import pytest
from scipy.spatial import cKDTree

from laguerre.diagram import (
    CandidateIndex,
    Domain,
    WeightedSeed,
    bisector,
    build_diagram,
    compute_diagram,
    compute_periodic_diagram,
    neighbor_candidates,
    wrap_cell,
)
from laguerre.errors import CoincidentSeeds, DegenerateDomain
from laguerre.geometry import volume
from laguerre.oracle import voxel_centres

UNIT2 = Domain.unit(2)
UNIT3P = Domain.unit(3, periodic=True)


def same_vertices(a, b, tol):
    if len(a.vertices) == 0 or len(b.vertices) == 0:
        return len(a.vertices) == len(b.vertices)
    da, _ = cKDTree(b.vertices).query(a.vertices)
    db, _ = cKDTree(a.vertices).query(b.vertices)
    return max(da.max(), db.max()) <= tol


class TestBisector:
    def test_equal_weights(self):
        h = bisector(WeightedSeed([0, 0], 0), WeightedSeed([1, 0], 0))
        assert h.offset / h.normal[0] == pytest.approx(0.5)
        assert h.normal[1] == 0

    def test_weighted(self, frozen):
        h = bisector(WeightedSeed([0, 0], 0.25), WeightedSeed([1, 0], 0))
        assert h.offset / h.normal[0] == pytest.approx(frozen["bisector_offset"])

    @pytest.mark.parametrize("c", [-5.0, 0.3, 1e3])
    def test_weight_shift(self, c):
        a, b = WeightedSeed([0.1, 0.2], 0.01), WeightedSeed([0.7, 0.4], -0.02)
        h0 = bisector(a, b)
        h1 = bisector(WeightedSeed(a.position, a.weight + c), WeightedSeed(b.position, b.weight + c))
        assert np.allclose(h0.normal, h1.normal)
        assert h1.offset == pytest.approx(h0.offset, abs=1e-12 * max(1, abs(c)))

    def test_coincident(self):
        with pytest.raises(CoincidentSeeds):
            bisector(WeightedSeed([0.5, 0.5], 0), WeightedSeed([0.5, 0.5], 1))


class TestBounded:
    def test_single_cell(self):
        d = compute_diagram(UNIT2, [[0.3, 0.4]], [7.0])
        assert d.volumes[0] == pytest.approx(1.0)

    def test_two_rectangles(self):
        d = compute_diagram(UNIT2, [[0.25, 0.5], [0.75, 0.5]])
        assert np.allclose(d.volumes, 0.5)
        adj = {a.neighbor: a.area for a in d.adjacency(0) if a.neighbor >= 0}
        assert adj == {1: pytest.approx(1.0)}
        assert volume(d.cell(0)) == pytest.approx(0.5)

    def test_degenerate_domain(self):
        with pytest.raises(DegenerateDomain):
            Domain([0, 0], [1, 0])

    def test_coincident_seeds(self):
        with pytest.raises(CoincidentSeeds):
            compute_diagram(UNIT2, [[0.5, 0.5], [0.5, 0.5]])

    def test_generator_outside_cell(self):
        # a heavy neighbour can push the boundary past a generator
        d = compute_diagram(UNIT2, [[0.4, 0.5], [0.6, 0.5]], [0.0, 0.06])
        cell0 = d.cell(0)
        assert cell0.vertices[:, 0].max() < 0.4

    def test_empty_cell_is_flagged(self):
        pts = np.array([[0.2, 0.2], [0.8, 0.8], [0.5, 0.5]])
        d = compute_diagram(UNIT2, pts, [0.0, 0.0, -1.0])
        assert d.empty.tolist() == [False, False, True]
        assert d.n == 3 and d.volumes[2] == 0.0
        assert d.total_volume() == pytest.approx(1.0)

    def test_equal_weights_is_voronoi(self):
        rng = np.random.default_rng(0)
        pts = rng.random((20, 2))
        d = compute_diagram(UNIT2, pts, np.full(20, 0.3))
        centres = voxel_centres(UNIT2, 64)
        nearest = np.argmin(((centres[:, None] - pts[None]) ** 2).sum(-1), axis=1)
        for i, cell in enumerate(d.cells()):
            inside = np.ones(len(centres), bool)
            for k in range(len(cell.faces)):
                n, c = cell.face_plane(k)
                inside &= centres @ n < c - 1e-9
            assert inside.any()
            assert np.all(nearest[inside] == i)

    def test_adjacency_symmetric(self):
        rng = np.random.default_rng(1)
        d = compute_diagram(Domain.unit(3), rng.random((60, 3)), rng.uniform(-0.01, 0.01, 60))
        areas = {}
        for i in range(d.n):
            for a in d.adjacency(i):
                if a.neighbor >= 0:
                    areas[(i, a.neighbor)] = a.area
        for (i, j), a in areas.items():
            assert areas[(j, i)] == pytest.approx(a, rel=1e-9, abs=1e-12)


class TestPeriodic:
    def test_single_cell(self):
        d = compute_periodic_diagram(UNIT3P, [[0.1, 0.2, 0.9]])
        assert d.volumes[0] == pytest.approx(1.0)

    def test_two_slabs(self):
        d = compute_periodic_diagram(UNIT3P, [[0.25, 0.5, 0.5], [0.75, 0.5, 0.5]])
        assert np.allclose(d.volumes, 0.5)
        faces = d.face_area[(d.face_cell == 0) & (d.face_other == 1)]
        assert np.allclose(faces, [1.0, 1.0])
        adj = {a.neighbor: a for a in d.adjacency(0)}
        assert adj[1].multiplicity == 2 and adj[1].area == pytest.approx(2.0)

    def test_translation_equivariance(self):
        rng = np.random.default_rng(2)
        pts = rng.random((80, 3))
        w = rng.uniform(-0.002, 0.002, 80)
        t = rng.random(3)
        a = compute_periodic_diagram(UNIT3P, pts, w)
        b = compute_periodic_diagram(UNIT3P, UNIT3P.wrap(pts + t), w)
        assert np.abs(a.volumes - b.volumes).max() <= 1e-10
        # unwrapped centroids move with their seeds
        shift = UNIT3P.displacement(a.centroids + t, b.centroids)
        assert np.abs(shift).max() < 1e-10

    def test_wrap_cell_pieces(self):
        d = compute_periodic_diagram(UNIT3P, [[0.05, 0.5, 0.5], [0.55, 0.5, 0.5]])
        pieces = wrap_cell(d.cell(0), UNIT3P)
        assert len(pieces) == 2
        assert sum(volume(p) for p, _ in pieces) == pytest.approx(0.5)
        for p, _ in pieces:
            assert np.all(UNIT3P.contains(p.vertices, 1e-12))


class TestCandidates:
    def test_two_seeds(self):
        assert list(neighbor_candidates([[0.25, 0.5], [0.75, 0.5]], 0, domain=UNIT2)) == [1]

    def test_sorted_by_distance(self):
        rng = np.random.default_rng(3)
        pts = rng.random((50, 2))
        cand = neighbor_candidates(pts, 4, domain=UNIT2)
        dist = np.linalg.norm(pts[cand] - pts[4], axis=1)
        assert np.all(np.diff(dist) >= 0)
        assert 4 not in cand

    def test_lattice_terminates_early(self):
        g = (np.arange(10) + 0.5) / 10
        pts = np.array([[a, b] for a in g for b in g])
        fast = compute_diagram(UNIT2, pts, np.ones(100))
        slow = compute_diagram(UNIT2, pts, np.ones(100), naive=True)
        assert np.abs(fast.volumes - slow.volumes).max() <= 1e-12
        assert fast.k_used.max() < 100

    def test_random_matches_naive(self):
        rng = np.random.default_rng(4)
        pts = rng.random((100, 2))
        w = rng.uniform(-0.01, 0.01, 100)
        fast = compute_diagram(UNIT2, pts, w)
        slow = compute_diagram(UNIT2, pts, w, naive=True)
        assert np.abs(fast.volumes - slow.volumes).max() <= 1e-12

    def test_index_reports_all_points(self):
        idx = CandidateIndex(UNIT3P, np.random.default_rng(5).random((10, 3)))
        assert idx.size == 10 * 27


def random_instance(seed):
    rng = np.random.default_rng(seed)
    dim = 2 if seed % 2 else 3
    n = int(rng.integers(2, 201))
    dom = Domain.unit(dim, periodic=bool(seed % 3 == 0))
    pts = rng.random((n, dim))
    scale = (1.0 / n) ** (2 / dim)
    return dom, pts, rng.uniform(-0.3, 0.3, n) * scale


@pytest.mark.parametrize("seed", range(50))
def test_accelerated_equals_naive(seed):
    dom, pts, w = random_instance(seed)
    fast = build_diagram(dom, pts, w)
    slow = build_diagram(dom, pts, w, naive=True)
    assert np.abs(fast.volumes - slow.volumes).max() <= 1e-12 * dom.volume


@pytest.mark.parametrize("seed", range(20))
def test_tessellation(seed):
    dom, pts, w = random_instance(seed + 100)
    d = build_diagram(dom, pts, w)
    assert abs(d.total_volume() - dom.volume) <= 1e-9 * dom.volume


@pytest.mark.parametrize("c", [-5.0, 1e3])
@pytest.mark.parametrize("periodic", [False, True])
def test_weight_shift_invariance(c, periodic):
    rng = np.random.default_rng(6)
    dom = Domain.unit(3, periodic=periodic)
    pts = rng.random((40, 3))
    w = rng.uniform(-0.005, 0.005, 40)
    a = build_diagram(dom, pts, w)
    b = build_diagram(dom, pts, w + c)
    assert np.abs(a.volumes - b.volumes).max() <= 1e-12
    tol = 1e-9 * dom.diameter * max(1.0, abs(c))
    for i in range(a.n):
        assert same_vertices(a.cell(i), b.cell(i), tol)
