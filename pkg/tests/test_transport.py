import numpy as np
import pytest

from laguerre.diagram import Domain, compute_diagram
from laguerre.errors import InvalidTargets, MaxIterationsExceeded
from laguerre.geometry import ConvexPolytope, second_moment
from laguerre.transport import (
    TargetSpec,
    algorithm1,
    hessian_g,
    objective_g,
    solve_weights,
    sphere_packing_init,
)

UNIT2 = Domain.unit(2)


def random_problem(seed, n=None, dim=None, periodic=None):
    rng = np.random.default_rng(seed)
    dim = dim or int(rng.choice([2, 3]))
    n = n or int(rng.integers(3, 21))
    periodic = bool(rng.integers(2)) if periodic is None else periodic
    dom = Domain.unit(dim, periodic=periodic)
    pts = rng.random((n, dim))
    m = rng.uniform(1, 4, n)
    m /= m.sum()
    w = rng.uniform(-0.3, 0.3, n) * n ** (-2 / dim)
    return dom, pts, m, w


def fd_gradient(dom, pts, m, w, h):
    out = np.empty_like(w)
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = h
        out[i] = (objective_g(dom, pts, m, w + e)[0] - objective_g(dom, pts, m, w - e)[0]) / (2 * h)
    return out


class TestObjective:
    def test_single_cell(self):
        g, grad, _ = objective_g(UNIT2, [[0.3, 0.8]], [1.0], [0.7])
        assert grad.tolist() == [0.0]
        assert g == pytest.approx(second_moment(ConvexPolytope.box([0, 0], [1, 1]), [0.3, 0.8]))

    def test_symmetric_pair(self):
        _, grad, _ = objective_g(UNIT2, [[0.25, 0.5], [0.75, 0.5]], [0.5, 0.5], [0.0, 0.0])
        assert np.allclose(grad, 0.0, atol=1e-15)

    def test_gradient_matches_differences(self):
        dom, pts, m, w = random_problem(0, n=10, dim=2, periodic=False)
        _, grad, _ = objective_g(dom, pts, m, w)
        fd = fd_gradient(dom, pts, m, w, 1e-6 * dom.volume ** (2 / dom.dim))
        assert np.abs(fd - grad).max() / np.abs(grad).max() < 1e-5

    @pytest.mark.parametrize("seed", range(6))
    def test_gradient_sums_to_zero(self, seed):
        dom, pts, m, w = random_problem(seed)
        _, grad, _ = objective_g(dom, pts, m, w)
        assert abs(grad.sum()) < 1e-12

    def test_target_rescaling(self):
        t = TargetSpec.for_domain([0.5, 0.5 + 1e-8], UNIT2)
        assert t.targets.sum() == pytest.approx(1.0, abs=1e-15)
        with pytest.raises(InvalidTargets):
            TargetSpec.for_domain([0.5, 0.6], UNIT2)
        with pytest.raises(InvalidTargets):
            TargetSpec([1.0, -0.1, 0.1])


class TestHessian:
    def test_split_square(self, frozen):
        d = compute_diagram(UNIT2, [[0.25, 0.5], [0.75, 0.5]])
        a = frozen["split_square_hessian_offdiag"]
        assert np.allclose(hessian_g(d).toarray(), [[-a, a], [a, -a]])

    @pytest.mark.parametrize("seed", range(5))
    def test_structure(self, seed):
        dom, pts, m, w = random_problem(seed + 10)
        H = hessian_g(compute_or_build(dom, pts, w)).toarray()
        assert np.allclose(H.sum(axis=1), 0.0, atol=1e-12)
        assert np.allclose(H, H.T)
        assert np.linalg.eigvalsh(H).max() < 1e-10

    def test_matches_differences(self):
        dom, pts, m, w = random_problem(1, n=8, dim=3, periodic=False)
        H = hessian_g(compute_or_build(dom, pts, w)).toarray()
        h = 1e-7
        fd = np.empty_like(H)
        for j in range(len(w)):
            e = np.zeros_like(w)
            e[j] = h
            fd[:, j] = (objective_g(dom, pts, m, w + e)[1] - objective_g(dom, pts, m, w - e)[1]) / (2 * h)
        assert np.abs(fd - H).max() < 1e-4 * np.abs(H).max()


def compute_or_build(dom, pts, w):
    from laguerre.diagram import build_diagram

    return build_diagram(dom, pts, w)


class TestSolve:
    @pytest.mark.parametrize("method", ["quasi-newton", "damped-newton"])
    def test_two_cells(self, method, frozen):
        w, rep = solve_weights(UNIT2, [[0.25, 0.5], [0.75, 0.5]], [0.3, 0.7], eps=1e-8, method=method)
        assert w[0] - w[1] == pytest.approx(frozen["two_cell_weight_gap"], abs=1e-8)
        assert rep.converged

    @pytest.mark.parametrize("method", ["quasi-newton", "damped-newton"])
    def test_bimodal_fifty(self, method, frozen):
        x = frozen["bimodal_unit"]
        m = np.r_[np.full(35, x), np.full(15, 10 * x)]
        pts = np.random.default_rng(11).random((50, 2))
        w, rep = solve_weights(UNIT2, pts, m, eps=0.01, method=method)
        assert rep.relative_errors.max() < 0.01
        assert rep.grad_inf_norm < 0.01 * m.min()
        # restarting from the answer needs no further iterations
        _, again = solve_weights(UNIT2, pts, m, eps=0.01, w_init=w, method=method)
        assert again.outer_iterations <= 1

    def test_algorithm1_single_cell(self):
        pos, w, rep = algorithm1(UNIT2, [1.0], [[0.2, 0.3]])
        assert rep.outer_iterations == 0 and rep.converged
        assert w.tolist() == [0.0]

    def test_max_iterations_carries_state(self):
        dom, pts, m, _ = random_problem(3, n=15, dim=2, periodic=False)
        with pytest.raises(MaxIterationsExceeded) as info:
            solve_weights(dom, pts, m, eps=1e-9, max_iter=2)
        assert info.value.weights is not None and info.value.report is not None

    def test_bad_eps(self):
        with pytest.raises(ValueError):
            solve_weights(UNIT2, [[0.5, 0.5]], [1.0], eps=1.5)

    @pytest.mark.parametrize("c", [1.0, 7.3])
    def test_shift_of_initial_guess(self, c):
        dom, pts, m, _ = random_problem(4, n=40, dim=2, periodic=False)
        _, a = solve_weights(dom, pts, m, w_init=np.zeros(40))
        _, b = solve_weights(dom, pts, m, w_init=np.full(40, c))
        assert np.abs(a.diagram.volumes - b.diagram.volumes).max() <= 1e-10 * dom.volume

    @pytest.mark.parametrize("seed", range(20))
    def test_methods_agree(self, seed):
        rng = np.random.default_rng(100 + seed)
        dim = 2 if seed % 2 else 3
        n = int(rng.integers(5, 101))
        dom = Domain.unit(dim, periodic=seed % 3 == 0)
        pts = rng.random((n, dim))
        m = rng.uniform(1, 10, n)
        m /= m.sum()
        _, a = solve_weights(dom, pts, m, method="quasi-newton")
        _, b = solve_weights(dom, pts, m, method="damped-newton")
        assert a.relative_errors.max() < 0.01 and b.relative_errors.max() < 0.01
        assert np.max(np.abs(a.diagram.volumes - b.diagram.volumes) / m) < 0.01

    def test_stationarity_implies_volumes(self):
        for seed in range(5):
            dom, pts, m, _ = random_problem(seed + 40)
            for eps in (0.05, 0.01, 1e-4):
                _, rep = solve_weights(dom, pts, m, eps=eps)
                assert rep.grad_inf_norm < eps * m.min()
                assert rep.relative_errors.max() < eps


class TestSpherePacking:
    def test_values(self, frozen):
        assert sphere_packing_init([np.pi], 2) == pytest.approx([1.0])
        assert sphere_packing_init([4 * np.pi / 3], 3) == pytest.approx([1.0])
        assert sphere_packing_init([32 * np.pi / 3], 3) == pytest.approx([frozen["sphere_packing_weight_3d"]])


def test_concavity_midpoints():
    rng = np.random.default_rng(9)
    dom, pts, m, _ = random_problem(5, n=12, dim=2, periodic=False)
    scale = 0.3 / 12
    for _ in range(20):
        w0, w1 = rng.uniform(-scale, scale, (2, 12))
        g0, g1 = objective_g(dom, pts, m, w0)[0], objective_g(dom, pts, m, w1)[0]
        for a in (0.25, 0.5, 0.75):
            ga = objective_g(dom, pts, m, a * w0 + (1 - a) * w1)[0]
            assert ga >= a * g0 + (1 - a) * g1 - 1e-9 * abs(ga)
