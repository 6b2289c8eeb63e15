"""Semi-discrete optimal transport dual for prescribed cell volumes.

For fixed generators ``x_i`` and targets ``m_i`` the function

    g(w) = sum_i (m_i - |L_i|) w_i + sum_i int_{L_i} |x - x_i|^2 dx

is concave, with gradient ``m_i - |L_i|``. Maximising it gives weights whose
power diagram has the target volumes. Two maximisers are provided: a
limited-memory BFGS with backtracking (the default) and a damped Newton
method that uses the sparse Hessian built from the face graph.
"""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .diagram import CandidateIndex, Domain, LaguerreDiagram, build_diagram, check_distinct
from .errors import InvalidTargets, LineSearchFailure, MaxIterationsExceeded

log = logging.getLogger(__name__)

METHODS = ("quasi-newton", "damped-newton")


@dataclass
class TargetSpec:
    """Target cell volumes, optionally with a size-class label per cell."""

    targets: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=float).ravel()
        if t.size == 0 or not np.all(np.isfinite(t)) or np.any(t <= 0):
            raise InvalidTargets("targets must be positive and finite")
        self.targets = t
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int).ravel()
            if self.labels.shape != t.shape:
                raise InvalidTargets("one label per target required")

    def __len__(self):
        return self.targets.size

    @property
    def min(self) -> float:
        return float(self.targets.min())

    @classmethod
    def for_domain(cls, targets, domain: Domain, labels=None,
                   rtol: float = 1e-6) -> TargetSpec:
        """Rescale to ``sum = |domain|`` if already within ``rtol``, else reject."""
        spec = cls(targets, labels)
        total = spec.targets.sum()
        if abs(total - domain.volume) > rtol * domain.volume:
            raise InvalidTargets(
                f"targets sum to {total!r}, domain volume is {domain.volume!r}")
        spec.targets = spec.targets * (domain.volume / total)
        return spec


def as_targets(targets, domain: Domain) -> TargetSpec:
    if isinstance(targets, TargetSpec):
        spec = targets
        total = spec.targets.sum()
        if abs(total - domain.volume) > 1e-6 * domain.volume:
            raise InvalidTargets(
                f"targets sum to {total!r}, domain volume is {domain.volume!r}")
        if total != domain.volume:
            spec = TargetSpec(spec.targets * (domain.volume / total), spec.labels)
        return spec
    return TargetSpec.for_domain(targets, domain)


@dataclass
class DualState:
    weights: np.ndarray
    diagram: LaguerreDiagram
    g_value: float
    gradient: np.ndarray

    @property
    def grad_inf_norm(self) -> float:
        return float(np.max(np.abs(self.gradient)))


@dataclass
class SolveReport:
    method: str
    converged: bool = False
    outer_iterations: int = 0
    function_evaluations: int = 0
    grad_inf_norm: float = math.inf
    threshold: float = 0.0
    relative_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))
    wall_time: float = 0.0
    grad_history: list = field(default_factory=list)
    message: str = ""
    diagram: LaguerreDiagram | None = field(default=None, repr=False)

    @property
    def max_relative_error(self) -> float:
        return float(np.max(self.relative_errors)) if self.relative_errors.size else math.nan

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("diagram")
        d["relative_errors"] = [float(x) for x in self.relative_errors]
        d["grad_history"] = [float(x) for x in self.grad_history]
        d["max_relative_error"] = self.max_relative_error
        return d


class DualProblem:
    """The dual functional for one set of generators.

    Holds the candidate index so repeated evaluations only redo the
    clipping, and counts evaluations.
    """

    def __init__(self, domain: Domain, positions, targets):
        self.domain = domain
        self.targets = as_targets(targets, domain)
        pos = np.asarray(positions, float)
        if domain.periodic:
            pos = domain.wrap(pos)
        if len(pos) != len(self.targets):
            raise InvalidTargets("one target per generator required")
        check_distinct(domain, pos)
        self.positions = pos
        self.index = CandidateIndex(domain, pos)
        self.evaluations = 0

    @property
    def m(self) -> np.ndarray:
        return self.targets.targets

    def evaluate(self, weights) -> DualState:
        w = np.asarray(weights, float)
        diagram = build_diagram(self.domain, self.positions, w, index=self.index)
        # the index may have grown its image shell
        self.index = diagram.index
        self.evaluations += 1
        grad = self.m - diagram.volumes
        g = float(grad @ w + diagram.moments.sum())
        return DualState(w, diagram, g, grad)


def objective_g(domain: Domain, positions, targets, weights, index=None):
    """``(g, grad g, diagram)`` at ``weights``."""
    m = as_targets(targets, domain).targets
    w = np.asarray(weights, float)
    diagram = build_diagram(domain, positions, w, index=index)
    grad = m - diagram.volumes
    return float(grad @ w + diagram.moments.sum()), grad, diagram


def hessian_g(diagram: LaguerreDiagram) -> sp.csr_matrix:
    """Sparse Hessian of g: ``a_ij / (2 |x_i - x_j|)`` off the diagonal,
    minus the row sum on it. Periodic images contribute one term each."""
    n = diagram.n
    i, j, area, dist = diagram.interior_faces()
    vals = area / (2.0 * dist)
    off = sp.coo_matrix((vals, (i, j)), shape=(n, n)).tocsr()
    off = 0.5 * (off + off.T)
    diag = np.asarray(off.sum(axis=1)).ravel()
    return (off - sp.diags(diag)).tocsr()


def sphere_packing_init(targets, dim: int) -> np.ndarray:
    """Weights ``r_i^2`` with ``r_i`` the radius of a disc/ball of volume ``m_i``."""
    m = np.asarray(getattr(targets, "targets", targets), float)
    if dim == 2:
        return m / math.pi
    if dim == 3:
        return (3.0 * m / (4.0 * math.pi)) ** (2.0 / 3.0)
    raise ValueError("dimension must be 2 or 3")


def default_max_iterations(n: int) -> int:
    return int(500 * (1 + math.log10(max(n, 1))))


def _mean_curvature(diagram: LaguerreDiagram) -> float:
    i, _, area, dist = diagram.interior_faces()
    diag = np.bincount(i, weights=area / (2.0 * dist), minlength=diagram.n)
    pos = diag[diag > 0]
    return float(pos.mean()) if pos.size else 1.0


def _finish(report: SolveReport, problem: DualProblem, state: DualState,
            t0: float, threshold: float) -> SolveReport:
    report.grad_inf_norm = state.grad_inf_norm
    report.converged = state.grad_inf_norm < threshold
    report.function_evaluations = problem.evaluations
    report.relative_errors = state.diagram.relative_errors(problem.m)
    report.wall_time = time.perf_counter() - t0
    report.diagram = state.diagram
    return report


def _lbfgs(problem, state, threshold, max_iter, report, memory=10, c1=1e-4,
           shrink=0.5):
    S: deque = deque(maxlen=memory)
    Y: deque = deque(maxlen=memory)
    # minimise f = -g
    f = -state.g_value
    gf = -state.gradient
    gamma0 = 1.0 / _mean_curvature(state.diagram)
    for it in range(max_iter):
        if state.grad_inf_norm < threshold:
            return state
        report.outer_iterations = it + 1
        q = gf.copy()
        alphas = []
        for s, y in zip(reversed(S), reversed(Y)):
            a = (s @ q) / (s @ y)
            alphas.append(a)
            q -= a * y
        if S:
            gamma = (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
        else:
            gamma = gamma0
        r = gamma * q
        for (s, y), a in zip(zip(S, Y), reversed(alphas)):
            b = (y @ r) / (s @ y)
            r += s * (a - b)
        p = -r
        slope = gf @ p
        if not slope < 0:
            S.clear()
            Y.clear()
            p = -gamma0 * gf
            slope = gf @ p
        t = 1.0
        while True:
            trial = problem.evaluate(state.weights + t * p)
            if -trial.g_value <= f + c1 * t * slope:
                break
            t *= shrink
            if t < 1e-20:
                raise LineSearchFailure(
                    "backtracking found no sufficient increase",
                    weights=state.weights, report=report)
        s = trial.weights - state.weights
        gf_new = -trial.gradient
        y = gf_new - gf
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        state, f, gf = trial, -trial.g_value, gf_new
        report.grad_history.append(state.grad_inf_norm)
    return state


def newton_direction(diagram: LaguerreDiagram, gradient, rtol: float = 1e-10):
    """Solve ``-H d = grad`` on the non-empty cells, orthogonal to constants.

    Empty cells have a zero Hessian row; they get a scaled gradient step.
    """
    n = diagram.n
    A = -hessian_g(diagram)
    live = ~diagram.empty
    d = np.zeros(n)
    idx = np.flatnonzero(live)
    if idx.size > 1:
        sub = A[idx][:, idx].tocsr()
        b = gradient[idx] - gradient[idx].mean()
        diag = sub.diagonal()
        diag = np.where(diag > 0, diag, 1.0)
        M = sp.diags(1.0 / diag)
        x, _ = cg(sub, b, rtol=rtol, atol=0.0, maxiter=10 * idx.size, M=M)
        d[idx] = x - x.mean()
    dead = ~live
    if np.any(dead):
        d[dead] = gradient[dead] / _mean_curvature(diagram)
    return d


def _nonempty_start(problem, state):
    """Scale the weights towards zero until no cell is empty; zero weights
    give the Voronoi diagram, where every cell has positive volume."""
    w0 = state.weights
    s = 1.0
    while np.any(state.diagram.empty):
        s *= 0.5
        state = problem.evaluate(s * w0 if s > 2.0 ** -30 else np.zeros_like(w0))
    return state


def _damped_newton(problem, state, threshold, max_iter, report, eps):
    m = problem.m
    state = _nonempty_start(problem, state)
    for it in range(max_iter):
        if state.grad_inf_norm < threshold:
            return state
        report.outer_iterations = it + 1
        d = newton_direction(state.diagram, state.gradient)
        vol = state.diagram.volumes
        floor = 0.5 * np.minimum(vol, (1.0 - eps) * m)
        gnorm = np.linalg.norm(state.gradient)
        t = 1.0
        while True:
            trial = problem.evaluate(state.weights + t * d)
            if (np.all(trial.diagram.volumes >= floor)
                    and np.linalg.norm(trial.gradient) <= (1.0 - 0.5 * t) * gnorm):
                break
            t *= 0.5
            if t < 2.0 ** -40:
                raise LineSearchFailure(
                    "damped Newton step could not be accepted",
                    weights=state.weights, report=report)
        state = trial
        report.grad_history.append(state.grad_inf_norm)
    return state


def solve_weights(domain: Domain, positions, targets, eps: float = 0.01,
                  w_init=None, method: str = "quasi-newton",
                  max_iter: int | None = None, raise_on_failure: bool = True):
    """Maximise g until ``max_i |m_i - |L_i|| < eps * min_j m_j``.

    Returns ``(weights, report)``; ``report.diagram`` is the diagram at the
    returned weights. Raises :class:`MaxIterationsExceeded` (carrying the
    best state) if the cap is hit.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    t0 = time.perf_counter()
    problem = DualProblem(domain, positions, targets)
    n = len(problem.m)
    w0 = np.zeros(n) if w_init is None else np.asarray(w_init, float).copy()
    if w0.shape != (n,) or not np.all(np.isfinite(w0)):
        raise ValueError("w_init must be a finite vector with one entry per seed")
    # the diagram ignores a common offset; iterate on offset-free weights so
    # that w_init and w_init + c follow the same path in floating point
    offset = w0.max() if n else 0.0
    w0 -= offset
    if max_iter is None:
        max_iter = default_max_iterations(n)
    threshold = eps * problem.targets.min
    report = SolveReport(method=method, threshold=threshold)
    state = problem.evaluate(w0)
    report.grad_history.append(state.grad_inf_norm)
    if method == "quasi-newton":
        state = _lbfgs(problem, state, threshold, max_iter, report)
    else:
        state = _damped_newton(problem, state, threshold, max_iter, report, eps)
    _finish(report, problem, state, t0, threshold)
    weights = state.weights + offset
    report.diagram = replace(state.diagram, weights=weights)
    log.debug("%s: %d iterations, %d evaluations, |grad| = %.3g",
              method, report.outer_iterations, report.function_evaluations,
              report.grad_inf_norm)
    if not report.converged:
        report.message = f"no convergence after {max_iter} iterations"
        if raise_on_failure:
            raise MaxIterationsExceeded(report.message, weights=weights,
                                        report=report)
    return weights, report


def algorithm1(domain: Domain, targets, positions, eps: float = 0.01,
               method: str = "quasi-newton", w_init=None, max_iter=None):
    """Fixed generators, weights from zero (or ``w_init``) to tolerance ``eps``.

    Returns ``(positions, weights, report)``.
    """
    pos = np.asarray(positions, float)
    if domain.periodic:
        pos = domain.wrap(pos)
    weights, report = solve_weights(domain, pos, targets, eps=eps,
                                    w_init=w_init, method=method,
                                    max_iter=max_iter)
    return pos, weights, report
