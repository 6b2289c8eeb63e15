"""Regularised volume-constrained diagrams: Lloyd steps alternated with
weight optimisation, plus the transport energy used to monitor them."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .diagram import Domain, LaguerreDiagram, build_diagram
from .errors import EmptyCell, EnergyIncrease
from .geometry import sphericity_from
from .transport import SolveReport, as_targets, solve_weights

log = logging.getLogger(__name__)


@dataclass
class LloydConfig:
    """Settings for :func:`algorithm2`.

    Parameters
    ----------
    K : int
        Maximum number of regularisation steps.
    lam : float
        Damping in (0, 1]; 1 moves every seed onto its cell centroid.
    eps : float
        Relative volume tolerance of each optimisation step.
    method : str
        Weight optimiser, ``"quasi-newton"`` or ``"damped-newton"``.
    displacement_stop : float, optional
        Stop once the largest seed move falls below this length.
    sphericity_stop : float, optional
        Stop once the mean cell sphericity reaches this value.
    energy_tol : float, optional
        If set, the energy is recorded at each step from weights polished to
        this relative tolerance, and an increase beyond ``energy_slack``
        times the first recorded energy raises :class:`EnergyIncrease`.
    eps_schedule : callable, optional
        ``k -> eps_k`` overriding ``eps`` at step ``k`` (1-based).
    """

    K: int = 10
    lam: float = 1.0
    eps: float = 0.01
    method: str = "quasi-newton"
    displacement_stop: float | None = None
    sphericity_stop: float | None = None
    energy_tol: float | None = None
    energy_slack: float = 1e-9
    eps_schedule: Callable[[int], float] | None = None
    max_iter: int | None = None

    def __post_init__(self):
        if int(self.K) < 1:
            raise ValueError("K must be at least 1")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must lie in (0, 1]")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        self.K = int(self.K)

    def eps_at(self, k: int) -> float:
        return float(self.eps_schedule(k)) if self.eps_schedule else self.eps

    @staticmethod
    def default_displacement_stop(domain: Domain) -> float:
        return 1e-4 * domain.diameter


@dataclass
class LloydRecord:
    k: int
    evaluations: int
    iterations: int
    energy: float
    max_displacement: float
    max_centroid_distance: float
    boundary_ratio: float
    mean_sphericity: float
    min_seed_distance: float
    volumes: np.ndarray = field(repr=False)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "volumes"}
        d["volumes"] = [float(v) for v in self.volumes]
        return d


@dataclass
class LloydTrace:
    records: list = field(default_factory=list)
    initial_energy: float = math.nan
    stop_reason: str = "fixed-K"
    report: SolveReport | None = None
    diagram: LaguerreDiagram | None = field(default=None, repr=False)
    wall_time: float = 0.0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def energies(self) -> np.ndarray:
        return self.column("energy")

    @property
    def evaluations(self) -> np.ndarray:
        return self.column("evaluations")

    def to_dict(self) -> dict:
        return {
            "initial_energy": self.initial_energy,
            "stop_reason": self.stop_reason,
            "wall_time": self.wall_time,
            "records": [r.to_dict() for r in self.records],
            "final_solve": self.report.to_dict() if self.report else None,
        }


def lloyd_step(diagram: LaguerreDiagram, lam: float = 1.0) -> np.ndarray:
    """Move every seed a fraction ``lam`` of the way to its cell centroid."""
    if np.any(diagram.empty):
        raise EmptyCell(f"cells {np.flatnonzero(diagram.empty).tolist()} are empty")
    x = diagram.positions
    new = (1.0 - lam) * x + lam * diagram.centroids
    if diagram.periodic:
        new = diagram.domain.wrap(new)
    return new


def energy_gradient(diagram: LaguerreDiagram) -> np.ndarray:
    """``dE/dx_i = 2 |L_i| (x_i - c_i)``."""
    if np.any(diagram.empty):
        raise EmptyCell("energy gradient needs non-empty cells")
    return 2.0 * diagram.volumes[:, None] * (diagram.positions - diagram.centroids)


def energy(domain: Domain, positions, targets, eps_inner: float = 1e-10,
           w_init=None, method: str = "damped-newton") -> float:
    """Transport energy: total second moment about the seeds at weights
    solving the volume constraints to ``eps_inner``."""
    _, report = solve_weights(domain, positions, targets, eps=eps_inner,
                              w_init=w_init, method=method)
    return float(report.diagram.moments.sum())


def mean_sphericity(diagram: LaguerreDiagram) -> float:
    live = ~diagram.empty
    s = sphericity_from(diagram.volumes[live], diagram.surfaces[live], diagram.dim)
    return float(np.mean(s))


def boundary_ratio(diagram: LaguerreDiagram, targets) -> float:
    """``min_i dist(c_i, boundary L_i) / (m_i^2 / diam^(2d-1))``.

    A lower bound for this ratio is what keeps regularised seeds apart.
    """
    m = np.asarray(targets, float)
    scale = m * m / diagram.domain.diameter ** (2 * diagram.dim - 1)
    return float(np.min(diagram.boundary_distance / scale))


def min_seed_distance(domain: Domain, positions) -> float:
    """Smallest pairwise seed distance (periodic distance in a periodic box)."""
    x = np.asarray(positions, float)
    if len(x) < 2:
        return math.inf
    if domain.periodic:
        tree = cKDTree(domain.wrap(x) - domain.lower, boxsize=domain.lengths)
    else:
        tree = cKDTree(x)
    d, _ = tree.query(x, k=2)
    return float(d[:, 1].min())


def _polished_energy(domain, positions, targets, weights, tol):
    w, rep = solve_weights(domain, positions, targets, eps=tol, w_init=weights,
                           method="damped-newton")
    return float(rep.diagram.moments.sum()), rep.diagram


def algorithm2(domain: Domain, targets, seeds0, config: LloydConfig | None = None):
    """Alternate Lloyd steps with warm-started weight optimisation.

    Starts from zero weights, so the first diagram is the Voronoi diagram of
    ``seeds0`` and has no empty cells. Returns ``(positions, weights, trace)``;
    ``trace.diagram`` is the final diagram and ``trace.report`` the last
    solver report.
    """
    cfg = config or LloydConfig()
    spec = as_targets(targets, domain)
    m = spec.targets
    t_start = time.perf_counter()
    x = np.asarray(seeds0, float)
    if domain.periodic:
        x = domain.wrap(x)
    w = np.zeros(len(x))
    diagram = build_diagram(domain, x, w)
    trace = LloydTrace()
    reference = None
    previous = None
    for k in range(1, cfg.K + 1):
        t0 = time.perf_counter()
        x_new = lloyd_step(diagram, cfg.lam)
        ratio = boundary_ratio(diagram, m) if k > 1 else math.nan
        move = float(np.max(domain.distance(x_new, x)))
        x = x_new
        w, report = solve_weights(domain, x, spec, eps=cfg.eps_at(k), w_init=w,
                                  method=cfg.method, max_iter=cfg.max_iter)
        diagram = report.diagram
        e = math.nan
        if cfg.energy_tol is not None:
            e, _ = _polished_energy(domain, x, spec, w, cfg.energy_tol)
            if reference is None:
                reference = e
                trace.initial_energy = e
            elif e > previous + cfg.energy_slack * reference:
                raise EnergyIncrease(
                    f"energy rose from {previous!r} to {e!r} at step {k}",
                    weights=w, report=report)
            previous = e
        rec = LloydRecord(
            k=k, evaluations=report.function_evaluations,
            iterations=report.outer_iterations, energy=e,
            max_displacement=move,
            max_centroid_distance=float(np.max(domain.distance(
                diagram.positions, diagram.domain.wrap(diagram.centroids)
                if domain.periodic else diagram.centroids))),
            boundary_ratio=ratio, mean_sphericity=mean_sphericity(diagram),
            min_seed_distance=min_seed_distance(domain, x),
            volumes=diagram.volumes.copy(), wall_time=time.perf_counter() - t0)
        trace.records.append(rec)
        log.debug("step %d: %d evaluations, move %.3g", k, rec.evaluations, move)
        if cfg.displacement_stop is not None and move < cfg.displacement_stop:
            trace.stop_reason = "displacement"
            break
        if cfg.sphericity_stop is not None and rec.mean_sphericity >= cfg.sphericity_stop:
            trace.stop_reason = "sphericity"
            break
    trace.report = report
    trace.diagram = diagram
    trace.wall_time = time.perf_counter() - t_start
    return x, w, trace
