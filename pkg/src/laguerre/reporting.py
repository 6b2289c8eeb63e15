"""Error statistics and figures for finished diagrams."""

from __future__ import annotations

import io as _io
import time
from pathlib import Path

import numpy as np

from .diagram import Domain
from .errors import IdMismatch
from .geometry import equivalent_radius
from .io import DiagramExport, atomic_write, dumps
from .lloyd import LloydConfig, algorithm2
from .seeding import SpatialSpec, VolumeSpec, make_targets, sample_positions

QUANTILES = (0.5, 0.9, 0.99, 1.0)


def ccdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Sorted values and the fraction of samples strictly greater than each."""
    v = np.sort(np.asarray(values, float))
    frac = 1.0 - np.searchsorted(v, v, side="right") / len(v)
    return v, frac


def ccdf_at(values, x: float) -> float:
    v = np.asarray(values, float)
    return float(np.mean(v > x))


def volume_percent_errors(export: DiagramExport, targets=None) -> np.ndarray:
    vol = export.volumes
    if targets is None:
        t = export.array("target")
    else:
        t = np.asarray(getattr(targets, "targets", targets), float)
    if len(t) != len(vol) or np.any(np.isnan(t)):
        raise IdMismatch("targets do not line up with the exported cells")
    return 100.0 * np.abs(vol - t) / t


def centroid_relative_errors(export: DiagramExport, reference, targets=None,
                             domain: Domain | None = None) -> np.ndarray:
    """``|c_ref_i - c_i| / r_i`` with ``c_i`` the cell centroid and ``r_i`` the
    radius of the ball of volume ``m_i`` (the target when known, else the
    cell volume)."""
    ref = np.asarray(reference, float)
    c = export.centroids
    if ref.shape != c.shape:
        raise IdMismatch("reference centroids do not line up with the exported cells")
    if domain is not None:
        dist = domain.distance(c, ref)
    else:
        dist = np.linalg.norm(c - ref, axis=1)
    if targets is not None:
        m = np.asarray(getattr(targets, "targets", targets), float)
    else:
        m = export.array("target")
        if np.any(np.isnan(m)):
            m = export.volumes
    return dist / equivalent_radius(m, export.header["dim"])


def _table(x, y, names) -> str:
    buf = _io.StringIO()
    buf.write(",".join(names) + "\n")
    for a, b in zip(x, y):
        buf.write(f"{float(a)!r},{float(b)!r}\n")
    return buf.getvalue()


def summary(values) -> dict:
    v = np.asarray(values, float)
    out = {"count": int(v.size), "mean": float(v.mean())}
    for q in QUANTILES:
        out[f"q{int(round(q * 100))}"] = float(np.quantile(v, q))
    return out


def report_errors(export: DiagramExport, targets=None, reference_centroids=None,
                  out_dir=None, eps: float | None = None, domain: Domain | None = None,
                  figures: bool = True) -> dict:
    """Volume (and optionally centroid) error statistics.

    Writes ``volume_error_ccdf.csv``, ``centroid_error_ccdf.csv`` (when
    reference centroids are given), ``error_summary.json`` and matching PNG
    figures into ``out_dir`` if it is set. Returns the summary dictionary.
    """
    vol_err = volume_percent_errors(export, targets)
    result = {"volume_percent_error": summary(vol_err)}
    if eps is not None:
        result["volume_percent_error"]["ccdf_at_eps"] = ccdf_at(vol_err, 100.0 * eps)
    cen_err = None
    if reference_centroids is not None:
        cen_err = centroid_relative_errors(export, reference_centroids, targets, domain)
        result["centroid_relative_error"] = summary(cen_err)
        result["centroid_relative_error"]["fraction_below_1"] = float(np.mean(cen_err < 1.0))
    if out_dir is not None:
        out = Path(out_dir)
        x, y = ccdf(vol_err)
        atomic_write(out / "volume_error_ccdf.csv", _table(x, y, ["percent_error", "fraction_above"]))
        if cen_err is not None:
            x, y = ccdf(cen_err)
            atomic_write(out / "centroid_error_ccdf.csv",
                         _table(x, y, ["relative_error", "fraction_above"]))
        atomic_write(out / "error_summary.json", dumps(result))
        if figures:
            plot_ccdf(vol_err, out / "volume_error_ccdf.png", "volume error (%)")
            if cen_err is not None:
                plot_ccdf(cen_err, out / "centroid_error_ccdf.png",
                          "centroid distance / equivalent radius")
    return result


def _save(fig, path) -> None:
    buf = _io.BytesIO()
    fig.savefig(buf, format="png", dpi=120, metadata={"Software": None})
    atomic_write(path, buf.getvalue())


def plot_ccdf(values, path, xlabel: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x, y = ccdf(values)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.step(x, y, where="post")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("fraction of cells above")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_diagram_2d(export: DiagramExport, path, labels=None) -> None:
    """Filled cells coloured by size class (or volume), seeds as dots."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.collections import PolyCollection

    if export.header["dim"] != 2:
        raise ValueError("only 2D diagrams can be drawn")
    verts = np.asarray(export.vertices, float)
    rings, colour = [], []
    lab = None if labels is None else np.asarray(labels)
    for c in export.cells:
        if not c.faces:
            continue
        rings.append(verts[[f.vertices[0] for f in c.faces]])
        colour.append(lab[c.id] if lab is not None else c.volume)
    fig, ax = plt.subplots(figsize=(5, 5))
    pc = PolyCollection(rings, array=np.asarray(colour, float), cmap="viridis",
                        edgecolors="k", linewidths=0.5)
    ax.add_collection(pc)
    seeds = np.array([c.seed for c in export.cells])
    ax.plot(seeds[:, 0], seeds[:, 1], "k.", ms=2)
    lo, hi = export.header["lower"], export.header["upper"]
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_trace(trace, path) -> None:
    """Optimisation-step evaluation counts relative to the first step."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ev = trace.evaluations
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(1, len(ev) + 1), ev / ev[0], "o-")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("evaluations / first iteration")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def scaling_study(ns, ratios=(1.0, 5.0), K: int = 5, eps: float = 0.01,
                  rng_seed: int = 0, side: float = 100.0,
                  method: str = "damped-newton") -> list[dict]:
    """Time regularised generation in a periodic cube for each ``(n, r)``:
    half the cells of volume ``x`` and half of volume ``r x``."""
    rows = []
    dom = Domain.from_lengths([side] * 3, periodic=True)
    for n in ns:
        for r in ratios:
            vs = VolumeSpec(kind="bimodal", n1=n - n // 2, n2=n // 2, ratio=r)
            targets = make_targets(dom, vs)
            seeds = sample_positions(dom, n, SpatialSpec(kind="uniform", rng_seed=rng_seed))
            t0 = time.perf_counter()
            _, _, trace = algorithm2(dom, targets, seeds,
                                     LloydConfig(K=K, eps=eps, method=method))
            rows.append({
                "n": int(n), "ratio": float(r),
                "seconds": time.perf_counter() - t0,
                "evaluations": int(trace.evaluations.sum()),
                "max_relative_error": trace.report.max_relative_error,
            })
    return rows


def write_rows_csv(rows: list[dict], path) -> None:
    if not rows:
        atomic_write(path, "")
        return
    keys = list(rows[0])
    lines = [",".join(keys)]
    for r in rows:
        lines.append(",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k]) for k in keys))
    atomic_write(path, "\n".join(lines) + "\n")
