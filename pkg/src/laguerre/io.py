"""File formats: seed/target CSV, the JSON diagram export and a legacy VTK
writer. Every write goes through :func:`atomic_write`."""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import __version__
from .diagram import LaguerreDiagram
from .errors import ConfigError, IdMismatch
from .geometry import face_areas, sphericity_from

EXPORT_SCHEMA = "laguerre-diagram/1"


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        kwargs = {} if mode == "wb" else {"encoding": "utf-8", "newline": ""}
        with os.fdopen(fd, mode, **kwargs) as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    """Deterministic JSON: insertion key order, shortest round-trip floats.
    Non-finite floats become ``null``."""
    return json.dumps(_finite(obj), indent=1, allow_nan=False) + "\n"


def _finite(obj):
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


# -- CSV -------------------------------------------------------------------

@dataclass
class PointTable:
    ids: np.ndarray
    positions: np.ndarray
    weights: np.ndarray | None = None
    targets: np.ndarray | None = None


def write_points_csv(path, positions, weights=None, targets=None, ids=None) -> None:
    """CSV with header ``id,x,y[,z][,w][,m]``."""
    pos = np.asarray(positions, float)
    n, d = pos.shape
    ids = np.arange(n) if ids is None else np.asarray(ids, int)
    header = ["id", "x", "y", "z"][: d + 1]
    cols = [pos[:, k] for k in range(d)]
    if weights is not None:
        header.append("w")
        cols.append(np.asarray(weights, float))
    if targets is not None:
        header.append("m")
        cols.append(np.asarray(targets, float))
    buf = _io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in range(n):
        wr.writerow([int(ids[r])] + [repr(float(c[r])) for c in cols])
    atomic_write(path, buf.getvalue())


def read_points_csv(path) -> PointTable:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    if header[:3] != ["id", "x", "y"]:
        raise ConfigError(f"{path}: header must start with id,x,y")
    rest = header[3:]
    d = 3 if rest[:1] == ["z"] else 2
    rest = rest[d - 2 :]
    if rest not in ([], ["w"], ["m"], ["w", "m"]):
        raise ConfigError(f"{path}: unexpected columns {rest}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data.size == 0:
        raise ConfigError(f"{path}: no rows")
    if data.shape[1] != len(header):
        raise ConfigError(f"{path}: ragged rows")
    ids = data[:, 0].astype(int)
    if not np.array_equal(ids, np.arange(len(ids))):
        raise IdMismatch(f"{path}: ids must be 0..n-1 in order")
    col = {h: data[:, k] for k, h in enumerate(header)}
    return PointTable(ids, data[:, 1 : 1 + d], col.get("w"), col.get("m"))


# -- JSON export -----------------------------------------------------------

@dataclass
class FaceRecord:
    vertices: list
    neighbor: int
    area: float

    def to_dict(self) -> dict:
        return {"vertices": self.vertices, "neighbor": self.neighbor, "area": self.area}


@dataclass
class CellRecord:
    id: int
    seed: list
    weight: float
    volume: float
    target: float | None
    relative_error: float | None
    centroid: list | None
    sphericity: float | None
    faces: list = field(default_factory=list)
    attribute: object = None

    def to_dict(self) -> dict:
        return {
            "id": self.id, "seed": self.seed, "weight": self.weight,
            "volume": self.volume, "target": self.target,
            "relative_error": self.relative_error, "centroid": self.centroid,
            "sphericity": self.sphericity,
            "faces": [f.to_dict() for f in self.faces],
            "attribute": self.attribute,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CellRecord:
        faces = [FaceRecord(f["vertices"], f["neighbor"], f["area"]) for f in d["faces"]]
        return cls(d["id"], d["seed"], d["weight"], d["volume"], d["target"],
                   d["relative_error"], d["centroid"], d["sphericity"], faces,
                   d.get("attribute"))


@dataclass
class DiagramExport:
    """Serialisable snapshot of a diagram. Cells are unwrapped in a periodic
    box, so vertices may lie outside it; faces with a negative ``neighbor``
    lie on a box wall."""

    header: dict
    vertices: list
    cells: list

    @classmethod
    def from_diagram(cls, diagram: LaguerreDiagram, targets=None,
                     attributes=None) -> DiagramExport:
        n, d = diagram.n, diagram.dim
        t = None if targets is None else np.asarray(getattr(targets, "targets", targets), float)
        if t is not None and len(t) != n:
            raise IdMismatch("one target per cell required")
        if attributes is not None and len(attributes) != n:
            raise IdMismatch("one attribute per cell required")
        polys = diagram.cells()
        chunks = [p.vertices for p in polys]
        allv = np.concatenate(chunks) if chunks else np.zeros((0, d))
        rep = _merge_vertices(allv, 10.0 * diagram.domain.tolerance)
        # renumber representatives in order of first appearance
        uniq, first = np.unique(rep, return_index=True)
        order = np.argsort(first)
        new_id = np.empty(len(allv), int)
        remap = np.empty(rep.max() + 1 if len(rep) else 0, int)
        remap[uniq[order]] = np.arange(len(uniq))
        new_id[:] = remap[rep]
        verts = [[float(c) for c in allv[first[k]]] for k in order]
        sph = sphericity_from(diagram.volumes, diagram.surfaces, d)
        cells = []
        offset = 0
        for i, poly in enumerate(polys):
            ids = new_id[offset : offset + len(poly.vertices)]
            offset += len(poly.vertices)
            areas = face_areas(poly) if not poly.is_empty else []
            faces = [FaceRecord([int(ids[v]) for v in f], int(tag), float(a))
                     for f, tag, a in zip(poly.faces, poly.face_tags, areas)]
            live = diagram.volumes[i] > 0
            cells.append(CellRecord(
                id=i,
                seed=[float(c) for c in diagram.positions[i]],
                weight=float(diagram.weights[i]),
                volume=float(diagram.volumes[i]),
                target=None if t is None else float(t[i]),
                relative_error=None if t is None else float(
                    abs(diagram.volumes[i] - t[i]) / t[i]),
                centroid=[float(c) for c in diagram.centroids[i]] if live else None,
                sphericity=float(sph[i]) if live else None,
                faces=faces,
                attribute=None if attributes is None else _plain(attributes[i]),
            ))
        dom = diagram.domain
        header = {
            "schema": EXPORT_SCHEMA,
            "version": __version__,
            "n": n,
            "dim": d,
            "periodic": bool(dom.periodic),
            "volume": float(dom.volume),
            "lower": [float(c) for c in dom.lower],
            "upper": [float(c) for c in dom.upper],
        }
        return cls(header, verts, cells)

    def to_dict(self) -> dict:
        return {"header": self.header, "vertices": self.vertices,
                "cells": [c.to_dict() for c in self.cells]}

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> DiagramExport:
        d = json.loads(text)
        if d.get("header", {}).get("schema") != EXPORT_SCHEMA:
            raise ConfigError(f"not a {EXPORT_SCHEMA} document")
        return cls(d["header"], d["vertices"], [CellRecord.from_dict(c) for c in d["cells"]])

    def write(self, path) -> None:
        atomic_write(path, self.to_json())

    @classmethod
    def read(cls, path) -> DiagramExport:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    # convenience views
    def array(self, name: str) -> np.ndarray:
        return np.array([getattr(c, name) for c in self.cells], float)

    @property
    def volumes(self) -> np.ndarray:
        return self.array("volume")

    @property
    def centroids(self) -> np.ndarray:
        d = self.header["dim"]
        return np.array([c.centroid if c.centroid is not None else [np.nan] * d
                         for c in self.cells], float)


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def _merge_vertices(pts, tol) -> np.ndarray:
    """Component label per point, joining points closer than ``tol``."""
    if len(pts) == 0:
        return np.zeros(0, int)
    pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                       shape=(len(pts), len(pts))) if len(pairs) else \
        coo_matrix((len(pts), len(pts)))
    _, labels = connected_components(graph, directed=False)
    return labels


# -- VTK -------------------------------------------------------------------

def write_vtk(export: DiagramExport, path) -> None:
    """Legacy ASCII polydata: one polygon per 3D face (or per 2D cell), with
    the cell id and volume attached to each polygon."""
    verts = np.asarray(export.vertices, float).reshape(-1, export.header["dim"])
    if verts.shape[1] == 2:
        verts = np.column_stack([verts, np.zeros(len(verts))])
    polys, cid, vol = [], [], []
    for c in export.cells:
        if not c.faces:
            continue
        if export.header["dim"] == 2:
            polys.append([f.vertices[0] for f in c.faces])
            cid.append(c.id)
            vol.append(c.volume)
        else:
            for f in c.faces:
                polys.append(f.vertices)
                cid.append(c.id)
                vol.append(c.volume)
    out = ["# vtk DataFile Version 3.0", "laguerre diagram", "ASCII", "DATASET POLYDATA",
           f"POINTS {len(verts)} double"]
    out += [" ".join(repr(float(x)) for x in v) for v in verts]
    size = sum(len(p) + 1 for p in polys)
    out.append(f"POLYGONS {len(polys)} {size}")
    out += [" ".join(str(k) for k in [len(p)] + list(p)) for p in polys]
    out += [f"CELL_DATA {len(polys)}", "SCALARS cell_id int 1", "LOOKUP_TABLE default"]
    out += [str(k) for k in cid]
    out += ["SCALARS volume double 1", "LOOKUP_TABLE default"]
    out += [repr(float(v)) for v in vol]
    atomic_write(path, "\n".join(out) + "\n")
