"""Brute-force voxel reference: label every voxel centre by its
power-nearest seed. Slow and approximate, but independent of the clipping
code, which is what makes it useful in tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagram import Domain
from .errors import EmptyCell


@dataclass
class VoxelGrid:
    resolution: tuple
    h: np.ndarray
    labels: np.ndarray
    counts: np.ndarray
    sums: np.ndarray

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.h))


def voxel_centres(domain: Domain, resolution) -> np.ndarray:
    res = _resolution(domain, resolution)
    axes = [domain.lower[k] + (np.arange(r) + 0.5) * domain.lengths[k] / r
            for k, r in enumerate(res)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _resolution(domain: Domain, resolution) -> tuple:
    res = np.broadcast_to(np.asarray(resolution, int), (domain.dim,))
    if np.any(res < 8):
        raise ValueError("resolution must be at least 8 per axis")
    return tuple(int(r) for r in res)


def voxel_assign(domain: Domain, positions, weights=None, resolution=256,
                 chunk: int = 1 << 16) -> VoxelGrid:
    """Label voxel centres by ``argmin_i |x - x_i|^2 - w_i``; ties go to the
    lowest index. Periodic domains use the nearest-image distance."""
    res = _resolution(domain, resolution)
    pos = np.asarray(positions, float)
    n, d = pos.shape
    w = np.zeros(n) if weights is None else np.asarray(weights, float)
    h = domain.lengths / np.array(res)
    pts = voxel_centres(domain, res)
    labels = np.empty(len(pts), dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    sums = np.zeros((n, d))
    for start in range(0, len(pts), chunk):
        p = pts[start : start + chunk]
        delta = p[:, None, :] - pos[None, :, :]
        if domain.periodic:
            delta -= domain.lengths * np.round(delta / domain.lengths)
        power = np.einsum("ijk,ijk->ij", delta, delta) - w[None, :]
        lab = np.argmin(power, axis=1)
        labels[start : start + chunk] = lab
        counts += np.bincount(lab, minlength=n)
        # unwrapped coordinates, so periodic centroids stay next to their seed
        own = pos[lab] + delta[np.arange(len(p)), lab]
        for k in range(d):
            sums[:, k] += np.bincount(lab, weights=own[:, k], minlength=n)
    return VoxelGrid(res, h, labels.reshape(res), counts, sums)


def voxel_volumes(grid: VoxelGrid) -> np.ndarray:
    return grid.counts * grid.voxel_volume


def voxel_centroids(grid: VoxelGrid) -> np.ndarray:
    if np.any(grid.counts == 0):
        raise EmptyCell(f"no voxels for seeds {np.flatnonzero(grid.counts == 0).tolist()}")
    return grid.sums / grid.counts[:, None]


def dump_labels(grid: VoxelGrid, path) -> None:
    """Save the label raster as a ``.npy`` array for inspection."""
    np.save(path, grid.labels)
