"""Uniform grid sampling and selection of near-surface constraint points.

The fitting problem is posed at a finite set of points y_k chosen from a
uniform grid over the molecule's bounding box: a grid point is kept when the
field value there is within `band` of the isovalue, i.e. |phi(p) - c| <= band.
Selection order is lexicographic in the (i, j, k) grid indices so that a given
molecule and grid always produce the same constraint set.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .field import Box, GaussianField, eval_phi_batch


class SamplingError(ValueError):
    """Grid construction or constraint selection failed."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid: counts[p] intervals per axis, hence counts[p]+1 points.

    Point (i, j, k) has coordinates (a_p + i * (b_p - a_p) / counts[p], ...)
    with indices running 0..counts[p] inclusive, so both box corners are
    grid points.
    """

    box: Box
    counts: tuple[int, int, int]

    def __post_init__(self):
        if any(int(n) < 2 for n in self.counts):
            raise SamplingError(f"grid counts must be >= 2 per axis, got {self.counts}")
        object.__setattr__(self, "counts", tuple(int(n) for n in self.counts))

    @property
    def n_points(self) -> int:
        return (self.counts[0] + 1) * (self.counts[1] + 1) * (self.counts[2] + 1)

    def axis_coords(self, axis: int) -> np.ndarray:
        a = self.box.lo[axis]
        b = self.box.hi[axis]
        n = self.counts[axis]
        coords = a + np.arange(n + 1, dtype=np.float64) * ((b - a) / n)
        # a + n*step can overshoot b by a few ulp; the grid must end exactly
        # on the box corner so that every point lies in the closed box.
        coords[-1] = b
        return coords

    def points(self) -> np.ndarray:
        """All grid points as an (n_points, 3) array in lexicographic (i,j,k) order."""
        xs, ys, zs = (self.axis_coords(p) for p in range(3))
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


@dataclass(frozen=True)
class ConstraintSet:
    """Constrained points y_k with the target field values phi(y_k)."""

    points: np.ndarray   # (M, 3)
    targets: np.ndarray  # (M,)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        tgt = np.asarray(self.targets, dtype=np.float64).ravel()
        if pts.shape[0] != tgt.shape[0]:
            raise ValueError("points and targets disagree in length")
        if pts.shape[0] == 0:
            raise ValueError("constraint set must contain at least one point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "targets", tgt)

    def __len__(self) -> int:
        return self.points.shape[0]


def make_grid(box: Box, spacing: float) -> GridSpec:
    """Grid over `box` with interval counts ceil(extent/spacing), clamped to >= 2.

    The box must have positive extent on every axis.
    """
    if spacing <= 0:
        raise SamplingError(f"grid spacing must be positive, got {spacing}")
    extent = box.extent
    if np.any(extent <= 0):
        raise SamplingError(f"degenerate box: extent {extent} has a non-positive axis")
    counts = np.maximum(np.ceil(extent / spacing).astype(int), 2)
    return GridSpec(box=box, counts=(int(counts[0]), int(counts[1]), int(counts[2])))


def select_constraints(field: GaussianField, grid: GridSpec, band: float = 1.0) -> ConstraintSet:
    """Keep exactly the grid points with |phi(p) - isovalue| <= band, grid order.

    Raises SamplingError when nothing is selected (use a finer grid or a
    larger band).
    """
    if band <= 0:
        raise SamplingError(f"band must be positive, got {band}")
    points = grid.points()
    phi = eval_phi_batch(field, points)
    mask = np.abs(phi - field.isovalue) <= band
    if not mask.any():
        raise SamplingError(
            "no grid point lies within the selection band; "
            "use a finer grid spacing or a larger band"
        )
    return ConstraintSet(points=points[mask], targets=phi[mask])


def write_constraints_csv(constraints: ConstraintSet, path, header_lines=()) -> None:
    """Debug dump: one 'x,y,z,phi' line per constrained point."""
    lines = [f"# {h}" for h in header_lines]
    lines.append("x,y,z,phi")
    for p, t in zip(constraints.points, constraints.targets):
        lines.append(f"{float(p[0])!r},{float(p[1])!r},{float(p[2])!r},{float(t)!r}")
    Path(path).write_text("\n".join(lines) + "\n")
