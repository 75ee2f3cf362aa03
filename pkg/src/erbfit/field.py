"""The original Gaussian molecular surface implicit function.

The target field is phi(x) = sum_i exp(-d * (|x - x_i|^2 - r_i^2)) over all
atoms, with positive decay rate d.  The molecular surface is the level set
{phi(x) = c} for a positive isovalue c; with c = 1 the level set of an
isolated atom is exactly its radius-r sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from erbfit.pqr import Molecule

# Points per chunk in batch evaluation; bounds the (chunk x N_atoms) temporary.
_CHUNK = 65536

# exp(e) with e < -30 is ~9e-14; kernels beyond that are negligible.
_CUTOFF_EXPONENT = -30.0


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi] in Angstrom."""

    lo: np.ndarray  # (3,)
    hi: np.ndarray  # (3,)

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64))
        if not np.all(self.hi >= self.lo):
            raise ValueError(f"box has hi < lo: lo={self.lo}, hi={self.hi}")

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Elementwise closed-box membership for an (M, 3) point array."""
        p = np.atleast_2d(points)
        return np.all((p >= self.lo) & (p <= self.hi), axis=1)


@dataclass(frozen=True)
class GaussianField:
    """Sum of per-atom Gaussian kernels with decay d and isovalue c.

    Immutable; evaluation is pure and safe for concurrent callers.  With
    truncate=True, kernel terms whose exponent falls below -30 are skipped
    (a documented approximation for large molecules; off by default).
    """

    centers: np.ndarray  # (N, 3)
    radii: np.ndarray    # (N,)
    decay: float
    isovalue: float = 1.0
    truncate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "centers", np.asarray(self.centers, dtype=np.float64))
        object.__setattr__(self, "radii", np.asarray(self.radii, dtype=np.float64))
        if self.decay <= 0:
            raise ValueError(f"decay must be positive, got {self.decay}")
        if self.isovalue <= 0:
            raise ValueError(f"isovalue must be positive, got {self.isovalue}")

    @classmethod
    def from_molecule(
        cls, molecule: Molecule, decay: float, isovalue: float = 1.0,
        truncate: bool = False,
    ) -> "GaussianField":
        return cls(molecule.centers, molecule.radii, decay, isovalue, truncate)

    @property
    def n_atoms(self) -> int:
        return self.centers.shape[0]

    def value(self, point) -> float:
        """phi at a single point."""
        return float(self.values(np.asarray(point, dtype=np.float64)[None, :])[0])

    def values(self, points: np.ndarray) -> np.ndarray:
        """phi at an (M, 3) array of points, order preserved.

        Evaluates the full kernel sum in chunks so the pairwise distance
        temporary stays bounded.
        """
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"expected (M, 3) points, got shape {pts.shape}")
        out = np.empty(pts.shape[0], dtype=np.float64)
        r2 = self.radii**2
        for start in range(0, pts.shape[0], _CHUNK):
            chunk = pts[start:start + _CHUNK]
            diff = chunk[:, None, :] - self.centers[None, :, :]
            sq = np.einsum("mij,mij->mi", diff, diff)
            expo = -self.decay * (sq - r2[None, :])
            if self.truncate:
                terms = np.where(expo < _CUTOFF_EXPONENT, 0.0, np.exp(expo))
            else:
                terms = np.exp(expo)
            out[start:start + _CHUNK] = terms.sum(axis=1)
        return out


def eval_phi(field: GaussianField, point) -> float:
    """phi at one point (see GaussianField.value)."""
    return field.value(point)


def eval_phi_batch(field: GaussianField, points: np.ndarray) -> np.ndarray:
    """phi at many points, elementwise equal to eval_phi."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return np.zeros(0, dtype=np.float64)
    return field.values(pts)


def bounding_box(molecule: Molecule, padding: float | None = None) -> Box:
    """Axis-aligned box holding every atom sphere plus padding on all sides.

    Default padding is max atom radius + 3 Angstrom so the near-surface band
    sampled for fitting lies well inside the grid.
    """
    radii = molecule.radii
    if padding is None:
        padding = float(radii.max()) + 3.0
    if padding < 0:
        raise ValueError(f"padding must be nonnegative, got {padding}")
    centers = molecule.centers
    lo = (centers - radii[:, None]).min(axis=0) - padding
    hi = (centers + radii[:, None]).max(axis=0) + padding
    return Box(lo=lo, hi=hi)
