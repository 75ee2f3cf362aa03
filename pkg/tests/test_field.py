"""Gaussian molecular field evaluation against brute-force oracles."""

import numpy as np
import pytest

from erbfit.field import Box, GaussianField, bounding_box, eval_phi, eval_phi_batch
from erbfit.pqr import parse_pqr


def _single_atom(r=1.7, d=0.5, c=1.0, center=(0.0, 0.0, 0.0)):
    return GaussianField(centers=np.array([center], dtype=float),
                         radii=np.array([r]), decay=d, isovalue=c)


def _loop_phi(field, point):
    # independent scalar-loop evaluation of the kernel sum
    total = 0.0
    for x_i, r_i in zip(field.centers, field.radii):
        diff = np.asarray(point, dtype=float) - x_i
        total += np.exp(-field.decay * (diff @ diff - r_i * r_i))
    return total


def test_value_at_atom_center():
    f = _single_atom(r=1.7, d=0.5)
    assert eval_phi(f, np.zeros(3)) == pytest.approx(np.exp(0.5 * 1.7**2), rel=1e-15)


def test_on_sphere_value_is_exactly_isovalue():
    f = _single_atom(r=1.7, d=0.5)
    # at distance r the exponent is -d(r^2 - r^2) = 0 exactly
    assert eval_phi(f, np.array([1.7, 0.0, 0.0])) == 1.0


def test_two_symmetric_atoms_sum():
    sep = 2.4
    f2 = GaussianField(centers=np.array([[-sep / 2, 0, 0], [sep / 2, 0, 0]]),
                       radii=np.array([1.5, 1.5]), decay=0.5)
    f1 = _single_atom(r=1.5, d=0.5, center=(sep / 2, 0, 0))
    at_origin = eval_phi(f2, np.zeros(3))
    assert at_origin == pytest.approx(2.0 * eval_phi(f1, np.zeros(3)), rel=1e-14)


def test_batch_empty():
    f = _single_atom()
    out = eval_phi_batch(f, np.zeros((0, 3)))
    assert out.shape == (0,)


def test_batch_single_point():
    f = _single_atom()
    p = np.array([0.3, -0.2, 1.1])
    assert eval_phi_batch(f, p[None, :])[0] == eval_phi(f, p)


def test_batch_matches_loop_oracle(rng, molecule):
    f = GaussianField.from_molecule(molecule, decay=0.5)
    pts = rng.uniform(-8, 12, (1000, 3))
    batch = eval_phi_batch(f, pts)
    looped = np.array([_loop_phi(f, p) for p in pts])
    assert np.max(np.abs(batch - looped)) < 1e-12 * max(1.0, looped.max())


def test_batch_chunking_consistent(rng):
    # force multiple chunks through the evaluator
    f = _single_atom()
    pts = rng.uniform(-5, 5, (70000, 3))
    vals = eval_phi_batch(f, pts)
    assert np.array_equal(vals[:100], eval_phi_batch(f, pts[:100]))


def test_additivity(rng, molecule):
    f = GaussianField.from_molecule(molecule, decay=0.5)
    pts = rng.uniform(-5, 15, (50, 3))
    total = np.zeros(50)
    for a in molecule.atoms:
        single = GaussianField(centers=a.center[None, :],
                               radii=np.array([a.radius]), decay=0.5)
        total += eval_phi_batch(single, pts)
    assert np.allclose(eval_phi_batch(f, pts), total, rtol=1e-13, atol=0)


def test_positive_and_decaying(rng):
    f = _single_atom()
    # stay within the range where the kernel does not underflow to 0.0
    pts = rng.uniform(-15, 15, (200, 3))
    vals = eval_phi_batch(f, pts)
    assert (vals > 0).all()
    far = eval_phi(f, np.array([1e3, 0.0, 0.0]))
    assert far == 0.0  # underflows; mathematically positive but tiny


def test_level_set_radius_property(rng):
    # phi = c exactly on the sphere of radius sqrt(r^2 - ln(c)/d)
    for _ in range(10):
        r = rng.uniform(1.0, 2.0)
        d = rng.uniform(0.3, 0.8)
        c = rng.uniform(0.5, 2.0)
        f = _single_atom(r=r, d=d, c=c)
        rho = np.sqrt(r * r - np.log(c) / d)
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        assert eval_phi(f, rho * u) == pytest.approx(c, rel=1e-12)


def test_truncation_flag():
    f_exact = _single_atom()
    f_trunc = GaussianField(centers=f_exact.centers, radii=f_exact.radii,
                            decay=0.5, truncate=True)
    near = np.array([[1.0, 0.0, 0.0]])
    assert eval_phi_batch(f_trunc, near)[0] == eval_phi_batch(f_exact, near)[0]
    # beyond the cutoff the truncated kernel is exactly zero
    far = np.array([[10.0, 0.0, 0.0]])
    assert eval_phi_batch(f_trunc, far)[0] == 0.0
    assert eval_phi_batch(f_exact, far)[0] > 0.0


def test_field_validation():
    with pytest.raises(ValueError):
        _single_atom(d=0.0)
    with pytest.raises(ValueError):
        _single_atom(c=-1.0)


def test_bounding_box_single_atom():
    mol = parse_pqr("ATOM 1 C ALA 1 0.0 0.0 0.0 0.0 1.5")
    box = bounding_box(mol, padding=2.0)
    assert np.allclose(box.lo, -3.5)
    assert np.allclose(box.hi, 3.5)


def test_bounding_box_two_atoms_zero_padding():
    mol = parse_pqr(
        "ATOM 1 C ALA 1 0.0 0.0 0.0 0.0 1.0\n"
        "ATOM 2 C ALA 1 10.0 0.0 0.0 0.0 1.0\n")
    box = bounding_box(mol, padding=0.0)
    assert box.lo[0] == -1.0
    assert box.hi[0] == 11.0


def test_bounding_box_contains_inflated_atoms(rng, molecule):
    box = bounding_box(molecule)
    for a in molecule.atoms:
        for _ in range(10):
            u = rng.normal(size=3)
            u /= np.linalg.norm(u)
            assert box.contains(a.center + a.radius * u)


def test_box_validation():
    with pytest.raises(ValueError):
        Box(lo=np.array([0.0, 0.0, 0.0]), hi=np.array([1.0, -1.0, 1.0]))
