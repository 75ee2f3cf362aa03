"""Energy terms, adaptive weights, pruning, line search, and the full loop."""

import numpy as np
import pytest

from erbfit.field import Box, GaussianField, bounding_box
from erbfit.initializer import init_model
from erbfit.model import RbfModel, eval_basis
from erbfit.optimizer import (
    IterationTrace,
    ModelCollapseError,
    NonFiniteObjectiveError,
    OptimizerConfig,
    TraceRecord,
    adaptive_weights,
    energy_terms,
    line_search,
    max_pointwise_error,
    optimize,
    prune,
    write_weight_histogram,
)
from erbfit.sampler import ConstraintSet, make_grid, select_constraints


def _model(c, d, centers, angles=None):
    c = np.asarray(c, dtype=float)
    n = len(c)
    if angles is None:
        angles = np.zeros((n, 3))
    return RbfModel(
        coeff_sqrt=c,
        decay_sqrt=np.asarray(d, dtype=float).reshape(n, 3),
        centers=np.asarray(centers, dtype=float).reshape(n, 3),
        angles=np.asarray(angles, dtype=float).reshape(n, 3),
    )


def _bundled_constraints(molecule, spacing=1.5):
    field = GaussianField.from_molecule(molecule, decay=0.5)
    grid = make_grid(bounding_box(molecule), spacing)
    return select_constraints(field, grid, band=1.0)


def _random_model(rng, n):
    return _model(
        rng.uniform(0.2, 2.0, n),
        rng.uniform(0.3, 1.5, (n, 3)),
        rng.uniform(-3.0, 3.0, (n, 3)),
        rng.uniform(-np.pi, np.pi, (n, 3)),
    )


# ---------------------------------------------------------------- energies


def test_energy_terms_hand_computed():
    # one basis at the origin, one constraint sitting on the center
    m = _model([2.0], [[1.0, 2.0, 3.0]], [[0.0, 0.0, 0.0]])
    cs = ConstraintSet(points=np.zeros((1, 3)), targets=np.array([3.0]))
    es, el1 = energy_terms(m, cs)
    # value at center is 2^2 = 4, residual 1 -> Es = 1
    assert es == pytest.approx(1.0, abs=1e-15)
    # El1 = 2^2 + (1 + 4 + 9) = 18
    assert el1 == pytest.approx(18.0, abs=1e-12)


def test_energy_terms_exact_start(molecule):
    m = init_model(molecule, decay=0.5)
    cs = _bundled_constraints(molecule)
    es, el1 = energy_terms(m, cs)
    assert es < 1e-18
    assert el1 == pytest.approx(
        float(m.coeff_sqrt @ m.coeff_sqrt + (m.decay_sqrt**2).sum()), rel=1e-15)


def test_energy_terms_null_model():
    m = _model([0.0], [[0.0, 0.0, 0.0]], [[0.0, 0.0, 0.0]])
    cs = ConstraintSet(points=np.zeros((2, 3)), targets=np.array([1.0, 2.0]))
    es, el1 = energy_terms(m, cs)
    assert el1 == 0.0
    assert es == pytest.approx(5.0, abs=1e-15)


def test_max_pointwise_error_oracle(rng):
    m = _random_model(rng, 3)
    pts = rng.uniform(-3, 3, (40, 3))
    targets = rng.uniform(0.0, 2.0, 40)
    cs = ConstraintSet(points=pts, targets=targets)
    worst = 0.0
    for p, t in zip(pts, targets):
        val = sum(eval_basis(b, p) for b in m.bases)
        worst = max(worst, abs(val - t))
    assert max_pointwise_error(m, cs) == pytest.approx(worst, rel=1e-12)


def test_max_pointwise_error_exact_start(molecule):
    m = init_model(molecule, decay=0.5)
    cs = _bundled_constraints(molecule)
    assert max_pointwise_error(m, cs) < 1e-10


# ---------------------------------------------------------------- weights


def test_adaptive_weights_proportional():
    assert adaptive_weights(3.0, 1.0, 0.01) == (0.75, 0.25)


def test_adaptive_weights_floor():
    ws, wl = adaptive_weights(0.0, 5.0, 0.01)
    assert ws == 0.01
    assert wl == 1.0


def test_adaptive_weights_degenerate_total():
    assert adaptive_weights(0.0, 0.0, 0.01) == (0.01, 0.0)


def test_adaptive_weights_pure_fit():
    assert adaptive_weights(7.0, 0.0, 0.01) == (1.0, 0.0)


# ---------------------------------------------------------------- pruning


def test_prune_keeps_everything_returns_same_object(rng):
    m = _random_model(rng, 4)
    assert prune(m, 1e-3) is m


def test_prune_drops_small_coefficients(rng):
    m = _random_model(rng, 5)
    c = m.coeff_sqrt.copy()
    c[1] = 1e-6
    c[3] = -1e-8
    m = _model(c, m.decay_sqrt, m.centers, m.angles)
    out = prune(m, 1e-3)
    keep = np.abs(c) >= 1e-3
    assert out.n_bases == int(keep.sum())
    assert np.array_equal(out.coeff_sqrt, c[keep])
    assert np.array_equal(out.decay_sqrt, m.decay_sqrt[keep])
    assert np.array_equal(out.centers, m.centers[keep])
    assert np.array_equal(out.angles, m.angles[keep])


def test_prune_threshold_is_inclusive():
    m = _model([1e-3, 0.5], np.ones((2, 3)), np.zeros((2, 3)))
    assert prune(m, 1e-3).n_bases == 2


def test_prune_collapse():
    m = _model([1e-6, 1e-7], np.ones((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ModelCollapseError):
        prune(m, 1e-3)


# ---------------------------------------------------------------- line search


def test_line_search_on_quadratic(rng):
    # f(x) = 0.5 * L * |x|^2; any accepted step must land in (0, 2/L)
    for L in (0.5, 1.0, 4.0):
        x = rng.uniform(-2, 2, 6)
        objective = lambda v, L=L: 0.5 * L * float(v @ v)
        f0 = objective(x)
        grad = L * x
        for tau_init in (1e-3, 0.1, 1.0, 50.0):
            tau, f_new = line_search(objective, x, f0, grad, tau_init)
            assert 0.0 < tau <= 2.0 / L
            assert f_new < f0
            assert f_new == objective(x - tau * grad)


def test_line_search_never_accepts_zero_progress():
    objective = lambda v: 5.0
    x = np.ones(4)
    tau, f_new = line_search(objective, x, 5.0, np.full(4, 1e-9), tau_init=1e-3)
    assert tau == 0.0
    assert f_new == 5.0


def test_line_search_exhausts_backtracks():
    # seed so large that the budget of halvings cannot reach a stable step
    objective = lambda v: 0.5 * float(v @ v)
    x = np.ones(3)
    tau, f_new = line_search(objective, x, objective(x), x, tau_init=2.0**50,
                             max_backtracks=40)
    assert tau == 0.0
    assert f_new == objective(x)


def test_line_search_rejects_zero_gradient():
    with pytest.raises(ValueError):
        line_search(lambda v: 0.0, np.ones(3), 0.0, np.zeros(3), 1e-3)


# ---------------------------------------------------------------- full loop


def _single_atom_constraints():
    field = GaussianField(centers=np.zeros((1, 3)), radii=np.array([1.5]), decay=0.5)
    box = Box(lo=np.full(3, -3.5), hi=np.full(3, 3.5))
    return select_constraints(field, make_grid(box, 0.7), band=1.0)


def test_optimize_prunes_decoys_at_interval(rng):
    # one basis reproduces the field exactly; four near-zero decoys ride along
    cs = _single_atom_constraints()
    c = np.array([np.exp(0.25 * 1.5**2), 1e-4, 1e-4, 1e-4, 1e-4])
    d = np.vstack([np.full(3, np.sqrt(0.5))]
                  + [np.sqrt(0.5) * (1 + 0.2 * rng.standard_normal(3)) for _ in range(4)])
    centers = np.vstack([np.zeros(3)] + [rng.uniform(-1, 1, 3) for _ in range(4)])
    m0 = _model(c, np.abs(d), centers)
    cfg = OptimizerConfig(max_iter=60, sparse_iter=60, prune_interval=20, prune_tol=1e-3)
    final, trace = optimize(m0, cs, cfg)
    nbasis = [r.nbasis for r in trace]
    assert nbasis[18] == 5          # iteration 19, before the pruning pass
    assert nbasis[19] == 1          # iteration 20, decoys removed
    assert final.n_bases == 1
    assert len(trace) == 60


def test_optimize_exact_start_stalls(molecule):
    # pure fit phase from a perfect model: zero gradient, nothing to do
    m0 = init_model(molecule, decay=0.5)
    cs = _bundled_constraints(molecule)
    cfg = OptimizerConfig(max_iter=5, sparse_iter=0)
    final, trace = optimize(m0, cs, cfg)
    assert len(trace) == 5
    assert trace.n_stalls == 5
    assert all(r.tau == 0.0 and r.ws == 1.0 and r.wl == 0.0 for r in trace)
    assert final == m0


def test_optimize_trace_invariants(molecule):
    m0 = init_model(molecule, decay=0.5)
    cs = _bundled_constraints(molecule)
    cfg = OptimizerConfig(max_iter=120, sparse_iter=90, prune_interval=20)
    final, trace = optimize(m0, cs, cfg)
    assert len(trace) == 120
    nbasis = np.array([r.nbasis for r in trace])
    assert np.all(np.diff(nbasis) <= 0)
    assert final.n_bases == nbasis[-1]
    for r in trace:
        assert r.iteration >= 1
        assert np.isfinite([r.f, r.es, r.el1, r.tau]).all()
        assert r.accepted_f <= r.f  # a step never raises the in-force objective
        if r.iteration > cfg.sparse_iter:
            assert (r.ws, r.wl) == (1.0, 0.0)
    post = {r.nbasis for r in trace if r.iteration > cfg.sparse_iter}
    assert len(post) == 1


def test_optimize_pure_fit_monotone(molecule):
    m0 = init_model(molecule, decay=0.5)
    m0 = _model(1.1 * m0.coeff_sqrt, m0.decay_sqrt, m0.centers, m0.angles)
    cs = _bundled_constraints(molecule)
    final, trace = optimize(m0, cs, OptimizerConfig(max_iter=50, sparse_iter=0))
    es = np.array([r.es for r in trace])
    assert np.all(np.diff(es) <= 0)
    assert es[-1] < es[0]
    assert max_pointwise_error(final, cs) < max_pointwise_error(m0, cs)


def test_optimize_collapse_carries_partial_trace(molecule):
    m0 = init_model(molecule, decay=0.5)
    cs = _bundled_constraints(molecule)
    cfg = OptimizerConfig(max_iter=40, sparse_iter=40, prune_interval=20,
                          prune_tol=100.0)
    with pytest.raises(ModelCollapseError) as err:
        optimize(m0, cs, cfg)
    assert err.value.trace is not None
    assert len(err.value.trace) == 19  # failed during the iteration-20 pruning


def test_optimize_rejects_empty_model():
    cs = ConstraintSet(points=np.zeros((1, 3)), targets=np.ones(1))
    empty = RbfModel(coeff_sqrt=np.zeros(0), decay_sqrt=np.zeros((0, 3)),
                     centers=np.zeros((0, 3)), angles=np.zeros((0, 3)))
    with pytest.raises(ModelCollapseError):
        optimize(empty, cs, OptimizerConfig(max_iter=5, sparse_iter=0))


def test_optimize_nonfinite_objective():
    m0 = _model([1e200], np.full((1, 3), np.sqrt(0.5)), np.zeros((1, 3)))
    cs = ConstraintSet(points=np.zeros((1, 3)), targets=np.ones(1))
    with pytest.raises(NonFiniteObjectiveError):
        optimize(m0, cs, OptimizerConfig(max_iter=5, sparse_iter=0))


# ---------------------------------------------------------------- config, io


def test_config_defaults():
    cfg = OptimizerConfig()
    assert cfg.max_iter == 8000
    assert cfg.sparse_iter == 6000
    assert cfg.prune_tol == 1e-3
    assert cfg.prune_interval == 20
    assert cfg.epsilon_floor == 0.01
    assert cfg.max_error_cap == 0.5
    assert cfg.deterministic is True


@pytest.mark.parametrize("kwargs", [
    {"max_iter": -1},
    {"sparse_iter": 10, "max_iter": 5},
    {"prune_tol": 0.0},
    {"prune_interval": 0},
    {"armijo_c1": 1.0},
    {"shrink": 0.0},
    {"first_tau": 0.0},
    {"max_backtracks": -1},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        OptimizerConfig(**kwargs)


def test_trace_csv_roundtrip(tmp_path):
    trace = IterationTrace()
    trace.append(TraceRecord(1, 2.5, 2.0, 0.5, 0.8, 0.2, 7, 1e-3, 2.25))
    trace.append(TraceRecord(2, 2.25, 1.9, 0.35, 1.0, 0.0, 6, 0.0, 2.25))
    path = tmp_path / "trace.csv"
    trace.to_csv(path, header_lines=["run one", "spacing=1.0"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# run one"
    assert lines[1] == "# spacing=1.0"
    assert lines[2] == "iter,f,Es,El1,ws,wl,nbasis,tau"
    assert len(lines) == 5
    row = lines[3].split(",")
    assert int(row[0]) == 1
    assert float(row[1]) == 2.5
    assert float(row[4]) == 0.8
    assert int(row[6]) == 7
    assert float(row[7]) == 1e-3


def test_weight_histogram_file(tmp_path, rng):
    m = _random_model(rng, 4)
    path = tmp_path / "weights.txt"
    write_weight_histogram(m, path, header_lines=["weights"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# weights"
    values = [float(s) for s in lines[1:]]
    assert values == [float(w) for w in m.weights]
