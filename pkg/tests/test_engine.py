import dataclasses

import numpy as np
import pytest

from gne_mesh.analysis import project_to_constraint, stationarity_duals, variational_gne
from gne_mesh.compressor import IdentityCompressor, QuantizerRangeError, StochasticQuantizer
from gne_mesh.engine import (
    CONSERVATION,
    LITERAL,
    EngineError,
    ScheduleError,
    Setup,
    StepSchedule,
    run_algorithm1,
    run_baseline,
    run_seeds,
    step_consensus,
    step_dual,
    step_primal,
    validate_schedule,
)
from gne_mesh.game import ENERGY_REFERENCE_GNE, CallableCost, GameSpec, ZeroCost, zero_constraint
from gne_mesh.network import build_complete, build_ring, mixing_matrix
from gne_mesh.trigger import TriggerSchedule
from helpers import lattice_setup


def test_step_primal_examples(game):
    x = np.full((5, 1), 40.0)
    lam = np.zeros(5)
    out = step_primal(game, x, lam, x.copy(), 1.0)
    assert out[0, 0] == 50.0  # clamp of 40 + 19.55
    assert np.array_equal(step_primal(game, x, lam, x.copy(), 0.0), x)
    zero = GameSpec([ZeroCost()] * 2, zero_constraint(1), np.zeros((2, 1)), np.ones((2, 1)))
    xz = np.array([[0.2], [0.7]])
    assert np.array_equal(step_primal(zero, xz, np.zeros(2), xz, 0.5), xz)


def test_step_dual_examples(game):
    cap = np.full(5, 8.62)
    lam = np.array([3.0, 0.0, 8.62, 1.0, 1.0])
    y = np.array([[40.0], [30.0], [50.0], [40.0], [40.0]])
    out = step_dual(game, lam, y, 0.1, cap)
    assert out[0] == 3.0  # g = 0
    assert out[1] == 0.0  # max(0, 0 - 5)
    assert out[2] == 8.62  # upper clamp


def test_step_consensus_examples():
    m = mixing_matrix(build_complete(2), 1.0)
    y = np.array([[40.0], [45.0]])
    v = np.array([[40.0], [45.0]])
    sent = np.array([[40.0], [45.0]])
    x = np.zeros((2, 1))
    out = step_consensus(m, y, v, sent, 0.1, x, x)
    assert out[0, 0] == pytest.approx(40.5, abs=1e-12)
    # eta = 0: pure innovation
    x_new = np.array([[1.0], [-2.0]])
    out = step_consensus(m, y, v, sent, 0.0, x_new, x)
    assert np.array_equal(out - y, x_new - x)
    # consensus fixed point
    same = np.full((2, 1), 40.0)
    assert np.array_equal(step_consensus(m, same, same, same, 0.3, x, x), same)


def test_conservation_mode_uses_sent_value():
    m = mixing_matrix(build_complete(2), 1.0)
    y = np.array([[40.0], [45.0]])
    v = np.array([[41.0], [45.0]])
    sent = np.array([[40.0], [45.0]])
    x = np.zeros((2, 1))
    lit = step_consensus(m, y, v, sent, 1.0, x, x, LITERAL)
    con = step_consensus(m, y, v, sent, 1.0, x, x, CONSERVATION)
    assert lit.mean() != y.mean()
    assert con.mean() == y.mean()


def test_validate_schedule():
    rep = validate_schedule(StepSchedule(0.7, 0.9))
    assert rep.ok
    assert any("2t - s = 1.1" in line for line in rep.lines())
    for (s, t), name in {(0.6, 0.6): "2t - s > 1", (0.5, 0.9): "s > 1/2", (0.8, 1.1): "t <= 1"}.items():
        with pytest.raises(ScheduleError) as err:
            validate_schedule(StepSchedule(s, t))
        assert err.value.constraint == name
    assert not validate_schedule(StepSchedule(0.6, 0.6), force=True).ok


def test_horizon_zero(setup_factory):
    s = setup_factory(horizon=0)
    tr = run_algorithm1(s)
    assert tr.x.shape == (1, 5, 1)
    assert tr.bits[-1] == 5 * 1 * (4 + 1)
    assert np.array_equal(tr.y[0], tr.x[0])


def test_seed_streams_are_distinct():
    init, players = run_seeds(7, 3, 4)
    draws = [np.random.default_rng(p).random() for p in [init, *players]]
    assert len(set(draws)) == 5
    again = np.random.default_rng(run_seeds(7, 3, 4)[1][2]).random()
    assert again == draws[3]


def test_run_is_deterministic(setup_factory):
    s = setup_factory(horizon=300)
    a, b = run_algorithm1(s, 4), run_algorithm1(s, 4)
    assert a.same_as(b)
    c = run_algorithm1(s, 5)
    assert not np.array_equal(a.x, c.x)


def test_feasibility_and_trigger_contract(setup_factory):
    s = setup_factory(horizon=600)
    for run in range(3):
        tr = run_algorithm1(s, run)
        assert np.all(tr.x >= 30.0) and np.all(tr.x <= 50.0)
        assert np.all(tr.lam >= 0.0) and np.all(tr.lam <= s.lambda_cap)
        assert tr.trigger_violations() == 0
        assert tr.fired[0].all()


def test_conservation_and_leak_bound(setup_factory):
    con = run_algorithm1(setup_factory(horizon=1000, mode=CONSERVATION), 1)
    assert con.conservation_gap.max() < 1e-9
    lit = run_algorithm1(setup_factory(horizon=1000, mode=LITERAL), 1)
    assert np.all(lit.conservation_gap <= lit.leak_bound + 1e-9)


def test_bits_recount(setup_factory):
    tr = run_algorithm1(setup_factory(horizon=400), 2)
    assert tr.bits[-1] == int(tr.fired[:400].sum()) * 5


def test_lattice_equivalence_with_exact_consensus():
    q = lattice_setup(StochasticQuantizer(2.0**-40, 50))
    exact = lattice_setup(IdentityCompressor())
    a, b = run_algorithm1(q), run_algorithm1(exact)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    # independent reference: y <- y + eta A y + dx with exact messages
    A = mixing_matrix(build_ring(5), 1.0).a
    c = np.array([1.0, 3.0, -2.0, 5.0, 0.0])[:, None]
    x = q.x0.copy()
    y = x.copy()
    for k in range(15):
        x_new = np.clip(x - 0.125 * 2 * (x - c), -8, 8)
        y = y + 0.25 * (A @ y) + x_new - x
        x = x_new
        assert np.array_equal(a.y[k + 1], y)
    assert a.fired[:15].all()


def test_range_error_context(setup_factory):
    s = setup_factory(horizon=5)
    s.compressor = StochasticQuantizer(1.0, 3)
    with pytest.raises(QuantizerRangeError, match="round 0, player"):
        run_algorithm1(s)


def test_non_finite_gradient_aborts():
    bad = CallableCost(lambda x, xb: 0.0, d_own=lambda x, xb: np.array([np.nan]), d_agg=lambda x, xb: np.zeros(1))
    game = GameSpec([ZeroCost(), bad, ZeroCost()], zero_constraint(1), np.zeros((3, 1)), np.ones((3, 1)))
    s = Setup(game, mixing_matrix(build_ring(3)), StepSchedule(), TriggerSchedule.uniform(3, 1.0, 0.5),
              StochasticQuantizer(0.5, 4), np.zeros(3), 3)
    with pytest.raises(EngineError, match="player 1 in round 0"):
        run_algorithm1(s)


def test_baseline_fixed_point(setup_factory, game):
    # exact KKT pair near the published point: restore sum x = 200, solve the duals
    x = project_to_constraint(game, np.array(ENERGY_REFERENCE_GNE)[:, None])
    lam = stationarity_duals(game, x)
    s = setup_factory(horizon=100)
    s = dataclasses.replace(s, x0=x, lam0=lam)
    tr = run_baseline(s)
    assert np.max(np.abs(tr.x - x)) < 1e-9


def test_baseline_zero_step_is_constant(setup_factory):
    s = setup_factory(horizon=20)
    s = dataclasses.replace(s, schedule=StepSchedule(gamma_scale=0.0))
    tr = run_baseline(s, 3)
    assert np.all(tr.x == tr.x[0])


def test_baseline_reaches_variational_gne(setup_factory, game):
    s = setup_factory(horizon=20000)
    tr = run_baseline(s, 0)
    ref = variational_gne(game)
    assert np.max(np.abs(tr.x[-1] - ref.x_star)) < 0.05
    np.testing.assert_allclose(tr.lam[-1], ref.lambda_star, atol=0.05)


def test_baseline_bits(setup_factory):
    tr = run_baseline(setup_factory(horizon=10))
    assert tr.bits[-1] == 10 * 5 * 64
