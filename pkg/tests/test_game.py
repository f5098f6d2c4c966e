import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from gne_mesh.game import (
    AffineConstraint,
    CallableConstraint,
    CallableCost,
    EnergyGameParams,
    GameError,
    GameSpec,
    ZeroCost,
    auto_lambda_prime,
    constraint_gradient,
    constraint_value,
    energy_game,
    estimate_constants,
    game_from_callables,
    local_gradient,
    multiplier_bound,
    project_box,
    zero_constraint,
)

NOMINAL = (56.0, 60.0, 42.0, 57.0, 54.0)


def full_profile_cost(i, x, s=NOMINAL, p0=0.05, p1=9.0):
    return (x[i] - s[i]) ** 2 + p0 * (np.sum(x) + p1) * x[i]


def fd_own(i, x, h=1e-5):
    e = np.zeros_like(x)
    e[i] = h
    return (full_profile_cost(i, x + e) - full_profile_cost(i, x - e)) / (2 * h)


def test_energy_gradient_example(game):
    g = local_gradient(game, 0, [40.0], [40.0])
    assert g[0] == pytest.approx(-19.55, abs=1e-12)
    assert fd_own(0, np.full(5, 40.0)) == pytest.approx(-19.55, rel=1e-8)


def test_gradient_matches_finite_differences(game, rng):
    for _ in range(100):
        x = rng.uniform(30.5, 49.5, 5)
        i = int(rng.integers(5))
        got = local_gradient(game, i, [x[i]], [x.mean()])[0]
        want = fd_own(i, x)
        assert got == pytest.approx(want, rel=1e-5)


def test_zero_cost_gradient_is_zero():
    g = GameSpec([ZeroCost(), ZeroCost()], zero_constraint(2), np.zeros((2, 2)), np.ones((2, 2)))
    assert np.array_equal(local_gradient(g, 1, [0.3, 0.4], [0.5, 0.5]), np.zeros(2))


def test_stationary_point_bracketed_by_sign_change(game):
    y = 40.0
    f = lambda z: local_gradient(game, 2, [z], [y])[0]  # noqa: E731
    assert f(30.0) < 0 < f(50.0)
    root = brentq(f, 30.0, 50.0, xtol=1e-12)
    # 2(z - 42) + 0.05 * 209 + 0.05 z = 0
    assert root == pytest.approx((84 - 0.05 * 209) / 2.05, abs=1e-9)


def test_non_finite_input_names_player(game):
    with pytest.raises(GameError, match="player 3"):
        local_gradient(game, 3, [np.nan], [40.0])


@pytest.mark.parametrize("y,want", [(40.0, 0.0), (30.0, -50.0), (50.0, 50.0)])
def test_constraint_value(game, y, want):
    assert constraint_value(game, [y]) == want


def test_constraint_gradient_energy_and_fd(game, rng):
    for y in rng.uniform(30, 50, 5):
        assert constraint_gradient(game, 2, [y])[0] == pytest.approx(1.0)
    # finite differences of g(mean(x)) in coordinate i
    x = rng.uniform(30, 50, 5)
    h = 1e-6
    e = np.zeros(5)
    e[1] = h
    fd = (game.constraint.value([(x + e).mean()]) - game.constraint.value([(x - e).mean()])) / (2 * h)
    assert fd == pytest.approx(1.0, rel=1e-6)


def test_constraint_gradient_zero_and_quadratic():
    zero = GameSpec([ZeroCost()] * 2, zero_constraint(1), np.zeros((2, 1)), np.ones((2, 1)))
    assert constraint_gradient(zero, 0, [3.0])[0] == 0.0
    quad = GameSpec(
        [ZeroCost()] * 4,
        CallableConstraint(lambda y: float(y[0] ** 2) - 100.0),
        np.zeros((4, 1)),
        np.full((4, 1), 3.0),
    )
    assert constraint_gradient(quad, 0, [2.0])[0] == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("x,want", [(55.0, 50.0), (42.0, 42.0), (12.0, 30.0)])
def test_project_box_examples(x, want):
    assert project_box(30.0, 50.0, x) == want


def test_project_box_inverted():
    with pytest.raises(GameError, match="inverted"):
        project_box(50.0, 30.0, 40.0)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3),
    st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3),
)
def test_project_box_idempotent_nonexpansive(a, b):
    lo, hi = np.array([-1.0, 0.0, 30.0]), np.array([1.0, 0.0, 50.0])
    pa, pb = project_box(lo, hi, a), project_box(lo, hi, b)
    assert np.array_equal(project_box(lo, hi, pa), pa)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(np.subtract(a, b)) + 1e-9


def test_project_box_nonexpansive_bulk(rng):
    a = rng.normal(40, 20, (10_000, 1))
    b = rng.normal(40, 20, (10_000, 1))
    d = np.abs(project_box(30, 50, a) - project_box(30, 50, b))
    assert np.all(d <= np.abs(a - b))


def test_empty_box_rejected():
    with pytest.raises(GameError, match="empty strategy box"):
        GameSpec([ZeroCost()], zero_constraint(1), [[2.0]], [[1.0]])


def _grid_cap(game, i, step=1e-4):
    """Independent oracle: plain grid at the given step, opponents at the Slater corner."""
    xs = np.arange(30.0, 50.0 + step / 2, step)
    s = NOMINAL[i]
    xbar = (4 * 30.0 + xs) / 5
    inner = np.min((xs - s) ** 2 + 0.05 * (5 * xbar + 9) * xs)
    j_hat = (30 - s) ** 2 + 0.05 * (150 + 9) * 30
    return (j_hat - inner) / 50.0


def test_multiplier_bound_player1(game):
    caps = multiplier_bound(game, game.lower, 0.0)
    # (914.5 - 483.5) / 50
    assert caps[0] == pytest.approx(8.62, abs=1e-9)


def test_multiplier_bound_matches_grid_oracle(game):
    caps = multiplier_bound(game)
    for i in range(5):
        assert caps[i] == pytest.approx(_grid_cap(game, i), abs=1e-6)
    np.testing.assert_allclose(caps, [8.62, 11.82, 1.0081071428571, 9.42, 7.0766785714286], atol=1e-9)


def test_multiplier_bound_constant_cost_is_zero():
    g = GameSpec(
        [CallableCost(lambda x, xb: 3.0)] * 3,
        AffineConstraint((3.0,), 100.0),
        np.zeros((3, 1)),
        np.ones((3, 1)),
    )
    assert np.all(multiplier_bound(g) == 0.0)


def test_slater_violation():
    with pytest.raises(GameError, match="Slater condition violated"):
        EnergyGameParams(cap=150.0)
    with pytest.raises(GameError, match="Slater condition violated"):
        GameSpec(
            [ZeroCost()] * 2, AffineConstraint((2.0,), 1.0), np.zeros((2, 1)), np.ones((2, 1)),
            slater=np.ones((2, 1)),
        )
    g = energy_game()
    with pytest.raises(GameError, match="Slater condition violated"):
        multiplier_bound(g, np.full((5, 1), 40.0))


def test_auto_lambda_prime(game):
    # sup |grad_i J_i| / inf |grad_i g|: player 1 at 30 with every other player at 30
    assert auto_lambda_prime(game) == pytest.approx(50.55, abs=1e-9)
    caps = multiplier_bound(game, lambda_prime=auto_lambda_prime(game))
    np.testing.assert_allclose(caps, 50.55, atol=1e-9)


def test_energy_constants(game):
    c = estimate_constants(game)
    assert c.l_g == 5.0
    assert c.C_g == 50.0
    assert c.G_g == 0.0
    assert c.G_J == pytest.approx(np.hypot(2.1, 2 * 0.05), abs=1e-12)
    assert c.l_J == pytest.approx(50.63894252450, abs=1e-9)


def _callable_energy():
    s = NOMINAL
    costs = [lambda x, xb, si=si: float((x[0] - si) ** 2 + 0.05 * (5 * xb[0] + 9) * x[0]) for si in s]
    return game_from_callables(costs, lambda xb: float(5 * xb[0] - 200), np.full((5, 1), 30.0), np.full((5, 1), 50.0))


def test_sampled_constants_cross_check_analytic():
    c = estimate_constants(_callable_energy(), samples=64)
    exact = estimate_constants(energy_game())
    # affine g: every difference quotient equals the slope
    assert c.l_g == pytest.approx(1.1 * 5.0, rel=1e-6)
    assert c.C_g == pytest.approx(1.1 * 50.0, rel=1e-9)
    assert c.l_J <= 1.1 * exact.l_J + 1e-9
    assert c.G_J <= 1.1 * exact.G_J * (1 + 1e-4)


def test_sampled_constants_monotone_in_samples():
    g = _callable_energy()
    prev = None
    for n in (8, 16, 32, 64):
        c = estimate_constants(g, samples=n)
        vals = np.array([c.l_J, c.l_g, c.C_g, c.G_J, c.G_g])
        if prev is not None:
            assert np.all(vals >= prev - 1e-12)
        prev = vals


def test_zero_constraint_constants():
    g = GameSpec([ZeroCost()] * 2, zero_constraint(1), np.zeros((2, 1)), np.ones((2, 1)))
    c = estimate_constants(g, samples=8)
    assert c.l_g == c.C_g == c.G_g == 0.0
    assert np.all(multiplier_bound(g) == 0.0)


def test_degenerate_box_uses_vertex():
    g = game_from_callables(
        [lambda x, xb: float(x[0] ** 2)] * 2, lambda xb: float(xb[0] - 5), [[1.0], [1.0]], [[1.0], [1.0]]
    )
    c = estimate_constants(g, samples=4)
    assert c.C_g == pytest.approx(1.1 * 4.0)
    assert c.l_J == 0.0


def test_estimate_constants_needs_two_samples():
    with pytest.raises(GameError):
        estimate_constants(_callable_energy(), samples=1)


def test_with_cost_changes_one_player(game):
    from gne_mesh.game import EnergyCost

    adj = game.with_cost(0, EnergyCost(57.0, 0.05, 9.0, 5))
    assert adj.costs[0] != game.costs[0]
    assert adj.costs[1:] == game.costs[1:]
