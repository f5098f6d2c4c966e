"""Post-processing of run traces: KKT residuals, convergence metrics,
communication accounting and the privacy auditor."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .engine import RunTrace, Setup, run_algorithm1
from .game import GameConstants, GameSpec, PlayerCost, estimate_constants, project_box


class AnalysisError(ValueError):
    pass


# --------------------------------------------------------------------------
# KKT certification


@dataclass(frozen=True)
class KktPoint:
    x_star: np.ndarray  # (N, d)
    lambda_star: np.ndarray  # (N,)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x_star, dtype=float))
        if x.shape[0] == 1 and x.shape[1] > 1:
            x = x.T
        lam = np.atleast_1d(np.asarray(self.lambda_star, dtype=float))
        if lam.shape != (x.shape[0],):
            raise AnalysisError(f"need one multiplier per player, got {lam.shape} for {x.shape[0]} players")
        if np.any(lam < 0):
            raise AnalysisError("multipliers must be nonnegative")
        object.__setattr__(self, "x_star", x)
        object.__setattr__(self, "lambda_star", lam)


def _as_profile(game: GameSpec, x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(game.n_players, game.dim)


def kkt_parts(game: GameSpec, point: KktPoint) -> np.ndarray:
    """(N, 3) array: projection gap, scaled slackness, constraint violation."""
    x = _as_profile(game, point.x_star)
    lam = point.lambda_star
    xbar = x.mean(axis=0)
    y = np.repeat(xbar[None], game.n_players, axis=0)
    grad = game.local_gradients(x, y) + lam[:, None] * game.constraint_gradients(y)
    gap = np.linalg.norm(x - project_box(game.lower, game.upper, x - grad), axis=1)
    g = game.constraint.value(xbar)
    slack = np.abs(lam * g) / (1.0 + np.abs(lam))
    viol = np.full(game.n_players, max(g, 0.0))
    return np.column_stack([gap, slack, viol])


def kkt_residual(game: GameSpec, point: KktPoint) -> np.ndarray:
    return kkt_parts(game, point).max(axis=1)


def stationarity_duals(game: GameSpec, x) -> np.ndarray:
    """Smallest-norm multipliers that make each player's projected stationarity hold.

    For an interior player this is the least-squares solution of
    grad J_i + lambda grad g = 0; at an active bound the same formula gives the
    smallest lambda consistent with the projection, clipped at zero.
    """
    x = _as_profile(game, x)
    xbar = x.mean(axis=0)
    y = np.repeat(xbar[None], game.n_players, axis=0)
    gj = game.local_gradients(x, y)
    gg = game.constraint_gradients(y)
    lam = np.zeros(game.n_players)
    for i in range(game.n_players):
        free = (x[i] > game.lower[i]) & (x[i] < game.upper[i])
        # only free coordinates pin lambda; clamped ones constrain its sign
        mask = free if free.any() else np.ones_like(free)
        den = float(gg[i, mask] @ gg[i, mask])
        if den > 0:
            lam[i] = max(0.0, -float(gj[i, mask] @ gg[i, mask]) / den)
    return lam


def project_to_constraint(game: GameSpec, x, target: float = 0.0) -> np.ndarray:
    """Shift the free coordinates of an affine-constrained profile so g(mean x) = target."""
    x = _as_profile(game, x).copy()
    free = (x > game.lower) & (x < game.upper)
    slope = game.constraint.grad(x.mean(axis=0)) / game.n_players
    w = free * slope[None, :]
    den = float(np.sum(w * slope[None, :]))
    if den == 0:
        return x
    step = (target - game.constraint.value(x.mean(axis=0))) / den
    return np.clip(x + step * w, game.lower, game.upper)


def variational_gne(game: GameSpec, tol: float = 1e-12, max_iter: int = 200) -> KktPoint:
    """GNE with a common multiplier, by bisection on lambda over exact best responses.

    Requires best responses available via projected fixed-point iteration of
    the composite gradient (strongly monotone pseudo-gradient).
    """

    def equilibrium(lam: float) -> np.ndarray:
        x = (game.lower + game.upper) / 2
        lam_v = np.full(game.n_players, lam)
        step = 0.2
        for _ in range(20000):
            y = np.repeat(x.mean(axis=0)[None], game.n_players, axis=0)
            grad = game.local_gradients(x, y) + lam_v[:, None] * game.constraint_gradients(y)
            x_new = project_box(game.lower, game.upper, x - step * grad)
            if np.max(np.abs(x_new - x)) < tol:
                return x_new
            x = x_new
        return x

    x0 = equilibrium(0.0)
    if game.constraint.value(x0.mean(axis=0)) <= 0:
        return KktPoint(x0, np.zeros(game.n_players))
    lo, hi = 0.0, 1.0
    while game.constraint.value(equilibrium(hi).mean(axis=0)) > 0:
        hi *= 2
        if hi > 1e12:
            raise AnalysisError("no multiplier restores feasibility")
    for _ in range(max_iter):
        mid = (lo + hi) / 2
        if game.constraint.value(equilibrium(mid).mean(axis=0)) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return KktPoint(equilibrium(hi), np.full(game.n_players, hi))


# --------------------------------------------------------------------------
# convergence metrics


def residual_series(trace: RunTrace, x_star) -> np.ndarray:
    """r_k = ||x_k - x*||^2 for k = 0..K."""
    xs = np.asarray(x_star, dtype=float).reshape(trace.x.shape[1:])
    return np.sum((trace.x - xs) ** 2, axis=(1, 2))


def residual_metric(trace: RunTrace, x_star, T: int, end: int | None = None) -> float:
    """Mean of ||x_k - x*||^2 over the T iterations ending at ``end`` (default K).

    With end = T this is (1/T) sum_{k=1..T}.
    """
    if T < 1:
        raise AnalysisError("window T must be >= 1")
    K = trace.horizon
    end = K if end is None else end
    if end > K or end - T + 1 < 0:
        raise AnalysisError(f"window of {T} ending at {end} does not fit a trace of horizon {K}")
    r = residual_series(trace, x_star)
    return float(r[end - T + 1 : end + 1].mean())


def windowed_residual(trace: RunTrace, x_star, T: int) -> np.ndarray:
    """Trailing-window means for k = T..K (entry j is the window ending at T + j)."""
    if T < 1:
        raise AnalysisError("window T must be >= 1")
    r = residual_series(trace, x_star)[1:]
    if r.size < T:
        return np.empty(0)
    c = np.concatenate([[0.0], np.cumsum(r)])
    return (c[T:] - c[:-T]) / T


def consensus_gap(trace: RunTrace, k: int) -> float:
    if not 0 <= k <= trace.horizon:
        raise AnalysisError(f"k = {k} outside the trace (horizon {trace.horizon})")
    xbar = trace.x[k].mean(axis=0)
    return float(np.sum((trace.y[k] - xbar) ** 2))


@dataclass(frozen=True)
class CommReport:
    triggered_rounds: np.ndarray
    total_bits: int
    savings_ratio: float
    rounds: int


def comm_report(trace: RunTrace) -> CommReport:
    """Transmissions over rounds 0..K-1 (round 0 is the unconditional broadcast)."""
    rounds = max(trace.horizon, 1)
    fired = trace.fired[:rounds]
    counts = fired.sum(axis=0).astype(int)
    total = int(counts.sum()) * trace.bits_per_message
    return CommReport(
        triggered_rounds=counts,
        total_bits=total,
        savings_ratio=float(counts.sum()) / (trace.n_players * rounds),
        rounds=rounds,
    )


# --------------------------------------------------------------------------
# privacy


def privacy_delta(k: int, t: float, n: int, theta: float, l_J: float, l_g: float, lambda_bar_max: float) -> float:
    """delta_k = min(1, 2 t ln(k) sqrt(N) / theta * (l_J + l_g max Lambda))."""
    if k < 1:
        raise AnalysisError("delta_k needs k >= 1 (ln k undefined at 0)")
    if not theta > 0:
        raise AnalysisError("theta must be positive")
    if k == 1:
        return 0.0
    val = 2.0 * t * np.log(k) * np.sqrt(n) / theta * (l_J + l_g * lambda_bar_max)
    return float(min(1.0, val))


def dy_bound(k: int, t: float, l_J: float, l_g: float, lambda_bar_max: float) -> float:
    """Closed-form bound 2 (l_J + l_g max Lambda) t ln k on ||Delta y_{i0,k}||."""
    if k < 1:
        return 0.0
    return float(2.0 * (l_J + l_g * lambda_bar_max) * t * np.log(k))


@dataclass
class PrivacyAudit:
    i0: int
    k: np.ndarray
    delta_series: np.ndarray
    dy_series: np.ndarray
    bound_series: np.ndarray
    tight_bound_series: np.ndarray
    side_violations: np.ndarray  # k where ||Delta y|| > 2 theta
    bound_violations: np.ndarray  # k where ||Delta y|| exceeds the closed-form bound
    dx_others: np.ndarray  # (K+1, N) ||Delta x_{j,k}||
    constants: GameConstants
    theta: float

    def rows(self):
        for j, k in enumerate(self.k):
            yield int(k), self.delta_series[j], self.dy_series[j], self.bound_series[j], self.tight_bound_series[j]


def _plain(game: GameSpec) -> GameSpec:
    # both runs must evaluate gradients the same way for coupled runs to agree bitwise
    return dataclasses.replace(game, batch_gradient=None)


def adjacent_player(a: GameSpec, b: GameSpec) -> int:
    diff = [i for i, (ca, cb) in enumerate(zip(a.costs, b.costs)) if ca != cb]
    if len(a.costs) != len(b.costs):
        raise AnalysisError("games have different player counts")
    if len(diff) > 1:
        raise AnalysisError(f"games differ in players {diff}; adjacency allows exactly one")
    return diff[0] if diff else 0


def adjacency_experiment(
    setup: Setup,
    i0: int | None = None,
    perturbed_cost: PlayerCost | None = None,
    perturbed_game: GameSpec | None = None,
    run: int = 0,
    constants: GameConstants | None = None,
) -> PrivacyAudit:
    """Coupled runs of the compressed algorithm on two adjacent games.

    Pass either ``i0`` with ``perturbed_cost`` or a full ``perturbed_game``
    that differs from ``setup.game`` in exactly one player. Both runs share
    the initial state and every quantizer draw.
    """
    if perturbed_game is not None:
        j = adjacent_player(setup.game, perturbed_game)
        if i0 is not None and i0 != j:
            raise AnalysisError(f"perturbed game differs in player {j}, not {i0}")
        i0, other = j, perturbed_game
    else:
        if i0 is None or perturbed_cost is None:
            raise AnalysisError("give i0 and perturbed_cost, or perturbed_game")
        if not 0 <= i0 < setup.game.n_players:
            raise AnalysisError(f"no player {i0}")
        other = setup.game.with_cost(i0, perturbed_cost)
    if constants is None:
        constants = estimate_constants(setup.game)
    x0 = setup.x0
    if x0 is None:
        from .engine import initial_strategies

        x0 = initial_strategies(setup, run)
    base = dataclasses.replace(setup, game=_plain(setup.game), x0=x0)
    pert = dataclasses.replace(setup, game=_plain(other), x0=x0)
    a = run_algorithm1(base, run)
    b = run_algorithm1(pert, run)

    K = a.horizon
    ks = np.arange(K + 1)
    dy = np.linalg.norm(a.y[:, i0] - b.y[:, i0], axis=1)
    dx = np.linalg.norm(a.x - b.x, axis=2)
    lam_max = float(np.max(setup.lambda_cap))
    t = setup.schedule.t
    theta = float(setup.compressor.theta)
    n = setup.game.n_players
    lip = constants.l_J + constants.l_g * lam_max
    bound = np.array([dy_bound(int(k), t, constants.l_J, constants.l_g, lam_max) for k in ks])
    gam = np.array([setup.schedule.gamma(int(k)) for k in ks])
    tight = np.concatenate([[0.0], 2.0 * lip * np.cumsum(gam[:-1])])
    if theta > 0:
        delta = np.array(
            [np.nan if k == 0 else privacy_delta(int(k), t, n, theta, constants.l_J, constants.l_g, lam_max) for k in ks]
        )
    else:
        delta = np.full(K + 1, np.nan)
    side = ks[dy > 2 * theta] if theta > 0 else np.empty(0, dtype=int)
    over = ks[dy > bound]
    return PrivacyAudit(
        i0=i0,
        k=ks,
        delta_series=delta,
        dy_series=dy,
        bound_series=bound,
        tight_bound_series=tight,
        side_violations=side,
        bound_violations=over,
        dx_others=dx,
        constants=constants,
        theta=theta,
    )
