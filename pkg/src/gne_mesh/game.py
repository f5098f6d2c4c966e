"""Aggregative games with a shared constraint on the aggregate.

A game holds one cost per player, written as a function of the player's own
strategy and the aggregate ``xbar = mean(x)``, a scalar constraint
``g(xbar) <= 0`` and a box strategy set per player. Strategies are arrays of
shape ``(N, d)``; a single player's strategy has shape ``(d,)``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

SAFETY_FACTOR = 1.1
FD_STEP = 1e-6


class GameError(ValueError):
    """Raised on malformed games or invalid evaluation points."""


def _check_finite(value, player: int | None, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        who = f"player {player}" if player is not None else "aggregate"
        raise GameError(f"non-finite {name} for {who}: {arr!r}")
    return arr


# --------------------------------------------------------------------------
# cost and constraint descriptors


class PlayerCost:
    """Cost J_i(x_i, xbar). Subclasses provide the value and both partials."""

    def value(self, x_i: np.ndarray, xbar: np.ndarray) -> float:
        raise NotImplementedError

    def grad_own(self, x_i: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        """Partial derivative with respect to x_i, xbar held fixed."""
        raise NotImplementedError

    def grad_agg(self, x_i: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        """Partial derivative with respect to xbar, x_i held fixed."""
        raise NotImplementedError


@dataclass(frozen=True)
class EnergyCost(PlayerCost):
    """(x_i - s_i)^2 + p0 (N xbar + p1) x_i for scalar consumption x_i."""

    nominal: float
    p0: float
    p1: float
    n_players: int

    def value(self, x_i, xbar):
        x = float(np.asarray(x_i).reshape(-1)[0])
        xb = float(np.asarray(xbar).reshape(-1)[0])
        return (x - self.nominal) ** 2 + self.p0 * (self.n_players * xb + self.p1) * x

    def grad_own(self, x_i, xbar):
        x = np.asarray(x_i, dtype=float)
        xb = np.asarray(xbar, dtype=float)
        return 2.0 * (x - self.nominal) + self.p0 * (self.n_players * xb + self.p1)

    def grad_agg(self, x_i, xbar):
        return self.p0 * self.n_players * np.asarray(x_i, dtype=float)


@dataclass(frozen=True)
class ZeroCost(PlayerCost):
    def value(self, x_i, xbar):
        return 0.0

    def grad_own(self, x_i, xbar):
        return np.zeros_like(np.asarray(x_i, dtype=float))

    def grad_agg(self, x_i, xbar):
        return np.zeros_like(np.asarray(xbar, dtype=float))


@dataclass(frozen=True)
class CallableCost(PlayerCost):
    """Cost from a plain callable; missing partials use central differences."""

    fn: Callable[[np.ndarray, np.ndarray], float]
    d_own: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    d_agg: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def value(self, x_i, xbar):
        return float(self.fn(np.asarray(x_i, dtype=float), np.asarray(xbar, dtype=float)))

    def grad_own(self, x_i, xbar):
        if self.d_own is not None:
            return np.asarray(self.d_own(x_i, xbar), dtype=float)
        return _central_diff(lambda z: self.value(z, xbar), np.asarray(x_i, dtype=float))

    def grad_agg(self, x_i, xbar):
        if self.d_agg is not None:
            return np.asarray(self.d_agg(x_i, xbar), dtype=float)
        return _central_diff(lambda z: self.value(x_i, z), np.asarray(xbar, dtype=float))


def _central_diff(f, z: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    for c in range(z.size):
        e = np.zeros_like(z, dtype=float)
        e.flat[c] = h
        out.flat[c] = (f(z + e) - f(z - e)) / (2 * h)
    return out


class Constraint:
    """Scalar coupling constraint g(xbar) <= 0."""

    def value(self, xbar: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, xbar: np.ndarray) -> np.ndarray:
        """dg/dxbar, shape (d,)."""
        raise NotImplementedError


@dataclass(frozen=True)
class AffineConstraint(Constraint):
    """g(xbar) = slope . xbar - offset."""

    slope: tuple[float, ...]
    offset: float

    def value(self, xbar):
        return float(np.dot(self.slope, np.asarray(xbar, dtype=float).reshape(-1)) - self.offset)

    def grad(self, xbar):
        return np.asarray(self.slope, dtype=float)


@dataclass(frozen=True)
class CallableConstraint(Constraint):
    fn: Callable[[np.ndarray], float]
    d_fn: Callable[[np.ndarray], np.ndarray] | None = None

    def value(self, xbar):
        return float(self.fn(np.asarray(xbar, dtype=float)))

    def grad(self, xbar):
        xb = np.asarray(xbar, dtype=float).reshape(-1)
        if self.d_fn is not None:
            return np.asarray(self.d_fn(xb), dtype=float).reshape(-1)
        return _central_diff(self.value, xb)


def zero_constraint(dim: int = 1) -> AffineConstraint:
    return AffineConstraint(slope=(0.0,) * dim, offset=0.0)


# --------------------------------------------------------------------------
# game


@dataclass
class GameSpec:
    costs: list[PlayerCost]
    constraint: Constraint
    lower: np.ndarray
    upper: np.ndarray
    slater: np.ndarray | None = None
    name: str = "custom"
    # exact constants for games with closed forms; None -> sampled estimate
    analytic: Callable[["GameSpec"], "GameConstants"] | None = field(default=None, repr=False)
    # vectorised composite gradient (x, y) -> (N, d); None -> per-player loop
    batch_gradient: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(
        default=None, repr=False
    )

    def __post_init__(self):
        self.lower = np.atleast_2d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_2d(np.asarray(self.upper, dtype=float))
        n = len(self.costs)
        if n < 1:
            raise GameError("a game needs at least one player")
        if self.lower.shape != self.upper.shape or self.lower.shape[0] != n:
            raise GameError(
                f"box bounds must have shape ({n}, d); got {self.lower.shape} and {self.upper.shape}"
            )
        bad = np.argwhere(self.lower > self.upper)
        if bad.size:
            i, c = bad[0]
            raise GameError(
                f"empty strategy box for player {i}, coordinate {c}: "
                f"lower {self.lower[i, c]} > upper {self.upper[i, c]}"
            )
        if self.unconstrained:
            # g == 0 never binds; no Slater point is needed
            self.slater = self.lower.copy() if self.slater is None else self.slater
            self.slater = np.atleast_2d(np.asarray(self.slater, dtype=float)).reshape(self.lower.shape)
            return
        if self.slater is None:
            if self.constraint.value(self.lower.mean(axis=0)) < 0:
                self.slater = self.lower.copy()
            else:
                raise GameError(
                    "Slater condition violated at the box lower corner; supply a slater point"
                )
        self.slater = np.atleast_2d(np.asarray(self.slater, dtype=float)).reshape(self.lower.shape)
        gs = self.constraint.value(self.slater.mean(axis=0))
        if not gs < 0:
            raise GameError(f"Slater condition violated: g(mean(slater)) = {gs} >= 0")

    @property
    def unconstrained(self) -> bool:
        c = self.constraint
        return isinstance(c, AffineConstraint) and c.offset == 0 and not any(c.slope)

    @property
    def n_players(self) -> int:
        return len(self.costs)

    @property
    def dim(self) -> int:
        return self.lower.shape[1]

    def cost(self, i: int, x: np.ndarray) -> float:
        """J_i evaluated on a full profile of shape (N, d)."""
        x = np.asarray(x, dtype=float).reshape(self.n_players, self.dim)
        return self.costs[i].value(x[i], x.mean(axis=0))

    def local_gradients(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Composite gradients of all players, player i evaluated at (x_i, y_i)."""
        if self.batch_gradient is not None:
            return self.batch_gradient(x, y)
        return np.stack([local_gradient(self, i, x[i], y[i]) for i in range(self.n_players)])

    def constraint_values(self, y: np.ndarray) -> np.ndarray:
        return np.array([self.constraint.value(y[i]) for i in range(self.n_players)])

    def constraint_gradients(self, y: np.ndarray) -> np.ndarray:
        return np.stack([self.constraint.grad(y[i]) for i in range(self.n_players)]) / self.n_players

    def with_cost(self, i: int, cost: PlayerCost) -> "GameSpec":
        """Copy of the game with player i's cost replaced (an adjacent game)."""
        costs = list(self.costs)
        costs[i] = cost
        return GameSpec(
            costs=costs,
            constraint=self.constraint,
            lower=self.lower.copy(),
            upper=self.upper.copy(),
            slater=self.slater.copy(),
            name=f"{self.name}-adjacent",
        )


@dataclass(frozen=True)
class GameConstants:
    l_J: float
    l_g: float
    C_g: float
    G_J: float
    G_g: float
    lambda_bar: np.ndarray | None = None

    def __post_init__(self):
        for name in ("l_J", "l_g", "C_g", "G_J", "G_g"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise GameError(f"constant {name} must be finite and nonnegative, got {v}")
        if self.lambda_bar is not None and np.any(np.asarray(self.lambda_bar) < 0):
            raise GameError("multiplier caps must be nonnegative")


# --------------------------------------------------------------------------
# operations


def local_gradient(game: GameSpec, i: int, x_i, y_i) -> np.ndarray:
    """dJ_i/dx_i + (dJ_i/dxbar)(1/N), with the aggregate replaced by y_i."""
    x_i = _check_finite(x_i, i, "strategy").reshape(game.dim)
    y_i = _check_finite(y_i, i, "aggregate estimate").reshape(game.dim)
    tol = 1e-9 * (1.0 + np.abs(game.upper[i]))
    if np.any(x_i < game.lower[i] - tol) or np.any(x_i > game.upper[i] + tol):
        raise GameError(f"strategy of player {i} outside its box: {x_i}")
    c = game.costs[i]
    return c.grad_own(x_i, y_i) + c.grad_agg(x_i, y_i) / game.n_players


def constraint_value(game: GameSpec, y) -> float:
    y = _check_finite(y, None, "aggregate estimate").reshape(game.dim)
    return game.constraint.value(y)


def constraint_gradient(game: GameSpec, i: int, y) -> np.ndarray:
    y = _check_finite(y, i, "aggregate estimate").reshape(game.dim)
    return game.constraint.grad(y) / game.n_players


def project_box(lower, upper, x) -> np.ndarray:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise GameError(f"inverted box bounds: lower {lower} > upper {upper}")
    return np.clip(np.asarray(x, dtype=float), lower, upper)


def _grid_minimize(f, lo: np.ndarray, hi: np.ndarray, points: int = 401, tol: float = 1e-10):
    """Minimise a convex f over a box by repeated grid zoom."""
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    d = lo.size
    best_z, best_v = None, np.inf
    per_dim = max(5, int(round(points ** (1.0 / d)))) if d > 1 else points
    while True:
        axes = [np.linspace(lo[c], hi[c], per_dim) for c in range(d)]
        for z in itertools.product(*axes):
            z = np.array(z)
            v = f(z)
            if v < best_v:
                best_v, best_z = v, z
        width = hi - lo
        if np.all(width <= tol):
            return best_z, best_v
        step = width / (per_dim - 1)
        lo = np.maximum(lo, best_z - 2 * step)
        hi = np.minimum(hi, best_z + 2 * step)
        if np.all(hi - lo >= width):
            return best_z, best_v


def multiplier_bound(game: GameSpec, slater=None, lambda_prime=0.0) -> np.ndarray:
    """Per-player dual caps

        (J_i(xhat) - min_{x_i in box_i} L_i(x_i, xhat_{-i}, lambda'_i)) / (-g(mean xhat))

    with L_i = J_i + lambda'_i g. The inner problem is solved on a zooming grid.
    """
    xhat = game.slater if slater is None else np.asarray(slater, dtype=float)
    xhat = np.atleast_2d(xhat).reshape(game.n_players, game.dim)
    if game.unconstrained:
        return np.zeros(game.n_players)
    margin = -game.constraint.value(xhat.mean(axis=0))
    if not margin > 0:
        raise GameError(f"Slater condition violated: g(mean(slater)) = {-margin} >= 0")
    lp = np.broadcast_to(np.asarray(lambda_prime, dtype=float), (game.n_players,))
    if np.any(lp < 0):
        raise GameError("lambda_prime must be nonnegative")
    caps = np.empty(game.n_players)
    for i in range(game.n_players):
        others = xhat.sum(axis=0) - xhat[i]

        def lagrangian(z, i=i, others=others):
            xbar = (others + z) / game.n_players
            return game.costs[i].value(z, xbar) + lp[i] * game.constraint.value(xbar)

        _, inner = _grid_minimize(lagrangian, game.lower[i], game.upper[i])
        caps[i] = max(0.0, (game.cost(i, xhat) - inner) / margin)
    return caps


def auto_lambda_prime(game: GameSpec, samples: int = 256) -> float:
    """Largest interior-player multiplier any KKT point can need.

    At a KKT point with the player strictly inside its box, lambda_i equals
    |grad_i J_i| / |grad_i g|, so the sup of that ratio over the box is a
    floor for a cap that does not cut off any such point.
    """
    grads = _sampled_gradient_norms(game, samples)
    gmin = _min_constraint_grad(game, samples)
    if gmin <= 0:
        return 0.0
    return float(grads / gmin)


def _sampled_gradient_norms(game: GameSpec, samples: int) -> float:
    pts = np.concatenate([_profile_samples(game, samples), _box_vertices(game)])
    best = 0.0
    for p in pts:
        xbar = p.mean(axis=0)
        for i in range(game.n_players):
            best = max(best, float(np.linalg.norm(local_gradient(game, i, p[i], xbar))))
    return best


def _min_constraint_grad(game: GameSpec, samples: int) -> float:
    pts = _aggregate_samples(game, samples)
    return min(float(np.linalg.norm(game.constraint.grad(a))) / game.n_players for a in pts)


def _profile_samples(game: GameSpec, n: int, seed: int = 0) -> np.ndarray:
    """First n points of a scrambled Sobol sequence over the box product, plus vertices."""
    lo = game.lower.reshape(-1)
    hi = game.upper.reshape(-1)
    span = hi - lo
    free = span > 0
    pts = np.tile(lo, (n, 1))
    if free.any():
        pts[:, free] = lo[free] + _sobol(int(free.sum()), n, seed) * span[free]
    return pts.reshape(n, game.n_players, game.dim)


def _sobol(d: int, n: int, seed: int) -> np.ndarray:
    # balance warnings for non powers of two are irrelevant for a sup estimate
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return qmc.Sobol(d=d, scramble=True, seed=seed).random(n)


def _box_vertices(game: GameSpec, limit: int = 4096) -> np.ndarray:
    lo = game.lower.reshape(-1)
    hi = game.upper.reshape(-1)
    if 2 ** lo.size > limit:
        return np.empty((0, game.n_players, game.dim))
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    return corners.reshape(-1, game.n_players, game.dim)


def _aggregate_samples(game: GameSpec, n: int, seed: int = 0) -> np.ndarray:
    lo = game.lower.mean(axis=0)
    hi = game.upper.mean(axis=0)
    if np.all(hi - lo == 0):
        return lo[None, :]
    grid = [np.linspace(lo[c], hi[c], max(2, n)) for c in range(game.dim)]
    if game.dim == 1:
        return grid[0][:, None]
    return lo + _sobol(game.dim, n, seed) * (hi - lo)


def _pairwise_sup(values: np.ndarray, points: np.ndarray) -> float:
    """sup over pairs of |f(u) - f(v)| / |u - v| (values may be vectors)."""
    v = values.reshape(len(values), -1)
    p = points.reshape(len(points), -1)
    dv = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
    dp = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
    mask = dp > 0
    if not mask.any():
        return 0.0
    return float(np.max(dv[mask] / dp[mask]))


def estimate_constants(game: GameSpec, samples: int = 128, seed: int = 0) -> GameConstants:
    """Lipschitz and bound constants of the game.

    Games carrying an ``analytic`` hook return exact values. Otherwise every
    constant is the supremum of pairwise difference quotients over the first
    ``samples`` Sobol points of the box product (nested in ``samples``),
    multiplied by ``SAFETY_FACTOR``. A zero-volume box degenerates to its
    vertex.
    """
    if game.analytic is not None:
        return game.analytic(game)
    if samples < 2:
        raise GameError("estimate_constants needs at least 2 samples")
    pts = _profile_samples(game, samples, seed)
    N = game.n_players
    l_J = G_J = 0.0
    for i in range(N):
        vals = np.array([game.cost(i, p) for p in pts])
        grads = np.array([local_gradient(game, i, p[i], p.mean(axis=0)) for p in pts])
        l_J = max(l_J, _pairwise_sup(vals, pts))
        G_J = max(G_J, _pairwise_sup(grads, pts))
    agg = _aggregate_samples(game, samples, seed)
    gvals = np.array([game.constraint.value(a) for a in agg])
    ggrads = np.array([game.constraint.grad(a) / N for a in agg])
    C_g = float(np.max(np.abs(gvals)))
    l_g = _pairwise_sup(gvals, agg)
    G_g = _pairwise_sup(ggrads, agg)
    f = SAFETY_FACTOR
    return GameConstants(l_J=f * l_J, l_g=f * l_g, C_g=f * C_g, G_J=f * G_J, G_g=f * G_g)


# --------------------------------------------------------------------------
# the electricity-user game


@dataclass(frozen=True)
class EnergyGameParams:
    nominal: tuple[float, ...] = (56.0, 60.0, 42.0, 57.0, 54.0)
    p0: float = 0.05
    p1: float = 9.0
    box: tuple[float, float] = (30.0, 50.0)
    cap: float = 200.0

    def __post_init__(self):
        lo, hi = self.box
        if lo > hi:
            raise GameError(f"inverted energy box {self.box}")
        if not len(self.nominal) * lo < self.cap:
            raise GameError(
                f"Slater condition violated: N * lower = {len(self.nominal) * lo} >= cap {self.cap}"
            )


# GNE reported for the default parameters
ENERGY_REFERENCE_GNE = (42.5137, 45.1596, 30.0, 44.4407, 37.8858)


def energy_game(params: EnergyGameParams | None = None) -> GameSpec:
    p = params or EnergyGameParams()
    N = len(p.nominal)
    costs: list[PlayerCost] = [EnergyCost(float(s), p.p0, p.p1, N) for s in p.nominal]
    lower = np.full((N, 1), p.box[0])
    upper = np.full((N, 1), p.box[1])
    s = np.asarray(p.nominal, dtype=float)[:, None]

    def batch(x, y):
        return 2.0 * (x - s) + p.p0 * (N * y + p.p1) + p.p0 * x

    return GameSpec(
        costs=costs,
        constraint=AffineConstraint(slope=(float(N),), offset=p.cap),
        lower=lower,
        upper=upper,
        name="energy-demand",
        analytic=lambda g: _energy_constants(g, p),
        batch_gradient=batch,
    )


def _energy_constants(game: GameSpec, p: EnergyGameParams) -> GameConstants:
    """Exact constants: quadratic costs, affine constraint, box corners."""
    N = game.n_players
    lo, hi = p.box
    l_J = 0.0
    for s in p.nominal:
        # full-profile gradient of J_i is affine, so its norm peaks at a corner in
        # (x_i, sum of the others)
        for xi, rest in itertools.product((lo, hi), ((N - 1) * lo, (N - 1) * hi)):
            own = (2 + 2 * p.p0) * xi + p.p0 * rest + p.p0 * p.p1 - 2 * s
            l_J = max(l_J, float(np.hypot(own, np.sqrt(N - 1) * p.p0 * xi)))
    G_J = float(np.sqrt((2 + 2 * p.p0) ** 2 + (N - 1) * p.p0**2))
    C_g = max(abs(N * lo - p.cap), abs(N * hi - p.cap))
    return GameConstants(l_J=l_J, l_g=float(N), C_g=float(C_g), G_J=G_J, G_g=0.0)


def game_from_callables(
    costs: Sequence[Callable[[np.ndarray, np.ndarray], float]],
    constraint: Callable[[np.ndarray], float],
    lower,
    upper,
    slater=None,
) -> GameSpec:
    return GameSpec(
        costs=[CallableCost(c) for c in costs],
        constraint=CallableConstraint(constraint),
        lower=lower,
        upper=upper,
        slater=slater,
    )
