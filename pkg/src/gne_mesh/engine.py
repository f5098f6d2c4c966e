"""Synchronous-round simulation of the compressed, event-triggered GNE seeker
and of the full-information projected primal-dual baseline.

Round ``r`` (0 <= r < K) maps state ``r`` to state ``r + 1``:

1. each player quantizes its aggregate estimate, ``v = C(y_r)``;
2. it transmits ``v`` if ``||v - v_sent|| >= tau_r`` and refreshes its sent
   copy (round 0 always transmits);
3. primal and dual steps use the player's own estimate ``y_r``;
4. the estimate moves by the compressed disagreement with the neighbours
   plus the player's own primal innovation.

Step sizes are ``(r + offset)^-s`` for consensus and ``(r + offset)^-t`` for
the primal-dual step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .compressor import IdentityCompressor, QuantizerRangeError, StochasticQuantizer
from .game import GameSpec
from .network import MixingMatrix, first_contraction_index
from .trigger import TriggerLog, TriggerSchedule, threshold_summability_check

log = logging.getLogger(__name__)

LITERAL = "literal"
CONSERVATION = "conservation"


class EngineError(RuntimeError):
    pass


class ScheduleError(ValueError):
    def __init__(self, constraint: str, detail: str):
        super().__init__(f"step-size condition '{constraint}' violated: {detail}")
        self.constraint = constraint


# --------------------------------------------------------------------------
# step sizes


@dataclass(frozen=True)
class StepSchedule:
    s: float = 0.7
    t: float = 0.9
    offset: int = 1
    eta_scale: float = 1.0
    gamma_scale: float = 1.0

    def __post_init__(self):
        if int(self.offset) != self.offset or self.offset < 1:
            raise ValueError(f"schedule offset must be a positive integer, got {self.offset}")
        if self.eta_scale < 0 or self.gamma_scale < 0:
            raise ValueError("step-size scales must be nonnegative")

    def eta(self, k: int) -> float:
        return float(self.eta_scale * (k + self.offset) ** -self.s)

    def gamma(self, k: int) -> float:
        return float(self.gamma_scale * (k + self.offset) ** -self.t)


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str


@dataclass(frozen=True)
class ScheduleReport:
    checks: tuple[Check, ...]
    first_contraction_k: int | None

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def lines(self) -> list[str]:
        out = [f"{'ok  ' if c.ok else 'FAIL'} {c.name}: {c.detail}" for c in self.checks]
        k = self.first_contraction_k
        out.append(
            "contraction ||I + eta_k A - 11^T/N|| <= 1 - eta_k|rho2| from k = "
            + (str(k) if k is not None else "never (within scan)")
        )
        return out


def validate_schedule(
    s: StepSchedule,
    trig: TriggerSchedule | None = None,
    m: MixingMatrix | None = None,
    k_max: int = 1000,
    force: bool = False,
) -> ScheduleReport:
    """Check the step-size hypotheses of the convergence and privacy results.

    Raises ScheduleError naming the first violated constraint unless ``force``.
    """
    checks = [
        Check("s > 1/2", s.s > 0.5, f"s = {s.s:g}"),
        Check("s <= t", s.s <= s.t, f"s = {s.s:g}, t = {s.t:g}"),
        Check("t <= 1", s.t <= 1.0, f"t = {s.t:g}"),
        Check("2t - s > 1", 2 * s.t - s.s > 1.0, f"2t - s = {2 * s.t - s.s:.6g}"),
        Check("sum eta_k = inf", s.s <= 1.0, "needs s <= 1"),
        Check("sum eta_k^2 < inf", 2 * s.s > 1.0, "needs 2s > 1"),
        Check("sum gamma_k^2/eta_k < inf", 2 * s.t - s.s > 1.0, "needs 2t - s > 1"),
    ]
    if trig is not None:
        if 0.5 < s.s <= 1.0:
            rep = threshold_summability_check(trig, s.s, k_max, s.offset)
            checks.append(
                Check(
                    "sum eta_k max_i tau_ik^2 < inf",
                    rep.summable,
                    f"partial sum to k={k_max}: {rep.partial_sum:.6g} (limit {rep.limit:.6g})",
                )
            )
        else:
            checks.append(
                Check("sum eta_k max_i tau_ik^2 < inf", False, "eta exponent outside (0.5, 1]")
            )
    first = first_contraction_index(m, s.eta, k_max) if m is not None else None
    report = ScheduleReport(tuple(checks), first)
    if not force and not report.ok:
        bad = report.failed()[0]
        raise ScheduleError(bad.name, bad.detail)
    return report


# --------------------------------------------------------------------------
# run setup and trace


@dataclass
class Setup:
    """Everything a run needs, already resolved from a configuration."""

    game: GameSpec
    mixing: MixingMatrix
    schedule: StepSchedule
    trigger: TriggerSchedule
    compressor: StochasticQuantizer | IdentityCompressor
    lambda_cap: np.ndarray
    horizon: int
    master_seed: int = 0
    mode: str = LITERAL
    baseline_dual_cap: bool = False
    force: bool = False
    x0: np.ndarray | None = None
    lam0: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in (LITERAL, CONSERVATION):
            raise ValueError(f"mode must be '{LITERAL}' or '{CONSERVATION}', got {self.mode!r}")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.mixing.n != self.game.n_players:
            raise ValueError(
                f"graph has {self.mixing.n} nodes but the game has {self.game.n_players} players"
            )
        self.trigger = self.trigger.for_players(self.game.n_players)
        self.lambda_cap = np.broadcast_to(
            np.asarray(self.lambda_cap, dtype=float), (self.game.n_players,)
        ).copy()


def run_seeds(master_seed: int, run: int, n_players: int) -> tuple[np.random.SeedSequence, list]:
    """Seed streams of one Monte-Carlo run.

    Run ``r`` owns ``SeedSequence(master_seed, spawn_key=(r,))``; its initial
    state is drawn from child ``(r, 0)`` and player ``i`` quantizes with child
    ``(r, i + 1)``, so streams never depend on execution order.
    """
    init = np.random.SeedSequence(master_seed, spawn_key=(run, 0))
    players = [np.random.SeedSequence(master_seed, spawn_key=(run, i + 1)) for i in range(n_players)]
    return init, players


def initial_multipliers(setup: Setup) -> np.ndarray:
    if setup.lam0 is None:
        return np.zeros(setup.game.n_players)
    lam = np.broadcast_to(np.asarray(setup.lam0, dtype=float), (setup.game.n_players,)).copy()
    if np.any(lam < 0):
        raise ValueError("initial multipliers must be nonnegative")
    return lam


def initial_strategies(setup: Setup, run: int) -> np.ndarray:
    if setup.x0 is not None:
        return np.array(setup.x0, dtype=float).reshape(setup.game.lower.shape)
    init, _ = run_seeds(setup.master_seed, run, setup.game.n_players)
    rng = np.random.default_rng(init)
    g = setup.game
    return g.lower + rng.random(g.lower.shape) * (g.upper - g.lower)


@dataclass
class RunTrace:
    kind: str
    x: np.ndarray  # (K+1, N, d)
    lam: np.ndarray  # (K+1, N)
    y: np.ndarray  # (K+1, N, d)
    fired: np.ndarray  # (K+1, N) transmissions in round k
    bits: np.ndarray  # (K+1,) cumulative payload bits after round k
    event_error: np.ndarray  # (K+1, N) ||v_k - v_sent_k|| after the trigger phase
    thresholds: np.ndarray  # (K+1, N)
    consensus_gap: np.ndarray  # (K+1,) sum_i ||y_i - xbar||^2
    conservation_gap: np.ndarray  # (K+1,) ||ybar - xbar||_inf
    leak_bound: np.ndarray  # (K+1,) accumulated analytic bound on conservation_gap
    bits_per_message: int
    seed: tuple[int, int]
    mode: str = LITERAL
    extra: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.x.shape[0] - 1

    @property
    def n_players(self) -> int:
        return self.x.shape[1]

    @property
    def xbar(self) -> np.ndarray:
        return self.x.mean(axis=1)

    @property
    def trigger_log(self) -> TriggerLog:
        return TriggerLog.from_matrix(self.fired)

    def trigger_violations(self) -> int:
        """Rounds/players where ||v - v_sent|| exceeded tau after the trigger phase."""
        return int(np.count_nonzero(self.event_error > self.thresholds))

    def same_as(self, other: "RunTrace") -> bool:
        names = ("x", "lam", "y", "fired", "bits", "event_error", "consensus_gap")
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names)


def _new_trace(kind, K, N, d, bpm, seed, mode) -> RunTrace:
    return RunTrace(
        kind=kind,
        x=np.empty((K + 1, N, d)),
        lam=np.empty((K + 1, N)),
        y=np.empty((K + 1, N, d)),
        fired=np.zeros((K + 1, N), dtype=bool),
        bits=np.zeros(K + 1, dtype=np.int64),
        event_error=np.zeros((K + 1, N)),
        thresholds=np.full((K + 1, N), np.inf),
        consensus_gap=np.empty(K + 1),
        conservation_gap=np.empty(K + 1),
        leak_bound=np.zeros(K + 1),
        bits_per_message=bpm,
        seed=seed,
        mode=mode,
    )


def _record(tr: RunTrace, k: int, x, lam, y) -> None:
    tr.x[k] = x
    tr.lam[k] = lam
    tr.y[k] = y
    xb = x.mean(axis=0)
    tr.consensus_gap[k] = float(np.sum((y - xb) ** 2))
    tr.conservation_gap[k] = float(np.max(np.abs(y.mean(axis=0) - xb)))


def _finite_or_abort(arr, what: str, k: int) -> None:
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        raise EngineError(f"non-finite {what} for player {int(bad[0][0])} in round {k}")


# --------------------------------------------------------------------------
# local update rules


def step_primal(game: GameSpec, x: np.ndarray, lam: np.ndarray, y: np.ndarray, gamma: float, k: int = -1):
    """Projected gradient step of every player at its own aggregate estimate."""
    grad = game.local_gradients(x, y) + lam[:, None] * game.constraint_gradients(y)
    _finite_or_abort(grad, "gradient", k)
    return np.clip(x - gamma * grad, game.lower, game.upper)


def step_dual(game: GameSpec, lam: np.ndarray, y: np.ndarray, gamma: float, cap) -> np.ndarray:
    """Projected dual ascent on each player's local view of the constraint."""
    g = game.constraint_values(y)
    _finite_or_abort(g, "constraint value", -1)
    return np.clip(lam + gamma * g, 0.0, cap)


def step_consensus(
    mixing: MixingMatrix,
    y: np.ndarray,
    v: np.ndarray,
    v_sent: np.ndarray,
    eta: float,
    x_new: np.ndarray,
    x_old: np.ndarray,
    mode: str = LITERAL,
) -> np.ndarray:
    """y_i + eta sum_j a_ij (v_sent_j - v_i) + x_new_i - x_old_i.

    In conservation mode the player's own term uses its last sent value, so
    the column sums of the correction cancel and mean(y) tracks mean(x).
    """
    own = v_sent if mode == CONSERVATION else v
    corr = mixing.off_diagonal @ v_sent - mixing.weighted_degree[:, None] * own
    return y + eta * corr + (x_new - x_old)


# --------------------------------------------------------------------------
# drivers


def run_algorithm1(setup: Setup, run: int = 0) -> RunTrace:
    """Compressed, event-triggered distributed GNE seeking (one run)."""
    g, m, q = setup.game, setup.mixing, setup.compressor
    if not setup.force:
        validate_schedule(setup.schedule, setup.trigger, m, k_max=min(1000, max(setup.horizon, 1)))
    N, d, K = g.n_players, g.dim, setup.horizon
    x = initial_strategies(setup, run)
    y = x.copy()
    lam = initial_multipliers(setup)
    _, streams = run_seeds(setup.master_seed, run, N)
    # player i's draws for rounds 0..K-1, consecutive from its own stream
    U = np.stack([np.random.default_rng(ss).random((max(K, 1), d)) for ss in streams], axis=1)
    bpm = q.bits_per_message(d)
    tr = _new_trace("algorithm1", K, N, d, bpm, (setup.master_seed, run), setup.mode)
    deg = m.weighted_degree

    def quantize(y_now, k):
        try:
            q.check_range(y_now)
        except QuantizerRangeError as exc:
            i = int(np.argmax(np.max(np.abs(y_now), axis=1)))
            raise QuantizerRangeError(f"round {k}, player {i}: {exc}") from None
        return q.apply(y_now, U[k])

    # initial broadcast
    v = quantize(y, 0)
    v_sent = v.copy()
    tr.fired[0] = True
    tr.bits[0] = N * bpm
    tr.thresholds[0] = setup.trigger.thresholds(0)
    _record(tr, 0, x, lam, y)

    for k in range(K):
        if k > 0:
            v = quantize(y, k)
            tau = setup.trigger.thresholds(k)
            fire = np.linalg.norm(v - v_sent, axis=1) >= tau
            v_sent = np.where(fire[:, None], v, v_sent)
            tr.fired[k] = fire
            tr.thresholds[k] = tau
            tr.bits[k] = tr.bits[k - 1] + int(fire.sum()) * bpm
        tr.event_error[k] = np.linalg.norm(v - v_sent, axis=1)

        gamma, eta = setup.schedule.gamma(k), setup.schedule.eta(k)
        x_new = step_primal(g, x, lam, y, gamma, k)
        lam = step_dual(g, lam, y, gamma, setup.lambda_cap)
        y = step_consensus(m, y, v, v_sent, eta, x_new, x, setup.mode)
        _finite_or_abort(y, "aggregate estimate", k)
        x = x_new

        leak = 0.0
        if setup.mode == LITERAL and k > 0:
            leak = eta * float(np.sum(deg * tr.thresholds[k])) / N
        tr.leak_bound[k + 1] = tr.leak_bound[k] + leak
        _record(tr, k + 1, x, lam, y)
    if K > 0:
        tr.bits[K] = tr.bits[K - 1]
    log.debug("algorithm1 run %d: %d transmissions", run, int(tr.fired.sum()))
    return tr


def run_baseline(setup: Setup, run: int = 0) -> RunTrace:
    """Full-information projected primal-dual iteration on the exact aggregate."""
    g = setup.game
    N, d, K = g.n_players, g.dim, setup.horizon
    x = initial_strategies(setup, run)
    lam = initial_multipliers(setup)
    cap = setup.lambda_cap if setup.baseline_dual_cap else np.inf
    tr = _new_trace("baseline", K, N, d, 64 * d, (setup.master_seed, run), setup.mode)
    tr.fired[:K] = True
    tr.bits[:] = np.minimum(np.arange(1, K + 2), K) * N * 64 * d
    _record(tr, 0, x, lam, np.repeat(x.mean(axis=0)[None], N, axis=0))
    for k in range(K):
        gamma = setup.schedule.gamma(k)
        y = np.repeat(x.mean(axis=0)[None], N, axis=0)
        x_new = step_primal(g, x, lam, y, gamma, k)
        lam = step_dual(g, lam, y, gamma, cap)
        x = x_new
        _record(tr, k + 1, x, lam, np.repeat(x.mean(axis=0)[None], N, axis=0))
    return tr
