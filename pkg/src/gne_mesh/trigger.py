"""Event-triggered transmission with geometrically decaying thresholds."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class TriggerError(ValueError):
    pass


@dataclass(frozen=True)
class TriggerSchedule:
    """tau_{i,k} = B_i * alpha_i^k."""

    B: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        B = np.atleast_1d(np.asarray(self.B, dtype=float))
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if B.shape != alpha.shape:
            B, alpha = np.broadcast_arrays(B, alpha)
        if np.any(B < 0) or not np.all(np.isfinite(B)):
            raise TriggerError(f"threshold amplitudes must be finite and >= 0, got {B}")
        if np.any(alpha <= 0) or np.any(alpha >= 1):
            raise TriggerError(
                f"decay rates must lie in (0, 1) so thresholds vanish, got {alpha}"
            )
        object.__setattr__(self, "B", B.copy())
        object.__setattr__(self, "alpha", alpha.copy())

    @classmethod
    def uniform(cls, n: int, B: float, alpha: float) -> "TriggerSchedule":
        return cls(np.full(n, float(B)), np.full(n, float(alpha)))

    def for_players(self, n: int) -> "TriggerSchedule":
        if self.B.size == n:
            return self
        if self.B.size == 1:
            return TriggerSchedule.uniform(n, self.B[0], self.alpha[0])
        raise TriggerError(f"schedule has {self.B.size} entries for {n} players")

    def thresholds(self, k: int) -> np.ndarray:
        return self.B * self.alpha**k


def threshold_at(s: TriggerSchedule, i: int, k: int) -> float:
    if k < 0:
        raise TriggerError(f"iteration index must be >= 0, got {k}")
    return float(s.B[i] * s.alpha[i] ** k)


def should_transmit(v_now, v_last_sent, tau: float) -> bool:
    """Send when ||v_now - v_last_sent|| >= tau (ties send)."""
    a = np.atleast_1d(np.asarray(v_now, dtype=float))
    b = np.atleast_1d(np.asarray(v_last_sent, dtype=float))
    if a.shape != b.shape:
        raise TriggerError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return bool(np.linalg.norm(a - b) >= tau)


@dataclass(frozen=True)
class SummabilityReport:
    summable: bool
    partial_sum: float
    limit: float
    horizon: int

    @property
    def tail(self) -> float:
        return self.limit - self.partial_sum


def threshold_summability_check(
    s: TriggerSchedule, eta_exponent: float, horizon: int, offset: int = 1
) -> SummabilityReport:
    """Summability of sum_k eta_k max_i tau_{i,k}^2 with eta_k = (k + offset)^-s.

    Geometric decay times any polynomial is summable, so the verdict is
    analytic; the partial sum up to ``horizon`` and the limit are reported as
    diagnostics.
    """
    if not 0.5 < eta_exponent <= 1.0:
        raise TriggerError(f"eta exponent must lie in (0.5, 1], got {eta_exponent}")
    if np.any(s.alpha >= 1):
        raise TriggerError("thresholds must decay (alpha < 1)")

    def term(k):
        return (k + offset) ** -eta_exponent * np.max(s.thresholds(k)) ** 2

    partial = float(sum(term(k) for k in range(horizon + 1)))
    limit = partial
    k = horizon + 1
    amax = float(np.max(s.alpha))
    # tail after k is below term(k) / (1 - alpha^2) since eta is nonincreasing
    while True:
        t = term(k)
        limit += t
        k += 1
        if t == 0 or t / (1 - amax**2) < 1e-18 * max(limit, 1.0):
            break
    return SummabilityReport(True, partial, float(limit), horizon)


@dataclass
class TriggerLog:
    n_players: int
    instants: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.instants:
            self.instants = [[] for _ in range(self.n_players)]

    @classmethod
    def from_matrix(cls, fired: np.ndarray) -> "TriggerLog":
        log = cls(fired.shape[1])
        for i in range(fired.shape[1]):
            log.instants[i] = [int(k) for k in np.flatnonzero(fired[:, i])]
        return log

    def record(self, i: int, k: int) -> None:
        self.instants[i].append(k)

    @property
    def counts(self) -> list[int]:
        return [len(v) for v in self.instants]

    def rows(self):
        for i, ks in enumerate(self.instants):
            for k in ks:
                yield i, k

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["player", "iteration"])
            for row in self.rows():
                w.writerow(row)

    @classmethod
    def from_csv(cls, path: str | Path, n_players: int) -> "TriggerLog":
        log = cls(n_players)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                log.record(int(row["player"]), int(row["iteration"]))
        for ks in log.instants:
            ks.sort()
        return log
