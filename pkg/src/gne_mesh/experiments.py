"""Monte-Carlo orchestration and CSV artifacts.

Runs are independent and keyed by run index; workers only change wall time,
never results or their order.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from .analysis import comm_report, residual_series, variational_gne
from .compressor import QuantizerRangeError
from .config import ExperimentConfig, GameConfig, build_game, resolve
from .engine import RunTrace, run_algorithm1, run_baseline
from .game import ENERGY_REFERENCE_GNE

log = logging.getLogger(__name__)

OK = "ok"
RANGE_ERROR = "range_error"


def reference_point(cfg: ExperimentConfig) -> np.ndarray:
    """Published GNE for the default energy game, else the variational GNE."""
    if cfg.game == GameConfig():
        return np.asarray(ENERGY_REFERENCE_GNE, dtype=float)[:, None]
    return variational_gne(build_game(cfg)).x_star


@dataclass
class RunSummary:
    run: int
    compressor: str
    status: str
    error: str = ""
    residual: np.ndarray = field(default_factory=lambda: np.empty(0))
    consensus_gap: np.ndarray = field(default_factory=lambda: np.empty(0))
    fired: np.ndarray = field(default_factory=lambda: np.empty((0, 0), dtype=bool))
    bits: int = 0
    savings_ratio: float = float("nan")
    trigger_violations: int = 0
    conservation_max: float = float("nan")
    leak_excess: float = float("nan")
    x_final: np.ndarray = field(default_factory=lambda: np.empty(0))
    trace: RunTrace | None = None

    @property
    def ok(self) -> bool:
        return self.status == OK

    def window(self, T: int, end: int | None = None) -> float:
        """Mean residual over the T iterations ending at ``end`` (default: last)."""
        K = self.residual.size - 1
        end = K if end is None else end
        lo = max(1, end - T + 1) if end > 0 else 0
        return float(self.residual[lo : end + 1].mean())


def _summarize(tr: RunTrace, run: int, name: str, x_star) -> RunSummary:
    rep = comm_report(tr)
    return RunSummary(
        run=run,
        compressor=name,
        status=OK,
        residual=residual_series(tr, x_star),
        consensus_gap=tr.consensus_gap.copy(),
        fired=tr.fired.copy(),
        bits=int(tr.bits[-1]),
        savings_ratio=rep.savings_ratio,
        trigger_violations=tr.trigger_violations(),
        conservation_max=float(tr.conservation_gap.max()),
        leak_excess=float(np.max(tr.conservation_gap - tr.leak_bound)),
        x_final=tr.x[-1].copy(),
    )


def _one_run(args) -> RunSummary:
    cfg, name, run, kind, force, keep = args
    setup = resolve(cfg, compressor=name if kind == "algorithm1" else None, force=force)
    x_star = reference_point(cfg)
    try:
        if kind == "baseline":
            setup.horizon = cfg.baseline_horizon
            tr = run_baseline(setup, run)
        else:
            tr = run_algorithm1(setup, run)
    except QuantizerRangeError as exc:
        log.info("run %d (%s) aborted: %s", run, name, exc)
        return RunSummary(run=run, compressor=name, status=RANGE_ERROR, error=str(exc))
    out = _summarize(tr, run, name, x_star)
    if keep:
        out.trace = tr
    return out


def run_many(
    cfg: ExperimentConfig,
    compressor: str | None = None,
    runs: int | None = None,
    kind: str = "algorithm1",
    workers: int | None = None,
    force: bool = False,
    keep_traces: bool = False,
) -> list[RunSummary]:
    """Runs 0..runs-1 of one compressor, ordered by run index."""
    name = compressor or (cfg.compressor.name if kind == "algorithm1" else "baseline")
    runs = cfg.runs if runs is None else runs
    workers = cfg.workers if workers is None else workers
    # fail fast on configuration problems before spawning workers
    resolve(cfg, compressor=name if kind == "algorithm1" else None, force=force)
    jobs = [(cfg, name, r, kind, force, keep_traces) for r in range(runs)]
    if workers <= 1 or runs <= 1:
        return [_one_run(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one_run, jobs))


def sweep(cfg: ExperimentConfig, workers: int | None = None, force: bool = False) -> dict[str, list[RunSummary]]:
    return {name: run_many(cfg, name, workers=workers, force=force) for name in cfg.sweep}


# --------------------------------------------------------------------------
# tables


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def residual_curve(results: list[RunSummary], T: int) -> tuple[np.ndarray, np.ndarray]:
    """Across-run mean and standard error of the trailing-window residual."""
    ok = [r for r in results if r.ok]
    if not ok:
        return np.empty(0), np.empty(0)
    R = np.stack([r.residual for r in ok])
    K = R.shape[1] - 1
    c = np.concatenate([np.zeros((R.shape[0], 1)), np.cumsum(R[:, 1:], axis=1)], axis=1)
    curve = np.empty_like(R)
    curve[:, 0] = R[:, 0]
    for k in range(1, K + 1):
        lo = max(1, k - T + 1)
        curve[:, k] = (c[:, k] - c[:, lo - 1]) / (k - lo + 1)
    mean = curve.mean(axis=0)
    se = curve.std(axis=0, ddof=1) / np.sqrt(len(ok)) if len(ok) > 1 else np.zeros_like(mean)
    return mean, se


def residual_table(groups: dict[str, list[RunSummary]], T: int):
    names = list(groups)
    curves = {n: residual_curve(groups[n], T) for n in names}
    K = max((c[0].size for c in curves.values()), default=0)
    header = ["iteration"] + [f"{n}_{s}" for n in names for s in ("mean", "stderr")]
    rows = []
    for k in range(K):
        row = [k]
        for n in names:
            m, se = curves[n]
            row += [m[k], se[k]] if k < m.size else ["", ""]
        rows.append(row)
    return header, rows


SUMMARY_HEADER = [
    "compressor",
    "run",
    "status",
    "first_window",
    "final_window",
    "transmissions",
    "bits",
    "savings_ratio",
    "trigger_violations",
    "conservation_gap_max",
    "consensus_gap_final",
    "error",
]


def summary_rows(groups: dict[str, list[RunSummary]], T: int):
    for name, results in groups.items():
        for r in results:
            if r.ok:
                K = r.residual.size - 1
                yield [
                    name,
                    r.run,
                    r.status,
                    r.window(T, min(T, K)),
                    r.window(T),
                    int(r.fired.sum()),
                    r.bits,
                    r.savings_ratio,
                    r.trigger_violations,
                    r.conservation_max,
                    float(r.consensus_gap[-1]),
                    "",
                ]
            else:
                yield [name, r.run, r.status, "", "", "", "", "", "", "", "", r.error]


AGGREGATE_HEADER = [
    "compressor",
    "runs_ok",
    "runs_failed",
    "mean_final_window",
    "stderr_final_window",
    "mean_bits",
    "mean_savings_ratio",
]


def aggregate_rows(groups: dict[str, list[RunSummary]], T: int):
    for name, results in groups.items():
        ok = [r for r in results if r.ok]
        finals = np.array([r.window(T) for r in ok])
        se = float(finals.std(ddof=1) / np.sqrt(finals.size)) if finals.size > 1 else float("nan")
        yield [
            name,
            len(ok),
            len(results) - len(ok),
            float(finals.mean()) if finals.size else float("nan"),
            se,
            float(np.mean([r.bits for r in ok])) if ok else float("nan"),
            float(np.mean([r.savings_ratio for r in ok])) if ok else float("nan"),
        ]


@dataclass(frozen=True)
class SignTest:
    better: str
    worse: str
    wins: int
    pairs: int
    p_value: float


def paired_sign_test(groups: dict[str, list[RunSummary]], a: str, b: str, T: int) -> SignTest:
    """Two-sided sign test of final_window(a) < final_window(b) over runs both completed."""
    ra = {r.run: r for r in groups[a] if r.ok}
    rb = {r.run: r for r in groups[b] if r.ok}
    common = sorted(set(ra) & set(rb))
    diffs = np.array([ra[k].window(T) - rb[k].window(T) for k in common])
    diffs = diffs[diffs != 0]
    wins = int(np.sum(diffs < 0))
    p = binomtest(wins, diffs.size, 0.5).pvalue if diffs.size else 1.0
    return SignTest(a, b, wins, int(diffs.size), float(p))


def ordering_rows(groups: dict[str, list[RunSummary]], T: int):
    names = list(groups)
    for a, b in zip(names, names[1:]):
        st = paired_sign_test(groups, a, b, T)
        yield [st.better, st.worse, st.wins, st.pairs, st.p_value]


def trigger_rows(result: RunSummary):
    if not result.ok:
        return
    K = result.fired.shape[0] - 1
    rounds = max(K, 1)
    for i in range(result.fired.shape[1]):
        for k in np.flatnonzero(result.fired[:rounds, i]):
            yield [i, int(k)]
