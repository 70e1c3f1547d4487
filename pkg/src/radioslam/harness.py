"""Seeded Monte Carlo execution, aggregation and CSV/JSONL export."""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .crowdsource import AgentLog, RunResult, run_schedule
from .metrics import bias_errors, mae_trajectory

SLOT_COLUMNS = ("method", "run", "slot", "agent", "x_true", "y_true", "x_est", "y_est",
                "mae", "obe", "cbe", "mospa", "detected")
SUMMARY_COLUMNS = ("method", "agent", "runs", "failed", "max_mae", "mospa", "final_mae", "final_mospa",
                   "final_obe", "final_cbe")
METHODS = ("proposed", "baseline")


@dataclass
class MonteCarloResult:
    scenario: object
    runs: dict = field(default_factory=dict)  # method -> list[RunResult]

    def failures(self, method: str) -> int:
        return sum(1 for r in self.runs.get(method, []) for a in r.agents.values() if a.failed)


def run_monte_carlo(scenario, methods=METHODS, runs: int | None = None, crowdsourcing: bool | None = None,
                    agent_ids=None) -> MonteCarloResult:
    """Run ``runs`` independent replications of every requested method.

    Run r of every method shares the synthesis streams, so the methods see
    identical measurements.
    """
    n_runs = scenario.runs if runs is None else runs
    out = MonteCarloResult(scenario)
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        out.runs[method] = [run_schedule(scenario, r, crowdsourcing, baseline=(method == "baseline"),
                                         agent_ids=agent_ids) for r in range(n_runs)]
    return out


@dataclass
class AgentTraces:
    """Run-aligned arrays for one agent; NaN where a run failed or the agent was absent."""

    slots: np.ndarray
    truth: np.ndarray  # (R, T, 2)
    estimate: np.ndarray
    alpha_hat: np.ndarray  # (R, T)
    omega_hat: np.ndarray  # (R, T, M)
    alpha_true: float
    omega_true: np.ndarray
    mospa: np.ndarray  # (R, T)
    detected: np.ndarray
    xi_err: np.ndarray
    beta_err: np.ndarray
    failed: int

    def mae(self):
        return mae_trajectory(self.estimate, self.truth)

    def bias_errors(self):
        r, t = self.alpha_hat.shape
        return bias_errors(self.alpha_hat, np.full((r, t), self.alpha_true), self.omega_hat,
                           np.broadcast_to(self.omega_true, self.omega_hat.shape))

    def mean_mospa(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # slots before entry are all-NaN
            return np.nanmean(self.mospa, axis=0) if len(self.mospa) else np.zeros(0)


def agent_traces(results: list[RunResult], agent: int, horizon: int) -> AgentTraces:
    logs: list[AgentLog] = [r.agents[agent] for r in results]
    n_anchor = len(logs[0].anchors) if logs else 0
    r_count = len(logs)
    nan = np.full((r_count, horizon), np.nan)
    tr, est = np.full((r_count, horizon, 2), np.nan), np.full((r_count, horizon, 2), np.nan)
    ah, oh = nan.copy(), np.full((r_count, horizon, n_anchor), np.nan)
    mo, de, xe, be = nan.copy(), nan.copy(), nan.copy(), nan.copy()
    failed = 0
    for i, log in enumerate(logs):
        if log.failed:
            failed += 1
            continue
        idx = np.asarray(log.slots, int) - 1
        if idx.size == 0:
            continue
        tr[i, idx], est[i, idx] = log.truth, log.estimate
        ah[i, idx], oh[i, idx] = log.alpha_hat, log.omega_hat
        mo[i, idx], xe[i, idx], be[i, idx] = log.mospa, log.xi_err, log.beta_err
        de[i, idx] = [len(d) for d in log.detected]
    first = logs[0] if logs else None
    return AgentTraces(np.arange(1, horizon + 1), tr, est, ah, oh,
                       first.alpha_true if first else 0.0,
                       np.asarray(first.omega_true if first else (), float), mo, de, xe, be, failed)


def _f(x) -> str:
    return "nan" if x is None or not np.isfinite(x) else f"{x:.6f}"


def _last_finite(v):
    v = np.asarray(v, float)
    ok = np.nonzero(np.isfinite(v))[0]
    return float(v[ok[-1]]) if ok.size else float("nan")


def summary_rows(result: MonteCarloResult) -> list[dict]:
    sc = result.scenario
    rows = []
    for method, runs in result.runs.items():
        if not runs:
            continue
        for agent in sorted(runs[0].agents):
            t = agent_traces(runs, agent, sc.horizon)
            per_slot, max_mae = t.mae()
            obe, cbe = t.bias_errors()
            mospa = t.mean_mospa()
            mean_mospa = float(np.nanmean(mospa)) if np.isfinite(mospa).any() else float("nan")
            rows.append(dict(method=method, agent=agent, runs=len(runs), failed=t.failed, max_mae=max_mae,
                             mospa=mean_mospa, final_mae=_last_finite(per_slot), final_mospa=_last_finite(mospa),
                             final_obe=_last_finite(obe), final_cbe=_last_finite(cbe)))
    return rows


def slot_rows(result: MonteCarloResult):
    for method, runs in result.runs.items():
        for run in runs:
            for agent in sorted(run.agents):
                log = run.agents[agent]
                for i, n in enumerate(log.slots):
                    tx, ty = log.truth[i]
                    ex, ey = log.estimate[i]
                    obe = abs(float(np.angle(np.exp(1j * (log.alpha_hat[i] - log.alpha_true)))))
                    cbe = float(np.mean(np.abs(np.subtract(log.omega_hat[i], log.omega_true)))) \
                        if log.omega_true else 0.0
                    yield dict(method=method, run=run.run, slot=n, agent=agent, x_true=tx, y_true=ty, x_est=ex,
                               y_est=ey, mae=float(np.hypot(ex - tx, ey - ty)), obe=obe, cbe=cbe,
                               mospa=log.mospa[i], detected=len(log.detected[i]))


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_f(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def slot_csv(result: MonteCarloResult) -> str:
    return _csv(slot_rows(result), SLOT_COLUMNS)


def summary_csv(result: MonteCarloResult) -> str:
    return _csv(summary_rows(result), SUMMARY_COLUMNS)


def orf_snapshots(run) -> str:
    """One JSON line per upload event: the cloud map right after that upload."""
    lines = []
    for k, (slot, agent, text) in enumerate(run.orf_log):
        entries = [json.loads(line) for line in text.splitlines() if line.strip()]
        lines.append(json.dumps({"event": k, "slot": slot, "agent": agent, "entries": entries}, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def export(result: MonteCarloResult, out_dir) -> list[Path]:
    """Write slots.csv, summary.csv and, for runs with uploads, orf/<method>_run<k>.jsonl."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "slots.csv", out / "summary.csv"]
    written[0].write_text(slot_csv(result))
    written[1].write_text(summary_csv(result))
    for method, runs in result.runs.items():
        for run in runs:
            if not run.orf_log:
                continue
            p = out / "orf" / f"{method}_run{run.run:03d}.jsonl"
            p.parent.mkdir(exist_ok=True)
            p.write_text(orf_snapshots(run))
            written.append(p)
    return written
