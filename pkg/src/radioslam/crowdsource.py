"""Local/open radio-feature maps, the simulated cloud and the multi-agent schedule."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .geometry import Point2, enumerate_virtual_anchors, visible_features
from .measurement import BiasTruth, Category, synthesize_batch
from .metrics import ospa
from .slam.beliefs import DegenerateUpdateError, FeatureBelief, LegacySet, Priors, SlamParams
from .slam.engine import SlamAgent, estimate_features


@dataclass(frozen=True)
class LRFEntry:
    x: float
    y: float
    existence: float


@dataclass(frozen=True)
class LRFMap:
    agent: int
    slot: int
    features: dict  # anchor -> tuple[LRFEntry, ...]

    def count(self) -> int:
        return sum(len(v) for v in self.features.values())


@dataclass(frozen=True)
class ORFEntry:
    anchor: int
    x: float
    y: float
    reliability: float
    upload_slot: int
    source: int = -1  # uploading agent id, used only for the supersede policy

    def record(self) -> dict:
        return {"anchor": self.anchor, "x": self.x, "y": self.y, "reliability": self.reliability,
                "upload_slot": self.upload_slot}


@dataclass(frozen=True)
class ORFMap:
    entries: tuple[ORFEntry, ...] = ()

    def for_anchor(self, anchor: int) -> list[ORFEntry]:
        return [e for e in self.entries if e.anchor == anchor]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class WeightSchedule:
    """phi(n') = min(1, n' / n_ref): strictly increasing on 1..n_ref."""

    n_ref: int = 60

    def __post_init__(self):
        if self.n_ref < 1:
            raise ValueError("n_ref must be >= 1")

    def __call__(self, slot: int) -> float:
        if slot < 1:
            raise ValueError("upload slot must be >= 1")
        return min(1.0, slot / self.n_ref)


def build_lrf(legacy: LegacySet, agent: int, slot: int, unreliability_threshold: float = 1e-4) -> LRFMap:
    feats: dict[int, list] = {}
    for est in estimate_features(legacy):
        if est.existence < unreliability_threshold:
            continue
        feats.setdefault(est.anchor, []).append(LRFEntry(est.position[0], est.position[1], est.existence))
    return LRFMap(agent, slot, {m: tuple(v) for m, v in sorted(feats.items())})


def _entries_from(lrf: LRFMap, weight: float) -> list[ORFEntry]:
    return [ORFEntry(m, e.x, e.y, weight * e.existence, lrf.slot, lrf.agent)
            for m in sorted(lrf.features) for e in lrf.features[m]]


def bootstrap_orf(lrfs: Iterable[LRFMap]) -> ORFMap:
    """Plain union of the first batch of local maps (reliability = existence)."""
    out: list[ORFEntry] = []
    for lrf in lrfs:
        out.extend(_entries_from(lrf, 1.0))
    return ORFMap(tuple(out))


def weighted_upload(orf: ORFMap, lrf: LRFMap, schedule: WeightSchedule) -> ORFMap:
    """Union with reliability phi(n') * P_e; replaces the uploader's own older entries."""
    kept = tuple(e for e in orf.entries if e.source != lrf.agent or e.source < 0)
    return ORFMap(kept + tuple(_entries_from(lrf, schedule(lrf.slot))))


def prune_orf(orf: ORFMap, threshold: float) -> ORFMap:
    return ORFMap(tuple(e for e in orf.entries if e.reliability >= threshold))


def download(orf: ORFMap, anchors: Iterable[int], n_particles: int, spread: float, priors: Priors,
             rng: np.random.Generator) -> LegacySet:
    """Legacy seeds for the requested anchors: Gaussian clouds around stored positions."""
    out: LegacySet = {}
    for m in sorted(set(anchors)):
        feats = []
        for e in orf.for_anchor(m):
            parts = np.empty((n_particles, 4))
            parts[:, 0] = e.x + spread * rng.standard_normal(n_particles)
            parts[:, 1] = e.y + spread * rng.standard_normal(n_particles)
            parts[:, 2] = rng.uniform(*priors.xi, n_particles)
            parts[:, 3] = rng.uniform(*priors.beta, n_particles)
            feats.append(FeatureBelief(m, 0, parts, np.full(n_particles, 1.0 / n_particles),
                                       float(e.reliability), origin="download"))
        out[m] = feats
    return out


def export_orf(orf: ORFMap) -> str:
    """Line-delimited JSON records in insertion order."""
    return "".join(json.dumps(e.record(), sort_keys=True) + "\n" for e in orf.entries)


def import_orf(text: str) -> ORFMap:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        r = json.loads(line)
        out.append(ORFEntry(int(r["anchor"]), float(r["x"]), float(r["y"]), float(r["reliability"]),
                            int(r["upload_slot"])))
    return ORFMap(tuple(out))


class Cloud:
    """Single logical map with serialized mutation."""

    def __init__(self, schedule: WeightSchedule, p_threshold: float):
        self.schedule = schedule
        self.p_threshold = p_threshold
        self.orf = ORFMap()
        self.log: list[tuple[int, int, str]] = []  # (slot, agent, snapshot)

    def upload(self, lrf: LRFMap) -> None:
        self.orf = prune_orf(weighted_upload(self.orf, lrf, self.schedule), self.p_threshold)
        self.log.append((lrf.slot, lrf.agent, export_orf(self.orf)))

    def snapshot(self) -> ORFMap:
        return self.orf


class ConvergenceMonitor:
    """Fires once the largest per-feature estimate change stays below ``tol``
    for ``window`` consecutive slots (features present in both slots)."""

    def __init__(self, tol: float = 0.1, window: int = 5):
        self.tol = tol
        self.window = window
        self.prev: dict[int, tuple[float, float]] = {}
        self.streak = 0
        self.converged = False

    def observe(self, features) -> bool:
        cur = {f.key: f.position for f in features if f.detected}
        common = cur.keys() & self.prev.keys()
        if common:
            change = max(math.hypot(cur[k][0] - self.prev[k][0], cur[k][1] - self.prev[k][1]) for k in common)
            self.streak = self.streak + 1 if change < self.tol else 0
        else:
            self.streak = 0
        self.prev = cur
        if self.streak >= self.window:
            self.converged = True
        return self.converged


# orchestration ---------------------------------------------------------------

@dataclass
class AgentLog:
    """Per-slot record of one agent within one Monte Carlo run."""

    agent: int
    anchors: tuple[int, ...]
    slots: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    estimate: list = field(default_factory=list)
    alpha_true: float = 0.0
    omega_true: tuple = ()
    alpha_hat: list = field(default_factory=list)
    omega_hat: list = field(default_factory=list)
    detected: list = field(default_factory=list)  # per slot: [(anchor, x, y, xi, beta)]
    visible: list = field(default_factory=list)  # per slot: [(anchor, index, x, y)]
    mospa: list = field(default_factory=list)
    xi_err: list = field(default_factory=list)
    beta_err: list = field(default_factory=list)
    failed: bool = False
    failure: str = ""


@dataclass
class RunResult:
    run: int
    agents: dict
    orf_log: list


def stream(seed: int, run: int, agent: int, slot: int, purpose: int) -> np.random.Generator:
    """Independent, order-free RNG stream for one (run, agent, slot, purpose)."""
    return np.random.default_rng([seed, run, agent, slot, purpose])


PURPOSE_SYNTH, PURPOSE_FILTER, PURPOSE_INIT, PURPOSE_TRUTH, PURPOSE_DOWNLOAD = range(5)


def rss_truth(scenario, agent_id: int, features) -> dict:
    if scenario.biases.rss is not None:
        xi, beta = scenario.biases.rss
        return {(f.anchor, f.index): (xi, beta) for f in features}
    rng = stream(scenario.seed, 0, agent_id, 0, PURPOSE_TRUTH)
    return {(f.anchor, f.index): (float(rng.uniform(*scenario.priors.xi)), float(rng.uniform(*scenario.priors.beta)))
            for f in features}


def _match_rss(log_det, visible, truth_rss, cutoff):
    """Mean |xi| and |beta| errors over position-matched detected features."""
    from scipy.optimize import linear_sum_assignment

    if not log_det or not visible:
        return float("nan"), float("nan")
    e = np.array([[d[1], d[2]] for d in log_det])
    t = np.array([[v[2], v[3]] for v in visible])
    same = np.array([[d[0] == v[0] for v in visible] for d in log_det])
    cost = np.hypot(e[:, None, 0] - t[None, :, 0], e[:, None, 1] - t[None, :, 1])
    cost = np.where(same, cost, 1e6)
    r, c = linear_sum_assignment(cost)
    ok = cost[r, c] < cutoff
    if not np.any(ok):
        return float("nan"), float("nan")
    xi = [abs(log_det[i][3] - truth_rss[(visible[j][0], visible[j][1])][0]) for i, j in zip(r[ok], c[ok])]
    be = [abs(log_det[i][4] - truth_rss[(visible[j][0], visible[j][1])][1]) for i, j in zip(r[ok], c[ok])]
    return float(np.mean(xi)), float(np.mean(be))


def run_schedule(scenario, run: int, crowdsourcing: bool | None = None, baseline: bool = False,
                 agent_ids: Iterable[int] | None = None) -> RunResult:
    """One Monte Carlo run of the frame schedule.

    Per slot, in agent-id order: newly entering agents download (if the cloud
    is non-empty), measurements are synthesized, the filter steps, and a
    converged agent uploads. ``baseline`` pins the bias priors at zero;
    ``scenario.known_biases`` pins them at each agent's true values.
    """
    from .scenario import trajectory  # local import to avoid a cycle

    cs = scenario.crowdsourcing
    crowd = cs.enabled if crowdsourcing is None else crowdsourcing
    plan = scenario.floor_plan()
    pas = [Point2(*a) for a in scenario.anchors]
    truths = enumerate_virtual_anchors(plan, pas)
    noise = scenario.noise_config()
    params: SlamParams = scenario.slam_params()
    selected = set(agent_ids) if agent_ids is not None else None
    specs = [a for a in sorted(scenario.agents, key=lambda a: a.id) if selected is None or a.id in selected]
    if crowd:
        for a in specs:
            if a.upload_slot is not None and a.upload_slot < a.entry_slot:
                raise ValueError(f"agent {a.id}: upload scheduled before entry")
    cloud = Cloud(WeightSchedule(cs.n_ref), cs.p_threshold)
    anchors = scenario.anchor_ids()

    state = {}
    for a in specs:
        traj = trajectory(a, scenario.horizon, params.dt)
        omega_t = scenario.agent_omega(a)
        rss = rss_truth(scenario, a.id, truths)
        biases = BiasTruth(scenario.agent_alpha(a), omega_t, rss)
        enabled = scenario.enabled_for(a)
        log = AgentLog(a.id, anchors, alpha_true=biases.alpha, omega_true=tuple(omega_t[m] for m in anchors))
        state[a.id] = dict(config=a, traj=traj, biases=biases, enabled=enabled, log=log, filter=None,
                           monitor=ConvergenceMonitor(cs.convergence_tol, cs.convergence_window))

    for n in range(1, scenario.horizon + 1):
        for aid in sorted(state):
            st = state[aid]
            a = st["config"]
            log: AgentLog = st["log"]
            if n < a.entry_slot or log.failed:
                continue
            truth = st["traj"][n - a.entry_slot]
            if st["filter"] is None:
                priors = scenario.priors_for((truth.vx, truth.vy))
                rss = scenario.biases.rss or (None, None)
                if baseline:
                    priors = priors.pinned(xi=rss[0], beta=rss[1])
                elif scenario.known_biases:
                    b = st["biases"]
                    known = priors.pinned(b.alpha, [b.omega[m] for m in anchors], rss[0], rss[1])
                    # per-feature RSS truths cannot be pinned; keep their ranges then
                    priors = known if scenario.biases.rss else replace(known, xi=priors.xi, beta=priors.beta)
                st["priors"] = priors
                st["filter"] = SlamAgent((a.waypoints[0][0], a.waypoints[0][1]), anchors, params, priors,
                                         st["enabled"], stream(scenario.seed, run, aid, n, PURPOSE_INIT))
                if crowd and len(cloud.orf):
                    seeds = download(cloud.snapshot(), anchors, params.n_particles, cs.download_spread, priors,
                                     stream(scenario.seed, run, aid, n, PURPOSE_DOWNLOAD))
                    st["filter"].seed_features(seeds)
            agent: SlamAgent = st["filter"]
            pos = Point2(truth.x, truth.y)
            vis = visible_features(pos, plan, truths)
            batch = synthesize_batch(vis, pos, st["biases"], noise, st["enabled"],
                                     stream(scenario.seed, run, aid, n, PURPOSE_SYNTH), slot=n,
                                     roi_radius=scenario.roi_radius)
            try:
                res = agent.step(batch, stream(scenario.seed, run, aid, n, PURPOSE_FILTER), n)
            except DegenerateUpdateError as e:
                log.failed, log.failure = True, f"slot {n}: {e}"
                continue
            det = [f for f in res.features if f.detected]
            visible = [(f.anchor, f.index, f.position.x, f.position.y) for m in sorted(vis) for f in vis[m]]
            log.slots.append(n)
            log.truth.append((truth.x, truth.y))
            log.estimate.append((float(res.state[0]), float(res.state[1])))
            log.alpha_hat.append(res.alpha)
            log.omega_hat.append(tuple(float(w) for w in res.omega))
            log.detected.append([(f.anchor, f.position[0], f.position[1], f.xi, f.beta) for f in det])
            log.visible.append(visible)
            log.mospa.append(ospa([(d[1], d[2]) for d in log.detected[-1]], [(v[2], v[3]) for v in visible],
                                  scenario.metrics.mospa_cutoff, scenario.metrics.mospa_order))
            if Category.RSS in st["enabled"]:
                xe, be = _match_rss(log.detected[-1], visible, st["biases"].rss, 1.0)
            else:
                xe, be = float("nan"), float("nan")
            log.xi_err.append(xe)
            log.beta_err.append(be)
            if crowd:
                converged = st["monitor"].observe(res.features)
                pinned = a.upload_slot is not None and n >= a.upload_slot
                if converged or pinned:
                    cloud.upload(build_lrf(agent.legacy, aid, n, params.unreliability_threshold))
    return RunResult(run, {aid: st["log"] for aid, st in state.items()}, cloud.log)
