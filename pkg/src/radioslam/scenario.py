"""Declarative scenario files (YAML): parsing, validation and serialization.

Every section is optional except ``floor_plan`` and ``anchors``; omitted keys
take the documented defaults. Unknown keys are rejected with the offending
dotted path in the error message.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .geometry import AgentTruth, FloorPlan, InvalidGeometryError
from .measurement import Category, NoiseConfig
from .slam.beliefs import Priors, SlamParams


class ScenarioError(ValueError):
    """Schema or invariant violation in a scenario description."""


@dataclass(frozen=True)
class NoiseSection:
    sigma_aoa_deg: float = 1.0
    sigma_toa_m: float = 0.15
    sigma_rss_db: float = 2.5
    p_detect: float = 0.95
    mu_false: float = 1.0
    rss_support: tuple[float, float] = (-120.0, -20.0)


@dataclass(frozen=True)
class SlamSection:
    p_detect: float = 0.95
    p_survival: float = 0.999
    mu_false: float = 1.0
    mu_new: float = 1e-4
    detection_threshold: float = 0.5
    unreliability_threshold: float = 1e-4
    n_particles: int = 20_000
    sigma_d2: float = 0.0278
    sigma_varpi2: float = 1e-8
    dt: float = 1.0
    motion_noise: str = "isotropic"
    da_max_iters: int = 50
    da_tol: float = 1e-6
    sigma_aoa_deg: float = 1.0
    sigma_toa_m: float = 0.15
    sigma_rss_db: float = 2.5
    resample_fraction: float = 0.5
    alpha_roughening: float = 0.001
    omega_roughening: float = 0.5
    roughening_bandwidth: float = 0.3
    alpha_bandwidth: float = 0.0
    birth_eval_particles: int = 1024


@dataclass(frozen=True)
class PriorSection:
    entrance_radius: float = 0.5
    alpha: tuple[float, float] = (-0.5, 0.5)
    omega: tuple[float, float] = (0.0, 50.0)
    xi: tuple[float, float] = (-45.0, -25.0)
    beta: tuple[float, float] = (2.0, 5.0)
    # "entry": centred on the agent's true entry velocity; "zero": zero mean
    velocity_mean: str = "entry"
    velocity_sigma: float = 0.01


@dataclass(frozen=True)
class BiasSection:
    alpha: float = 0.0
    omega: tuple[float, ...] = (0.0,)
    # None: RSS parameters drawn per agent-feature pair from the prior ranges
    rss: tuple[float, float] | None = None


@dataclass(frozen=True)
class AgentSection:
    id: int
    waypoints: tuple[tuple[float, float], ...]
    entry_slot: int = 1
    speed: float = 0.5
    # corners are replaced by tangent circular arcs of this radius (0: sharp)
    corner_radius: float = 0.0
    measurements: tuple[str, ...] | None = None
    alpha: float | None = None
    omega: tuple[float, ...] | None = None
    upload_slot: int | None = None


@dataclass(frozen=True)
class CrowdsourceSection:
    enabled: bool = False
    n_ref: int = 60
    p_threshold: float = 1e-4
    convergence_tol: float = 0.1
    convergence_window: int = 5
    download_spread: float = 0.2


@dataclass(frozen=True)
class MetricSection:
    mospa_cutoff: float = 10.0
    mospa_order: float = 1.0


@dataclass(frozen=True)
class Scenario:
    walls: tuple[tuple[tuple[float, float], tuple[float, float]], ...]
    anchors: tuple[tuple[float, float], ...]
    agents: tuple[AgentSection, ...]
    name: str = "scenario"
    roi_center: tuple[float, float] = (0.0, 0.0)
    roi_radius: float = 40.0
    horizon: int = 60
    runs: int = 1
    seed: int = 0
    measurements: tuple[str, ...] = ("aoa", "toa")
    known_biases: bool = False
    noise: NoiseSection = NoiseSection()
    slam: SlamSection = SlamSection()
    priors: PriorSection = PriorSection()
    biases: BiasSection = BiasSection()
    crowdsourcing: CrowdsourceSection = CrowdsourceSection()
    metrics: MetricSection = MetricSection()

    # derived views -----------------------------------------------------
    def floor_plan(self) -> FloorPlan:
        return FloorPlan.from_coords(self.walls, self.roi_center, self.roi_radius)

    def anchor_ids(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.anchors) + 1))

    def enabled_for(self, agent: AgentSection) -> frozenset[Category]:
        return Category.parse(agent.measurements or self.measurements)

    def noise_config(self) -> NoiseConfig:
        n = self.noise
        return NoiseConfig(math.radians(n.sigma_aoa_deg), n.sigma_toa_m, n.sigma_rss_db, n.p_detect, n.mu_false,
                           tuple(n.rss_support))

    def slam_params(self) -> SlamParams:
        s = asdict(self.slam)
        s["sigma_aoa"] = math.radians(s.pop("sigma_aoa_deg"))
        s["sigma_toa"] = s.pop("sigma_toa_m")
        s["sigma_rss"] = s.pop("sigma_rss_db")
        return SlamParams(rss_support=tuple(self.noise.rss_support), roi_center=tuple(self.roi_center),
                          roi_radius=self.roi_radius, **s)

    def priors_for(self, entry_velocity) -> Priors:
        p = self.priors
        mean = tuple(float(v) for v in entry_velocity) if p.velocity_mean == "entry" else (0.0, 0.0)
        return Priors(p.entrance_radius, tuple(p.alpha), tuple(p.omega), tuple(p.xi), tuple(p.beta), mean,
                      p.velocity_sigma)

    def agent_alpha(self, agent: AgentSection) -> float:
        return self.biases.alpha if agent.alpha is None else agent.alpha

    def agent_omega(self, agent: AgentSection) -> dict[int, float]:
        vals = self.biases.omega if agent.omega is None else agent.omega
        ids = self.anchor_ids()
        if len(vals) == 1:
            vals = tuple(vals) * len(ids)
        return {m: float(v) for m, v in zip(ids, vals)}

    def with_overrides(self, **kw) -> "Scenario":
        out = replace(self, **kw)
        validate(out)
        return out


def _fillet(wps: list[np.ndarray], radius: float, arc_step: float = 0.05) -> list[np.ndarray]:
    """Polyline with every interior corner replaced by a tangent arc.

    The tangent length is clipped to half of each adjacent segment.
    """
    if radius <= 0 or len(wps) < 3:
        return wps
    out = [wps[0]]
    for a, b, c in zip(wps[:-2], wps[1:-1], wps[2:]):
        u, v = a - b, c - b
        lu, lv = float(np.hypot(*u)), float(np.hypot(*v))
        if lu < 1e-9 or lv < 1e-9:
            out.append(b)
            continue
        u, v = u / lu, v / lv
        half = 0.5 * math.acos(float(np.clip(u @ v, -1.0, 1.0)))
        if half > math.pi / 2 - 1e-6:  # collinear: nothing to round
            out.append(b)
            continue
        tangent = min(radius / math.tan(half), 0.5 * lu, 0.5 * lv)
        r = tangent * math.tan(half)
        p0, p1 = b + u * tangent, b + v * tangent
        bis = (u + v) / np.hypot(*(u + v))
        center = b + bis * (r / math.sin(half))
        t0 = math.atan2(*(p0 - center)[::-1])
        t1 = math.atan2(*(p1 - center)[::-1])
        sweep = (t1 - t0 + math.pi) % (2 * math.pi) - math.pi
        k = max(2, int(math.ceil(abs(sweep) * r / arc_step)))
        for t in np.linspace(t0, t0 + sweep, k + 1):
            out.append(center + r * np.array([math.cos(t), math.sin(t)]))
    out.append(wps[-1])
    return out


def trajectory(agent: AgentSection, horizon: int, dt: float = 1.0) -> list[AgentTruth]:
    """Constant-speed interpolation along the (optionally filleted) waypoint
    path, one state per slot from entry to horizon.

    The agent halts at the last waypoint. Velocity is the displacement to the
    next slot divided by dt.
    """
    wps = _fillet([np.asarray(w, float) for w in agent.waypoints], agent.corner_radius)
    n_slots = horizon - agent.entry_slot + 1
    step = agent.speed * dt
    pts = [wps[0].copy()]
    pos, k = wps[0].copy(), 1
    for _ in range(n_slots):
        rem = step
        while rem > 1e-12 and k < len(wps):
            d = wps[k] - pos
            seg = float(np.hypot(*d))
            if seg <= rem:
                pos, rem, k = wps[k].copy(), rem - seg, k + 1
            else:
                pos, rem = pos + d / seg * rem, 0.0
        pts.append(pos.copy())
    out = []
    for i in range(n_slots):
        v = (pts[i + 1] - pts[i]) / dt
        out.append(AgentTruth(float(pts[i][0]), float(pts[i][1]), float(v[0]), float(v[1]),
                              entry_slot=agent.entry_slot))
    return out


# parsing --------------------------------------------------------------------

_TOP_KEYS = {"name", "floor_plan", "anchors", "agents", "horizon", "runs", "seed", "measurements", "known_biases",
             "noise", "slam", "priors", "biases", "crowdsourcing", "metrics"}
_PLAN_KEYS = {"walls", "roi_center", "roi_radius"}


def _check_keys(d: dict, allowed, where: str):
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected a mapping")
    for k in d:
        if k not in allowed:
            path = f"{where}.{k}" if where else str(k)
            raise ScenarioError(f"unknown key '{path}'")


def _pair(v, where):
    try:
        a, b = v
        return (float(a), float(b))
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: expected a pair of numbers") from None


def _floats(v, where):
    if isinstance(v, (int, float)):
        return (float(v),)
    try:
        return tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: expected a number or list of numbers") from None


def _section(cls, raw, where, convert=None):
    raw = raw or {}
    allowed = {f.name for f in fields(cls)}
    _check_keys(raw, allowed, where)
    vals = dict(raw)
    for k, v in list(vals.items()):
        if convert and k in convert:
            vals[k] = convert[k](v, f"{where}.{k}")
    try:
        return cls(**vals)
    except TypeError as e:
        raise ScenarioError(f"{where}: {e}") from None


def _strs(v, where):
    if isinstance(v, str):
        v = [v]
    try:
        return tuple(str(x).lower() for x in v)
    except TypeError:
        raise ScenarioError(f"{where}: expected a list of category names") from None


def from_dict(raw: dict[str, Any]) -> Scenario:
    _check_keys(raw, _TOP_KEYS, "")
    if "floor_plan" not in raw or "anchors" not in raw:
        raise ScenarioError("missing required key 'floor_plan' or 'anchors'")
    plan = raw["floor_plan"]
    _check_keys(plan, _PLAN_KEYS, "floor_plan")
    walls = tuple((_pair(a, "floor_plan.walls"), _pair(b, "floor_plan.walls")) for a, b in plan.get("walls", []))
    anchors = tuple(_pair(a, "anchors") for a in raw["anchors"])
    agents_raw = raw.get("agents") or []
    agents = []
    for i, a in enumerate(agents_raw):
        where = f"agents[{i}]"
        conv = {
            "waypoints": lambda v, w: tuple(_pair(p, w) for p in v),
            "measurements": lambda v, w: None if v is None else _strs(v, w),
            "omega": lambda v, w: None if v is None else _floats(v, w),
        }
        agents.append(_section(AgentSection, a, where, conv))
    sc = Scenario(
        walls=walls,
        anchors=anchors,
        agents=tuple(agents),
        name=str(raw.get("name", "scenario")),
        roi_center=_pair(plan.get("roi_center", (0.0, 0.0)), "floor_plan.roi_center"),
        roi_radius=float(plan.get("roi_radius", 40.0)),
        horizon=int(raw.get("horizon", 60)),
        runs=int(raw.get("runs", 1)),
        seed=int(raw.get("seed", 0)),
        measurements=_strs(raw.get("measurements", ("aoa", "toa")), "measurements"),
        known_biases=bool(raw.get("known_biases", False)),
        noise=_section(NoiseSection, raw.get("noise"), "noise", {"rss_support": _pair}),
        slam=_section(SlamSection, raw.get("slam"), "slam"),
        priors=_section(PriorSection, raw.get("priors"), "priors",
                        {"alpha": _pair, "omega": _pair, "xi": _pair, "beta": _pair}),
        biases=_section(BiasSection, raw.get("biases"), "biases",
                        {"omega": _floats, "rss": lambda v, w: None if v is None else _pair(v, w)}),
        crowdsourcing=_section(CrowdsourceSection, raw.get("crowdsourcing"), "crowdsourcing"),
        metrics=_section(MetricSection, raw.get("metrics"), "metrics"),
    )
    if not sc.agents:
        # a single stationary agent at the ROI centre
        sc = replace(sc, agents=(AgentSection(1, (sc.roi_center,), 1, 0.0),))
    validate(sc)
    return sc


def validate(sc: Scenario) -> None:
    if sc.horizon < 1:
        raise ScenarioError("horizon must be >= 1")
    if sc.runs < 1:
        raise ScenarioError("runs must be >= 1")
    if sc.seed < 0:
        raise ScenarioError("seed must be non-negative")
    if not sc.anchors:
        raise ScenarioError("at least one anchor is required")
    try:
        plan = sc.floor_plan()
        sc.noise_config()
        sc.slam_params()
        sc.priors_for((0.0, 0.0))
    except (InvalidGeometryError, ValueError) as e:
        raise ScenarioError(str(e)) from None
    if sc.priors.velocity_mean not in ("entry", "zero"):
        raise ScenarioError("priors.velocity_mean must be 'entry' or 'zero'")
    try:
        Category.parse(sc.measurements)
    except (KeyError, ValueError):
        raise ScenarioError(f"measurements: invalid categories {list(sc.measurements)}") from None
    if len(sc.biases.omega) not in (1, len(sc.anchors)):
        raise ScenarioError("biases.omega needs one value or one per anchor")
    ids = set()
    for a in sc.agents:
        if a.id in ids:
            raise ScenarioError(f"duplicate agent id {a.id}")
        ids.add(a.id)
        if a.entry_slot < 1 or a.entry_slot > sc.horizon:
            raise ScenarioError(f"agent {a.id}: entry_slot must lie in [1, horizon]")
        if not a.waypoints:
            raise ScenarioError(f"agent {a.id}: at least one waypoint is required")
        if a.speed < 0 or a.corner_radius < 0:
            raise ScenarioError(f"agent {a.id}: speed and corner_radius must be non-negative")
        if a.upload_slot is not None and not a.entry_slot <= a.upload_slot <= sc.horizon:
            raise ScenarioError(f"agent {a.id}: upload_slot before entry or after horizon")
        if a.measurements is not None:
            try:
                Category.parse(a.measurements)
            except (KeyError, ValueError):
                raise ScenarioError(f"agent {a.id}: invalid measurement categories") from None
        if a.omega is not None and len(a.omega) not in (1, len(sc.anchors)):
            raise ScenarioError(f"agent {a.id}: omega needs one value or one per anchor")
        for w in a.waypoints:
            if np.hypot(w[0] - sc.roi_center[0], w[1] - sc.roi_center[1]) > sc.roi_radius:
                raise ScenarioError(f"agent {a.id}: waypoint {w} outside ROI")
    cs = sc.crowdsourcing
    if cs.n_ref < 1 or cs.convergence_window < 1 or not 0 < cs.p_threshold < 1:
        raise ScenarioError("crowdsourcing: invalid schedule parameters")


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def to_dict(sc: Scenario) -> dict[str, Any]:
    out = {
        "name": sc.name,
        "horizon": sc.horizon,
        "runs": sc.runs,
        "seed": sc.seed,
        "measurements": list(sc.measurements),
        "known_biases": sc.known_biases,
        "floor_plan": {"roi_center": list(sc.roi_center), "roi_radius": sc.roi_radius,
                       "walls": _plain(sc.walls)},
        "anchors": _plain(sc.anchors),
        "agents": [_plain(asdict(a)) for a in sc.agents],
    }
    for name in ("noise", "slam", "priors", "biases", "crowdsourcing", "metrics"):
        out[name] = _plain(asdict(getattr(sc, name)))
    return out


def parse_scenario(path) -> Scenario:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ScenarioError(f"{path}: malformed YAML ({e})") from None
    if raw is None:
        raise ScenarioError(f"{path}: empty scenario file")
    return from_dict(raw)


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(to_dict(sc), sort_keys=False)
