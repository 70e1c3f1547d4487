"""Per-slot BP-SLAM recursion: predict, evaluate, associate, update, manage.

Feature particle p is always paired with agent particle p. Feature weights are
pair weights, so the correlation between a feature and the agent's biases
survives: whenever the agent belief is resampled, every feature is re-indexed
with the same ancestors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import kernels
from ..measurement import SPEED_OF_LIGHT, Category
from .association import AssociationMarginals, associate
from .beliefs import (AgentBelief, DegenerateUpdateError, FeatureBelief, KeyCounter, LegacySet, Priors,
                      SlamParams, init_beliefs)
from .factors import birth_evidence, clutter_density, filter_sigmas, sample_birth
from .resampling import effective_sample_size, systematic_resample
from . import rss as rss_belief

_LOG_C = math.log(SPEED_OF_LIGHT)


def category_flags(enabled) -> int:
    flags = 0
    if Category.AOA in enabled:
        flags |= kernels.AOA_BIT
    if Category.TOA in enabled:
        flags |= kernels.TOA_BIT
    if Category.RSS in enabled:
        flags |= kernels.RSS_BIT
    return flags


def _normalize_log(logw: np.ndarray) -> np.ndarray:
    top = np.max(logw)
    if not np.isfinite(top):
        raise DegenerateUpdateError("all particle weights vanished")
    w = np.exp(logw - top)
    return w / w.sum()


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def predict(belief: AgentBelief, legacy: LegacySet, params: SlamParams, rng: np.random.Generator,
            jitter_rss: bool = True):
    """Constant-velocity prediction of the agent, jitter and survival of features.

    With ``jitter_rss`` off only the position columns are jittered; the RSS
    parameters then carry no information, so this changes nothing downstream.
    """
    n = belief.n
    kin = belief.kinematics @ params.transition_matrix().T
    if params.sigma_d2 > 0:
        sd = math.sqrt(params.sigma_d2)
        if params.motion_noise == "isotropic":
            kin = kin + sd * rng.standard_normal((n, 4))
        else:
            acc = sd * rng.standard_normal((n, 2))
            kin = kin + np.hstack([0.5 * params.dt ** 2 * acc, params.dt * acc])
    out_belief = replace(belief, kinematics=kin)
    jitter = math.sqrt(params.sigma_varpi2)
    cols = 4 if jitter_rss else 2
    total = sum(len(v) for v in legacy.values())
    noise = None
    if jitter > 0 and total:
        noise = rng.standard_normal((total, n, cols), dtype=np.float32)
    out_legacy: LegacySet = {}
    i = 0
    for m in sorted(legacy):
        feats = []
        for f in legacy[m]:
            parts = f.particles
            if noise is not None:
                parts = parts.copy()
                parts[:, :cols] += jitter * noise[i]
            i += 1
            cov = f.rss_cov
            if cov is not None and jitter_rss:
                cov = cov + params.sigma_varpi2 * np.eye(2)
            feats.append(replace(f, particles=parts, existence=f.existence * params.p_survival, rss_cov=cov))
        out_legacy[m] = feats
    return out_belief, out_legacy


@dataclass
class AnchorEvaluation:
    anchor: int
    z: np.ndarray
    factors: np.ndarray  # (K, J, N) legacy factor per particle pair
    beta: np.ndarray  # (K, J+1)
    lam: np.ndarray  # (J,)
    predicted_existence: np.ndarray  # (K,)


def evaluate_anchor(belief: AgentBelief, features, z: np.ndarray, anchor: int, params: SlamParams,
                    priors: Priors, enabled, rng: np.random.Generator) -> AnchorEvaluation:
    z = np.asarray(z, float).reshape(-1, 3)
    J, K, N = z.shape[0], len(features), belief.n
    omega = belief.omega_of(anchor)
    pos = belief.kinematics[:, :2]
    meas = z.copy()
    meas[:, 1] *= SPEED_OF_LIGHT
    meas[~np.isfinite(meas)] = 0.0
    flags = category_flags(enabled) & ~kernels.RSS_BIT
    log_scale = math.log(params.p_detect) - math.log(params.mu_false * clutter_density(params, enabled))
    if Category.TOA in enabled:
        log_scale += _LOG_C
    sa, st, sr = filter_sigmas(params)
    pe = np.array([f.existence for f in features], float)
    if K:
        feats = np.stack([f.particles for f in features])
        G = kernels.legacy_factors(pos, belief.alpha, omega, feats, meas, flags, sa, st, sr, log_scale)
        if Category.RSS in enabled and J:
            for k, f in enumerate(features):
                h = rss_belief.design(np.hypot(feats[k, :, 0] - pos[:, 0], feats[k, :, 1] - pos[:, 1]))
                mean, cov = rss_belief.moments(f, priors)
                for j in range(J):
                    G[k, j] *= np.exp(rss_belief.log_predictive(meas[j, 2], h, mean, cov, sr))
        W = np.stack([f.weights for f in features])
        beta = np.empty((K, J + 1))
        beta[:, 0] = (1.0 - pe) + pe * (1.0 - params.p_detect)
        beta[:, 1:] = pe[:, None] * np.einsum("kjn,kn->kj", G, W)
    else:
        G = np.zeros((0, J, N))
        beta = np.zeros((0, J + 1))

    n_eval = min(N, params.birth_eval_particles)
    idx = np.arange(0, N, max(1, N // n_eval))[:n_eval]
    lam = np.zeros(J)
    for j in range(J):
        _, logw = sample_birth(z[j], pos[idx], belief.alpha[idx], omega[idx], params, priors, enabled, rng)
        lam[j] = birth_evidence(logw, belief.weights[idx], params, enabled)
    return AnchorEvaluation(anchor, z, G, beta, lam, pe)


@dataclass
class UpdateReport:
    newborn: int = 0
    resampled: bool = False
    da_nonconverged: int = 0
    da_iterations: list = field(default_factory=list)


def update(belief: AgentBelief, legacy: LegacySet, evaluations: dict, marginals: dict, params: SlamParams,
           priors: Priors, enabled, rng: np.random.Generator, slot: int, keys: KeyCounter,
           report: UpdateReport | None = None):
    """Fuse association-weighted factors into agent and feature beliefs, append
    admitted newborns and resample when the effective sample size is low."""
    report = report if report is not None else UpdateReport()
    N = belief.n
    log_gamma_total = np.zeros(N)
    per_feature = {}
    for m in sorted(evaluations):
        ev: AnchorEvaluation = evaluations[m]
        mg: AssociationMarginals = marginals[m]
        if ev.factors.shape[0] == 0:
            continue
        S = (1.0 - params.p_detect) + np.einsum("kjn,kj->kn", ev.factors, mg.to_legacy)
        pe = ev.predicted_existence[:, None]
        log_gamma = _log((1.0 - pe) + pe * S)
        log_gamma_total += log_gamma.sum(axis=0)
        per_feature[m] = (S, log_gamma)

    agent_w = _normalize_log(_log(belief.weights) + log_gamma_total)

    out: LegacySet = {}
    for m in sorted(legacy):
        feats = []
        S_all, lg_all = per_feature.get(m, (None, None))
        for k, f in enumerate(legacy[m]):
            if S_all is None:
                # no evaluation for this anchor: nothing observed, only other anchors' information
                w = _normalize_log(_log(f.weights) + log_gamma_total)
                feats.append(replace(f, weights=w))
                continue
            S, lg = S_all[k], lg_all[k]
            pe_pred = f.existence
            a_k = float(f.weights @ S)
            num = pe_pred * a_k
            pe_post = num / (num + 1.0 - pe_pred) if num + 1.0 - pe_pred > 0 else 0.0
            w = _normalize_log(_log(f.weights) + _log(S) + log_gamma_total - lg)
            f = replace(f, weights=w, existence=float(min(max(pe_post, 0.0), 1.0)))
            if Category.RSS in enabled:
                f = _assimilate_rss(f, belief, marginals[m].legacy[k], evaluations[m].z[:, 2], params, priors)
            feats.append(f)
        out[m] = feats

    pos = belief.kinematics[:, :2]
    for m in sorted(evaluations):
        ev, mg = evaluations[m], marginals[m]
        report.da_iterations.append(mg.iterations)
        if not mg.converged:
            report.da_nonconverged += 1
        omega = belief.omega_of(m)
        for j in range(ev.z.shape[0]):
            pe_new = float(mg.new[j])
            if not pe_new > params.unreliability_threshold:
                continue
            parts, logw = sample_birth(ev.z[j], pos, belief.alpha, omega, params, priors, enabled, rng)
            if not np.any(np.isfinite(logw)):
                continue
            w = _normalize_log(_log(belief.weights) + logw + log_gamma_total)
            born = FeatureBelief(m, keys.next(), parts, w, pe_new, birth_slot=slot)
            if Category.RSS in enabled:
                born = _assimilate_rss(born, belief, np.array([0.0, 1.0]), ev.z[j:j + 1, 2], params, priors)
            out.setdefault(m, []).append(born)
            report.newborn += 1

    new_belief = replace(belief, weights=agent_w)
    new_belief, out = resample_joint(new_belief, out, params, rng, report, enabled)
    return new_belief, out


def _assimilate_rss(f: FeatureBelief, belief: AgentBelief, probs, z_rss, params: SlamParams, priors: Priors):
    pos = belief.kinematics[:, :2]
    dist = np.hypot(f.particles[:, 0] - pos[:, 0], f.particles[:, 1] - pos[:, 1])
    mean, cov = rss_belief.moments(f, priors)
    mean, cov = rss_belief.assimilate(mean, cov, dist, f.weights, z_rss, probs, params.sigma_rss)
    return replace(f, rss_mean=mean, rss_cov=cov)


def resample_joint(belief: AgentBelief, legacy: LegacySet, params: SlamParams, rng: np.random.Generator,
                   report: UpdateReport | None = None, enabled=(Category.AOA, Category.TOA)):
    """ESS-triggered agent resampling that carries the paired feature particles along.

    Clock roughening slides each paired feature particle along the range ridge:
    shifting omega by d pushes the feature d further from its agent particle,
    so the predicted TOA of every pair is unchanged by the jitter.
    """
    if effective_sample_size(belief.weights) >= params.resample_fraction * belief.n:
        return belief, legacy
    enabled = frozenset(enabled)
    old_w = belief.weights
    n = belief.n
    anc = systematic_resample(old_w, rng)
    kin = belief.kinematics[anc]
    alpha = belief.alpha[anc]
    omega = belief.omega[anc]
    push = np.zeros((n, omega.shape[1]))
    if belief.estimate_alpha and max(params.alpha_roughening, params.alpha_bandwidth) > 0 and Category.AOA in enabled:
        alpha = alpha + _bandwidth(belief.alpha, old_w, params.alpha_bandwidth,
                                   params.alpha_roughening) * rng.standard_normal(n)
    if belief.estimate_omega and max(params.omega_roughening, params.roughening_bandwidth) > 0 and Category.TOA in enabled:
        push = _bandwidth(belief.omega, old_w, params.roughening_bandwidth,
                          params.omega_roughening) * rng.standard_normal(omega.shape)
        omega = omega + push
    res = replace(belief, kinematics=kin, alpha=alpha, omega=omega, weights=np.full(n, 1.0 / n))
    if report is not None:
        report.resampled = True
    ratio_den = old_w[anc]
    out: LegacySet = {}
    for m in sorted(legacy):
        col = belief.anchors.index(m) if m in belief.anchors else None
        feats = []
        for f in legacy[m]:
            w = f.weights[anc] / ratio_den
            total = w.sum()
            if total > 0 and np.isfinite(total):
                slide = push[:, col] if col is not None and push[:, col].any() else None
                parts = kernels.gather_slide(f.particles, anc, kin, slide)
                feats.append(replace(f, particles=parts, weights=w / total))
            else:
                # no mass on the surviving pairs: keep the feature marginal, drop the pairing
                own = systematic_resample(f.weights, rng)
                feats.append(replace(f, particles=f.particles[own], weights=np.full(n, 1.0 / n)))
        out[m] = feats
    return res, out


def _bandwidth(values: np.ndarray, weights: np.ndarray, factor: float, floor: float):
    """Kernel width per column: ``factor`` times the weighted std, at least ``floor``."""
    mean = weights @ values
    std = np.sqrt(np.maximum(weights @ (values - mean) ** 2, 0.0))
    return np.maximum(factor * std, floor)


def estimate_agent(belief: AgentBelief):
    w = belief.weights
    return w @ belief.kinematics, float(w @ belief.alpha), w @ belief.omega


@dataclass(frozen=True)
class FeatureEstimate:
    anchor: int
    key: int
    position: tuple[float, float]
    existence: float
    xi: float
    beta: float
    detected: bool


def estimate_features(legacy: LegacySet) -> list[FeatureEstimate]:
    out = []
    for m in sorted(legacy):
        for f in legacy[m]:
            if f.existence <= 0.0:
                continue
            mean = f.weights @ f.particles
            xi, beta = (mean[2], mean[3]) if f.rss_mean is None else f.rss_mean
            out.append(FeatureEstimate(m, f.key, (float(mean[0]), float(mean[1])), float(f.existence),
                                       float(xi), float(beta), bool(f.detected)))
    return out


def manage_features(legacy: LegacySet, params: SlamParams) -> LegacySet:
    out: LegacySet = {}
    for m in sorted(legacy):
        out[m] = [replace(f, detected=f.existence >= params.detection_threshold)
                  for f in legacy[m] if f.existence >= params.unreliability_threshold]
    return out


@dataclass
class SlotResult:
    slot: int
    state: np.ndarray
    alpha: float
    omega: np.ndarray
    features: list[FeatureEstimate]
    report: UpdateReport


class SlamAgent:
    """One agent's BP-SLAM filter."""

    def __init__(self, entrance, anchors, params: SlamParams, priors: Priors, enabled, rng: np.random.Generator):
        self.params = params
        self.priors = priors
        self.enabled = frozenset(enabled)
        self.belief, self.legacy = init_beliefs(entrance, priors, params, anchors, rng)
        self.keys = KeyCounter()
        self._started = False  # the prior already describes the entry slot

    @property
    def anchors(self):
        return self.belief.anchors

    def seed_features(self, seeds: LegacySet):
        """Append downloaded features (already built as FeatureBelief seeds)."""
        for m, feats in seeds.items():
            if m not in self.legacy:
                continue
            for f in feats:
                self.legacy[m].append(replace(f, key=self.keys.next()))

    def step(self, batch, rng: np.random.Generator, slot: int) -> SlotResult:
        p = self.params
        if self._started:
            belief, legacy = predict(self.belief, self.legacy, p, rng, jitter_rss=Category.RSS in self.enabled)
        else:
            belief, legacy = self.belief, self.legacy
            self._started = True
        evaluations, marginals = {}, {}
        for m in belief.anchors:
            z = batch.rows.get(m, np.zeros((0, 3))) if batch is not None else np.zeros((0, 3))
            ev = evaluate_anchor(belief, legacy.get(m, []), z, m, p, self.priors, self.enabled, rng)
            evaluations[m] = ev
            marginals[m] = associate(ev.beta, ev.lam, p.da_max_iters, p.da_tol)
        report = UpdateReport()
        belief, legacy = update(belief, legacy, evaluations, marginals, p, self.priors, self.enabled, rng,
                                slot, self.keys, report)
        legacy = manage_features(legacy, p)
        self.belief, self.legacy = belief, legacy
        u, a, w = estimate_agent(belief)
        return SlotResult(slot, u, a, w, estimate_features(legacy), report)
