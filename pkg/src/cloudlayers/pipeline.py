"""Per-frame orchestration: features -> mixture fits under both hypotheses
-> weighted flow -> velocity mixtures -> scoring -> sequential detection.

Model ids name a temperature component (whose posteriors weight the flow
solver) and one or more velocity components fitted on the merged flow field.
Coupled table rows (e.g. a joint Gaussian over temperature and velocity) are
realized factorized, since the temperature mixture must exist before any
velocity feature does.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import flow as flow_mod
from . import hmm as hmm_mod
from . import mixtures, selection
from .imaging import normalize_beta, normalize_gamma


class InsufficientMaskError(ValueError):
    """Raised when a frame has fewer masked pixels than one solver window."""


@dataclass(frozen=True)
class ModelSpec:
    temperature: tuple          # (feature, family kind)
    velocity: tuple             # ((feature, kind), ...)


MODEL_ZOO = {
    "beta_T+vm_phi": ModelSpec(("tbar", "beta"), (("phi", "von_mises"),)),
    "beta_T+gauss_uv": ModelSpec(("tbar", "beta"), (("uv", "gaussian"),)),
    "beta_T+gamma_r": ModelSpec(("tbar", "beta"), (("r", "gamma"),)),
    "beta_T+vm_phi+gamma_r": ModelSpec(("tbar", "beta"),
                                       (("phi", "von_mises"), ("r", "gamma"))),
    "gamma_T+vm_phi": ModelSpec(("ttilde", "gamma"), (("phi", "von_mises"),)),
    "gamma_T+gauss_uv": ModelSpec(("ttilde", "gamma"), (("uv", "gaussian"),)),
    "gamma_T+gamma_r": ModelSpec(("ttilde", "gamma"), (("r", "gamma"),)),
    "gauss_T+vm_phi": ModelSpec(("t", "gaussian"), (("phi", "von_mises"),)),
    "gauss_T_uv": ModelSpec(("t", "gaussian"), (("uv", "gaussian"),)),
    "bga_T_r+vm_phi": ModelSpec(("ttilde", "gamma"),
                                (("ttilde_r", "bivariate_gamma"),
                                 ("phi", "von_mises"))),
}


@dataclass(frozen=True)
class PipelineConfig:
    """Defaults follow the best cross-validated factorized model row."""

    model: str = "beta_T+vm_phi"
    alpha0: float = 1.0       # Dirichlet prior, temperature component
    alpha1: float = 10.0      # Dirichlet prior, velocity component
    hmm_beta: float = 650.0
    wlk: flow_mod.WlkConfig = field(default_factory=flow_mod.WlkConfig)
    restarts: int = 3
    seed: int = 0
    eps: float = 1e-6
    init_l: int = 1

    def __post_init__(self):
        if self.model not in MODEL_ZOO:
            raise ValueError(
                f"unknown model {self.model!r}; valid ids: "
                + ", ".join(sorted(MODEL_ZOO)))
        if self.alpha0 < 1 or self.alpha1 < 1:
            raise ValueError("Dirichlet alphas must be >= 1")
        if self.init_l not in (1, 2):
            raise ValueError("init_l must be 1 or 2")


@dataclass
class DetectionRecord:
    t: int
    chosen_l: int
    scores: list                 # HypothesisScore per hypothesis
    metric_reports: list         # MetricReport per hypothesis
    fits: dict                   # JSON summaries of the fitted mixtures
    flow_summary: dict
    flags: dict
    error: str = None

    def to_json_dict(self):
        return {
            "t": self.t,
            "chosen_l": self.chosen_l,
            "scores": [s.to_json_dict() for s in self.scores],
            "metrics": [m.to_json_dict() for m in self.metric_reports],
            "fits": self.fits,
            "flow_summary": self.flow_summary,
            "flags": self.flags,
            "error": self.error,
        }

    def to_json_line(self):
        return json.dumps(self.to_json_dict(), sort_keys=True)


def _temperature_features(frame, mask, cfg):
    feat, kind = MODEL_ZOO[cfg.model].temperature
    raw = frame.temperatures[mask.values]
    if feat == "tbar":
        values = normalize_beta(frame, mask, cfg.eps)
    elif feat == "ttilde":
        values = normalize_gamma(frame, mask, cfg.eps)
    else:
        values = raw
    return {feat: values, "_raw_temp": raw}


def _velocity_features(field, mask, temp_features, cfg, model):
    u = field.u[mask.values]
    v = field.v[mask.values]
    r = np.maximum(np.hypot(u, v), cfg.eps)
    feats = {"uv": np.column_stack([u, v]), "r": r,
             "phi": np.arctan2(u, v)}
    if any(f == "ttilde_r" for f, _ in model.velocity):
        feats["ttilde_r"] = np.column_stack([temp_features["ttilde"], r])
    return feats


def _fit_hypothesis_seed(base_seed, t, l, component):
    ss = np.random.SeedSequence(entropy=base_seed,
                                spawn_key=(t, l, component))
    return ss.generate_state(1)[0]


def process_frame(prev, prev_mask, cur, cur_mask, state, cfg):
    """Detection for the transition prev -> cur; threads the HMM state."""
    model = MODEL_ZOO[cfg.model]
    w_full = cfg.wlk.window_width
    if prev_mask.n_cloud < w_full * w_full:
        raise InsufficientMaskError(
            f"frame {prev.index}: {prev_mask.n_cloud} masked pixels < "
            f"{w_full * w_full}")

    temp_feats = _temperature_features(prev, prev_mask, cfg)
    raw_temp = temp_feats["_raw_temp"]
    t_feat, t_kind = model.temperature

    flags = {"degenerate_restarts": 0, "singular_pixels": 0,
             "empty_windows": 0, "flagged_rows": 0}
    intens_prev = flow_mod.intensity_image(prev, prev_mask)
    intens_cur = flow_mod.intensity_image(cur, cur_mask)
    deriv = flow_mod.derivatives(intens_prev, intens_cur, cfg.wlk.sigma)
    mask_grid = prev_mask.values.astype(float)

    scores, reports, fit_dumps, flow_summaries = [], [], {}, {}
    failed = {}
    for l in (1, 2):
        try:
            tspec = mixtures.MixtureSpec(n_clusters=l,
                                         components=((t_feat, t_kind),),
                                         dirichlet_alpha=(cfg.alpha0,) * l)
            tfit = mixtures.fit(temp_feats, tspec,
                                init_seed=_fit_hypothesis_seed(cfg.seed, prev.index, l, 0),
                                restarts=cfg.restarts)
            gsum = tfit.responsibilities.sum(axis=0)
            means = (tfit.responsibilities.T @ raw_temp) / gsum
            tfit = mixtures.resolve_labels(tfit, means)

            if l == 1:
                weights = [mask_grid]
            else:
                weights = []
                for c in range(2):
                    g = np.zeros(mask_grid.shape)
                    g[prev_mask.values] = tfit.responsibilities[:, c]
                    weights.append(g)
            fields, stats = flow_mod.wlk_solve(deriv, weights, cfg.wlk)
            merged = flow_mod.merge_layers(fields, weights)
            merged = flow_mod.FlowField(u=merged.u * mask_grid,
                                        v=merged.v * mask_grid)
            for st in stats:
                flags["singular_pixels"] += st.singular_pixels

            vel_feats = _velocity_features(merged, prev_mask, temp_feats,
                                           cfg, model)
            vspec = mixtures.MixtureSpec(n_clusters=l,
                                         components=model.velocity,
                                         dirichlet_alpha=(cfg.alpha1,) * l)
            vfit = mixtures.fit(vel_feats, vspec,
                                init_seed=_fit_hypothesis_seed(cfg.seed, prev.index, l, 1),
                                restarts=cfg.restarts)
            flags["flagged_rows"] += tfit.flagged_rows + vfit.flagged_rows

            posterior_sum = tfit.q + vfit.q
            scores.append(hmm_mod.score_from_sum(l, posterior_sum, state))
            tm, vm = selection.metrics(tfit), selection.metrics(vfit)
            reports.append(selection.MetricReport(
                log_q=tm.log_q + vm.log_q,
                n_params=tm.n_params + vm.n_params,
                n=tm.n,
                entropy=tm.entropy + vm.entropy,
                bic=tm.bic + vm.bic, aic=tm.aic + vm.aic,
                clc=tm.clc + vm.clc, icl=tm.icl + vm.icl))
            fit_dumps[f"L{l}"] = {"temperature": tfit.to_json_dict(),
                                  "velocity": vfit.to_json_dict()}
            mu = merged.u[prev_mask.values]
            mv = merged.v[prev_mask.values]
            flow_summaries[f"L{l}"] = {
                "mean_u": float(mu.mean()), "mean_v": float(mv.mean()),
                "median_u": float(np.median(mu)),
                "median_v": float(np.median(mv)),
            }
        except mixtures.FitError as exc:
            failed[l] = str(exc)
            scores.append(hmm_mod.HypothesisScore(
                l=l, posterior_sum=-np.inf,
                psi=hmm_mod.psi(l, state.previous_l, state.beta),
                total=-np.inf))
            flags["degenerate_restarts"] += 1

    if len(failed) == 2:
        raise mixtures.FitError("both hypotheses failed: " + str(failed))
    chosen, state = hmm_mod.step(scores, state, t=prev.index)
    return DetectionRecord(
        t=prev.index, chosen_l=chosen, scores=scores,
        metric_reports=reports, fits=fit_dumps,
        flow_summary=flow_summaries, flags=flags,
        error=("; ".join(f"L{l}: {m}" for l, m in failed.items()) or None))


def process_sequence(sequence, cfg):
    """Records for frames 0..T-2 (each scores the transition t -> t+1);
    the HMM state is threaded sequentially and failed frames leave it
    unchanged."""
    if len(sequence) < 2:
        raise ValueError("a sequence needs at least 2 frames")
    state = hmm_mod.HmmState(previous_l=cfg.init_l, beta=cfg.hmm_beta)
    records = []
    for (prev, prev_mask), (cur, cur_mask) in zip(sequence, sequence[1:]):
        try:
            rec = process_frame(prev, prev_mask, cur, cur_mask, state, cfg)
        except (InsufficientMaskError, mixtures.FitError,
                ValueError) as exc:
            rec = DetectionRecord(
                t=prev.index, chosen_l=state.previous_l, scores=[],
                metric_reports=[], fits={}, flow_summary={},
                flags={"frame_failed": True}, error=str(exc))
        records.append(rec)
    return records
