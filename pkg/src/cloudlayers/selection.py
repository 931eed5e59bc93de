"""Bayesian model-selection metrics over fitted mixtures.

The hard-assignment complete-data log-likelihood log Q-hat (argmax-gamma
assignments) feeds BIC/AIC; the soft EM objective is reported separately on
the fit itself. The mixture entropy H = sum gamma log gamma is <= 0 by
construction; CLC and ICL use its magnitude as the penalty so that higher
assignment uncertainty worsens both criteria. Lower is better for every
criterion except ML (higher log Q-hat wins).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CRITERIA = ("ml", "bic", "aic", "clc", "icl")

_PARAMS_PER_FAMILY = {
    "gamma": 2,
    "beta": 2,
    "von_mises": 2,
    "bivariate_gamma": 3,
}


@dataclass(frozen=True)
class MetricReport:
    log_q: float        # hard-assignment complete-data log-likelihood
    n_params: int       # free parameter count
    n: int              # sample count
    entropy: float      # raw H = sum gamma log gamma, <= 0
    bic: float
    aic: float
    clc: float
    icl: float

    def to_json_dict(self):
        return {k: (int(v) if isinstance(v, int) else float(v))
                for k, v in vars(self).items()}


def _family_param_count(kind, dim):
    if kind == "gaussian":
        return dim + dim * (dim + 1) // 2
    return _PARAMS_PER_FAMILY[kind]


def parameter_count(spec, gaussian_dims=None):
    """Free parameters: per-cluster family parameters plus L - 1 weights.

    ``gaussian_dims`` maps feature name -> dimension for Gaussian components
    (defaults to 1).
    """
    gaussian_dims = gaussian_dims or {}
    per_cluster = sum(_family_param_count(kind, gaussian_dims.get(fname, 1))
                      for fname, kind in spec.components)
    return spec.n_clusters * per_cluster + (spec.n_clusters - 1)


def count_from_fit(mixture_fit):
    dims = {fname: p.mean.size
            for (fname, kind), p in zip(mixture_fit.spec.components,
                                        mixture_fit.params[0])
            if kind == "gaussian"}
    return parameter_count(mixture_fit.spec, dims)


def entropy(gamma):
    """H = sum_i sum_l gamma log gamma with 0 log 0 = 0; always <= 0."""
    g = np.asarray(gamma, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(g > 0, g * np.log(np.where(g > 0, g, 1.0)), 0.0)
    return float(terms.sum())


def hard_log_likelihood(mixture_fit):
    """log Q-hat: complete-data log-likelihood under argmax assignments."""
    z = np.argmax(mixture_fit.responsibilities, axis=1)
    rows = np.arange(z.size)
    return float(np.sum(np.log(mixture_fit.weights[z])
                        + mixture_fit.log_dens[rows, z]))


def metrics(mixture_fit):
    """MetricReport for one fit: BIC, AIC, CLC, ICL and friends."""
    log_q = hard_log_likelihood(mixture_fit)
    lam = count_from_fit(mixture_fit)
    n = mixture_fit.responsibilities.shape[0]
    h = entropy(mixture_fit.responsibilities)
    bic = lam * math.log(n) - 2.0 * log_q
    aic = 2.0 * lam - 2.0 * log_q
    clc = 2.0 * abs(h) - 2.0 * log_q
    icl = bic + 2.0 * abs(h)
    return MetricReport(log_q=log_q, n_params=lam, n=n, entropy=h,
                        bic=bic, aic=aic, clc=clc, icl=icl)


def select(reports, criterion):
    """Chosen cluster count from per-L reports (ordered L = 1, 2, ...).

    Argmin of the criterion value (argmax of log Q-hat for ML); ties go to
    the smaller L.
    """
    criterion = criterion.lower()
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}")
    if criterion == "ml":
        values = [-r.log_q for r in reports]
    else:
        values = [getattr(r, criterion) for r in reports]
    best = min(range(len(values)), key=lambda i: (values[i], i))
    return best + 1
