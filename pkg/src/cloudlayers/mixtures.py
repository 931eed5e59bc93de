"""MAP-EM engine over five likelihood families.

A mixture is described by a :class:`MixtureSpec`: L clusters, a list of
(feature name, family) components whose log-likelihoods add up (factorized
likelihood), and a Dirichlet prior on the weights. The E-step is computed in
the log domain; M-steps are closed form for Gaussians and projected gradient
ascent in log-parameter space (tanh-rescaled mean for Von Mises) everywhere
else, with sufficient statistics so inner iterations cost O(1).

The surrogate objective recorded per iteration is

    Q = sum_i sum_l gamma_il [log pi_l + log p(x_i | theta_l)]
        + sum_l (alpha_l - 1) log pi_l

i.e. the expected complete-data log-likelihood plus the (unnormalized)
Dirichlet log-prior, which vanishes exactly when all alpha_l = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln as _lgamma, ive as _ive, psi as _psi

from .numerics import (MIN_ARG, PARAM_CEIL, bessel_i_ratio, clamp_positive,
                       digamma, log_bessel_i0, log_gamma)


def _log_i0(k):
    return math.log(float(_ive(0, k))) + k


def _i_ratio(k):
    return float(_ive(1, k)) / float(_ive(0, k))

LOG_2PI = math.log(2.0 * math.pi)


class FitError(RuntimeError):
    """Raised when every restart of an EM fit degenerates."""


class _EmptyClusterError(RuntimeError):
    """Internal: a cluster lost all responsibility mass."""


# ---------------------------------------------------------------------------
# Family parameters

@dataclass(frozen=True)
class GammaParams:
    alpha: float
    beta: float  # scale: density carries exp(-x / beta)

    kind = "gamma"


@dataclass(frozen=True)
class BivariateGammaParams:
    alpha: float
    beta: float
    a: float

    kind = "bivariate_gamma"


@dataclass(frozen=True)
class VonMisesParams:
    mu: float
    kappa: float

    kind = "von_mises"


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    kind = "beta"


@dataclass(frozen=True)
class GaussianParams:
    mean: np.ndarray
    cov: np.ndarray

    kind = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, float)))
        object.__setattr__(self, "cov", np.atleast_2d(np.asarray(self.cov, float)))


def _as_columns(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


# ---------------------------------------------------------------------------
# Log-densities and their parameter gradients

def log_pdf(params, x):
    """Per-sample log density of one family; raises on support violations."""
    if params.kind == "gamma":
        x = np.asarray(x, float)
        if np.any(x <= 0):
            raise ValueError("gamma support violation: x must be > 0")
        a, b = params.alpha, params.beta
        return (a - 1) * np.log(x) - x / b - a * math.log(b) - log_gamma(a)
    if params.kind == "bivariate_gamma":
        xy = _as_columns(x)
        if np.any(xy <= 0):
            raise ValueError("bivariate gamma support violation: x, y must be > 0")
        xv, yv = xy[:, 0], xy[:, 1]
        a, b, c = params.alpha, params.beta, params.a
        return (a * math.log(b) + (a + c - 1) * np.log(xv) + (c - 1) * np.log(yv)
                - b * xv - xv * yv - log_gamma(a) - log_gamma(c))
    if params.kind == "von_mises":
        x = np.asarray(x, float)
        mu, k = params.mu, params.kappa
        return k * np.cos(x - mu) - LOG_2PI - log_bessel_i0(k)
    if params.kind == "beta":
        x = np.asarray(x, float)
        if np.any(x <= 0) or np.any(x >= 1):
            raise ValueError("beta support violation: x must lie in (0, 1)")
        a, b = params.alpha, params.beta
        log_b = log_gamma(a) + log_gamma(b) - log_gamma(a + b)
        return (a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - log_b
    if params.kind == "gaussian":
        xs = _as_columns(x)
        d = params.mean.size
        chol = np.linalg.cholesky(params.cov)
        diff = xs - params.mean
        sol = np.linalg.solve(chol, diff.T)
        maha = np.sum(sol * sol, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        return -0.5 * (d * LOG_2PI + logdet + maha)
    raise ValueError(f"unknown family {params.kind!r}")


def log_pdf_gradient(params, x):
    """Per-sample gradient of log_pdf w.r.t. the family parameters.

    Column order matches the dataclass field order. Gaussians use a
    closed-form M-step and are not part of the gradient path.
    """
    if params.kind == "gamma":
        x = np.asarray(x, float)
        a, b = params.alpha, params.beta
        return np.column_stack([
            np.log(x) - math.log(b) - digamma(a),
            (x / b - a) / b,
        ])
    if params.kind == "bivariate_gamma":
        xy = _as_columns(x)
        xv, yv = xy[:, 0], xy[:, 1]
        a, b, c = params.alpha, params.beta, params.a
        return np.column_stack([
            math.log(b) + np.log(xv) - digamma(a),
            a / b - xv,
            np.log(xv) + np.log(yv) - digamma(c),
        ])
    if params.kind == "von_mises":
        x = np.asarray(x, float)
        mu, k = params.mu, params.kappa
        return np.column_stack([
            k * np.sin(x - mu),
            np.cos(x - mu) - bessel_i_ratio(k),
        ])
    if params.kind == "beta":
        x = np.asarray(x, float)
        a, b = params.alpha, params.beta
        dab = digamma(a + b)
        return np.column_stack([
            np.log(x) - digamma(a) + dab,
            np.log1p(-x) - digamma(b) + dab,
        ])
    raise NotImplementedError(f"no analytic gradient path for {params.kind!r}")


# ---------------------------------------------------------------------------
# Sufficient statistics and weighted objectives for the gradient M-step

def _suff_stats(kind, x, g):
    if kind == "gamma":
        return (g.sum(), g @ np.log(x), g @ x)
    if kind == "beta":
        return (g.sum(), g @ np.log(x), g @ np.log1p(-x))
    if kind == "von_mises":
        return (g.sum(), g @ np.cos(x), g @ np.sin(x))
    if kind == "bivariate_gamma":
        xy = _as_columns(x)
        xv, yv = xy[:, 0], xy[:, 1]
        return (g.sum(), g @ np.log(xv), g @ np.log(yv), g @ xv, g @ (xv * yv))
    raise ValueError(kind)


def _obj_grad(kind, p, stats):
    """Per-unit-mass weighted log-likelihood and gradient w.r.t. the natural
    parameters (normalizing by sum(gamma) keeps the gradient-norm stopping
    rule scale-free)."""
    if kind == "gamma":
        s0, slx, sx = stats
        a, b = p
        obj = (a - 1) * slx - sx / b - s0 * (a * math.log(b) + float(_lgamma(a)))
        grad = np.array([slx - s0 * (math.log(b) + float(_psi(a))),
                         (sx / b - s0 * a) / b])
    elif kind == "beta":
        s0, slx, sl1 = stats
        a, b = p
        log_b = float(_lgamma(a) + _lgamma(b) - _lgamma(a + b))
        obj = (a - 1) * slx + (b - 1) * sl1 - s0 * log_b
        dab = float(_psi(a + b))
        grad = np.array([slx - s0 * (float(_psi(a)) - dab),
                         sl1 - s0 * (float(_psi(b)) - dab)])
    elif kind == "von_mises":
        s0, sc, ss = stats
        mu, k = p
        proj = sc * math.cos(mu) + ss * math.sin(mu)
        obj = k * proj - s0 * (LOG_2PI + _log_i0(k))
        grad = np.array([k * (ss * math.cos(mu) - sc * math.sin(mu)),
                         proj - s0 * _i_ratio(k)])
    elif kind == "bivariate_gamma":
        s0, slx, sly, sx, sxy = stats
        a, b, c = p
        obj = (a * math.log(b) * s0 + (a + c - 1) * slx + (c - 1) * sly
               - b * sx - sxy - s0 * float(_lgamma(a) + _lgamma(c)))
        grad = np.array([s0 * math.log(b) + slx - s0 * float(_psi(a)),
                         s0 * a / b - sx,
                         slx + sly - s0 * float(_psi(c))])
    else:
        raise ValueError(kind)
    return obj / s0, grad / s0


def _to_unconstrained(kind, p):
    if kind == "von_mises":
        mu = min(max(p[0] / math.pi, -0.999999), 0.999999)
        return np.array([math.atanh(mu), math.log(p[1])])
    return np.log(np.asarray(p, float))


def _clamped_exp(u):
    return min(max(math.exp(min(u, 50.0)), MIN_ARG), PARAM_CEIL)


def _from_unconstrained(kind, u):
    if kind == "von_mises":
        return np.array([math.pi * math.tanh(u[0]), _clamped_exp(u[1])])
    return np.array([_clamped_exp(ui) for ui in u])


def _chain(kind, u, p):
    # d(param)/d(unconstrained)
    if kind == "von_mises":
        return np.array([np.pi * (1.0 - math.tanh(u[0]) ** 2), p[1]])
    return np.asarray(p, float)


def _params_vector(params):
    if params.kind == "gamma":
        return np.array([params.alpha, params.beta])
    if params.kind == "beta":
        return np.array([params.alpha, params.beta])
    if params.kind == "von_mises":
        return np.array([params.mu, params.kappa])
    if params.kind == "bivariate_gamma":
        return np.array([params.alpha, params.beta, params.a])
    raise ValueError(params.kind)


def _params_from_vector(kind, p):
    if kind == "gamma":
        return GammaParams(alpha=p[0], beta=p[1])
    if kind == "beta":
        return BetaParams(alpha=p[0], beta=p[1])
    if kind == "von_mises":
        return VonMisesParams(mu=p[0], kappa=p[1])
    if kind == "bivariate_gamma":
        return BivariateGammaParams(alpha=p[0], beta=p[1], a=p[2])
    raise ValueError(kind)


MAX_INNER_ITERS = 500
GRAD_TOL = 1e-7

# Eigenvalue floor for Gaussian covariances, as a fraction of the total data
# variance of the fit.
COV_FLOOR_FRACTION = 1e-6


def _floor_covariance(cov, floor):
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, max(floor, MIN_ARG))
    return (vecs * vals) @ vecs.T


def m_step_params(x, gamma_l, params, cov_floor=None):
    """Maximize the gamma-weighted log-likelihood of one cluster/component.

    Gaussian: closed-form weighted moments with an eigenvalue-floored
    covariance. Other families: gradient ascent in unconstrained space,
    warm-started from ``params``, with a backtracking step rule that never
    accepts a decrease of the objective.
    """
    g = np.asarray(gamma_l, float)
    gsum = g.sum()
    if gsum <= 1e-8 * g.size:
        raise _EmptyClusterError("cluster responsibility mass vanished")

    if params.kind == "gaussian":
        xs = _as_columns(x)
        mean = (g @ xs) / gsum
        second = (xs * g[:, None]).T @ xs / gsum
        cov = second - np.outer(mean, mean)
        if cov_floor is None:
            total_var = float(np.mean(np.var(xs, axis=0)))
            cov_floor = COV_FLOOR_FRACTION * max(total_var, 1.0)
        return GaussianParams(mean=mean, cov=_floor_covariance(cov, cov_floor))

    kind = params.kind
    stats = _suff_stats(kind, np.asarray(x, float), g)
    u0 = _to_unconstrained(kind, _params_vector(params))
    p0 = _from_unconstrained(kind, u0)
    obj0, _ = _obj_grad(kind, p0, stats)

    def negated(u):
        p = _from_unconstrained(kind, u)
        obj, grad_p = _obj_grad(kind, p, stats)
        return -obj, -(grad_p * _chain(kind, u, p))

    res = minimize(negated, u0, jac=True, method="L-BFGS-B",
                   options={"maxiter": MAX_INNER_ITERS, "gtol": GRAD_TOL})
    p = _from_unconstrained(kind, res.x)
    obj, _ = _obj_grad(kind, p, stats)
    # The warm start came from the previous EM iteration; never move to a
    # worse point, so the outer Q trace stays monotone.
    if not np.isfinite(obj) or obj < obj0:
        p = p0
    return _params_from_vector(kind, p)


# ---------------------------------------------------------------------------
# Mixture spec and fit record

@dataclass(frozen=True)
class MixtureSpec:
    """L clusters over a factorized list of (feature name, family kind) pairs."""

    n_clusters: int
    components: tuple
    dirichlet_alpha: tuple

    def __post_init__(self):
        if self.n_clusters not in (1, 2):
            raise ValueError("cluster count must be 1 or 2")
        comps = tuple((str(f), str(k)) for f, k in self.components)
        alpha = np.asarray(self.dirichlet_alpha, float)
        if alpha.ndim == 0:
            alpha = np.full(self.n_clusters, float(alpha))
        if alpha.size != self.n_clusters:
            raise ValueError("one Dirichlet alpha per cluster required")
        if np.any(alpha < 1.0):
            raise ValueError("Dirichlet alphas must be >= 1")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "dirichlet_alpha", tuple(alpha.tolist()))


@dataclass
class MixtureFit:
    spec: MixtureSpec
    params: list            # params[l][c] -> FamilyParams
    weights: np.ndarray     # pi, shape (L,)
    responsibilities: np.ndarray  # gamma, shape (N, L)
    log_dens: np.ndarray    # per-sample per-cluster log-likelihood, (N, L)
    q_trace: list
    converged: bool
    restart_id: int
    flagged_rows: int = 0

    @property
    def q(self):
        return self.q_trace[-1]

    def to_json_dict(self):
        def enc(p):
            if p.kind == "gaussian":
                return {"kind": p.kind, "mean": p.mean.tolist(),
                        "cov": p.cov.tolist()}
            d = {"kind": p.kind}
            d.update({k: float(v) for k, v in vars(p).items()})
            return d

        return {
            "n_clusters": self.spec.n_clusters,
            "components": [list(c) for c in self.spec.components],
            "dirichlet_alpha": list(self.spec.dirichlet_alpha),
            "weights": self.weights.tolist(),
            "params": [[enc(p) for p in row] for row in self.params],
            "q_trace": [float(q) for q in self.q_trace],
            "converged": self.converged,
            "restart_id": self.restart_id,
            "flagged_rows": self.flagged_rows,
        }


def _component_data(features, spec):
    data = []
    n = None
    for fname, kind in spec.components:
        x = np.asarray(features[fname], float)
        if n is None:
            n = x.shape[0]
        elif x.shape[0] != n:
            raise ValueError("feature lengths differ")
        data.append((kind, x))
    return n, data


def _cluster_log_dens(data, params_row):
    total = None
    for (kind, x), p in zip(data, params_row):
        ld = log_pdf(p, x)
        total = ld if total is None else total + ld
    return total


def log_dirichlet_prior(pi, alpha):
    """Unnormalized Dirichlet log-prior; exactly zero when all alpha = 1."""
    alpha = np.asarray(alpha, float)
    if np.all(alpha == 1.0):
        return 0.0
    return float(np.sum((alpha - 1.0) * np.log(pi)))


def e_step(log_dens, pi):
    """Responsibilities from per-cluster log densities; log-domain softmax.

    Rows where every cluster has zero likelihood become uniform and are
    counted. Returns (gamma, flagged_row_count).
    """
    logw = log_dens + np.log(pi)[None, :]
    m = logw.max(axis=1, keepdims=True)
    bad = ~np.isfinite(m[:, 0])
    m[bad] = 0.0
    e = np.exp(logw - m)
    s = e.sum(axis=1, keepdims=True)
    gamma = np.where(bad[:, None], 1.0 / pi.size, e / np.where(s == 0, 1.0, s))
    return gamma, int(bad.sum())


def m_step_weights(gamma, dirichlet_alpha, n, n_clusters):
    """MAP weight update; reduces bitwise to sum(gamma)/N when alpha = 1."""
    alpha = np.asarray(dirichlet_alpha, float)
    gsum = np.asarray(gamma).sum(axis=0)
    return (alpha - 1.0 + gsum) / (n - n_clusters + alpha.sum())


def cdll(log_dens, gamma, pi, alpha):
    """Expected complete-data log-likelihood plus the Dirichlet log-prior."""
    core = float(np.sum(gamma * (np.log(pi)[None, :] + log_dens)))
    return core + log_dirichlet_prior(pi, alpha)


def _moment_init(kind, x, g):
    gsum = g.sum()
    if kind == "gaussian":
        return m_step_params(x, g, GaussianParams(mean=np.zeros(_as_columns(x).shape[1]),
                                                  cov=np.eye(_as_columns(x).shape[1])))
    if kind == "von_mises":
        c = (g @ np.cos(x)) / gsum
        s = (g @ np.sin(x)) / gsum
        r = min(math.hypot(c, s), 0.999)
        kappa = r * (2.0 - r * r) / max(1.0 - r * r, 1e-6)
        return VonMisesParams(mu=math.atan2(s, c),
                              kappa=float(clamp_positive(kappa)))
    xv = _as_columns(x)[:, 0]
    m = (g @ xv) / gsum
    v = (g @ (xv - m) ** 2) / gsum
    v = max(v, 1e-12)
    if kind == "gamma":
        return GammaParams(alpha=float(clamp_positive(m * m / v)),
                           beta=float(clamp_positive(v / m)))
    if kind == "beta":
        t = max(m * (1 - m) / v - 1.0, 1e-3)
        return BetaParams(alpha=float(clamp_positive(m * t)),
                          beta=float(clamp_positive((1 - m) * t)))
    if kind == "bivariate_gamma":
        alpha0 = float(clamp_positive(m * m / v))
        return BivariateGammaParams(alpha=alpha0,
                                    beta=float(clamp_positive(alpha0 / m)),
                                    a=1.0)
    raise ValueError(kind)


MAX_OUTER_ITERS = 300
Q_REL_TOL = 1e-6


def _initial_gamma(n, n_clusters, mode, primary, rng):
    if n_clusters == 1:
        return np.ones((n, 1))
    if mode == "split":
        med = np.median(primary)
        gamma = np.full((n, 2), 0.05)
        below = primary <= med
        gamma[below, 0] = 0.95
        gamma[~below, 1] = 0.95
        gamma /= gamma.sum(axis=1, keepdims=True)
        return gamma
    gamma = rng.dirichlet(np.ones(n_clusters), size=n)
    return gamma


def _run_em(n, data, spec, gamma):
    alpha = np.asarray(spec.dirichlet_alpha)
    ncl = spec.n_clusters
    params = [[_moment_init(kind, x, gamma[:, l]) for kind, x in data]
              for l in range(ncl)]
    pi = m_step_weights(gamma, alpha, n, ncl)
    q_trace = []
    best = None
    flagged = 0
    converged = False
    for _ in range(MAX_OUTER_ITERS):
        log_dens = np.column_stack(
            [_cluster_log_dens(data, params[l]) for l in range(ncl)])
        gamma, nbad = e_step(log_dens, pi)
        flagged = max(flagged, nbad)
        q = cdll(log_dens, gamma, pi, alpha)
        if q_trace:
            dq = q - q_trace[-1]
            if dq < -1e-12 * (1.0 + abs(q_trace[-1])):
                # Surrogate dipped below the ascent slack near a stationary
                # point: stop and keep the best recorded state.
                converged = True
                break
            q_trace.append(q)
            best = (params, pi, gamma, log_dens)
            if abs(dq) < Q_REL_TOL * (1.0 + abs(q)):
                converged = True
                break
        else:
            q_trace.append(q)
            best = (params, pi, gamma, log_dens)
        gsum = gamma.sum(axis=0)
        if np.any(gsum < 1e-8 * n):
            raise _EmptyClusterError("empty cluster during EM")
        pi = m_step_weights(gamma, alpha, n, ncl)
        params = [[m_step_params(x, gamma[:, l], params[l][c])
                   for c, (kind, x) in enumerate(data)]
                  for l in range(ncl)]
    params, pi, gamma, log_dens = best
    return params, pi, gamma, log_dens, q_trace, converged, flagged


def fit(features, spec, init_seed=0, restarts=3):
    """Best-Q MAP-EM fit over ``restarts`` initializations.

    The first initialization splits the primary scalar feature at its median;
    the rest use random responsibilities. Raises :class:`FitError` if every
    restart degenerates.
    """
    n, data = _component_data(features, spec)
    if n < spec.n_clusters:
        raise FitError("fewer samples than clusters")
    primary = _as_columns(data[0][1])[:, 0]
    rng = np.random.default_rng(init_seed)
    best_fit = None
    failures = []
    for r in range(max(1, restarts)):
        mode = "split" if r == 0 else "random"
        gamma0 = _initial_gamma(n, spec.n_clusters, mode, primary, rng)
        try:
            params, pi, gamma, log_dens, q_trace, conv, flagged = _run_em(
                n, data, spec, gamma0)
        except _EmptyClusterError as exc:
            failures.append(str(exc))
            continue
        if best_fit is None or q_trace[-1] > best_fit.q:
            best_fit = MixtureFit(spec=spec, params=params, weights=pi,
                                  responsibilities=gamma, log_dens=log_dens,
                                  q_trace=q_trace, converged=conv,
                                  restart_id=r, flagged_rows=flagged)
    if best_fit is None:
        families = ", ".join(k for _, k in spec.components)
        raise FitError(f"all restarts degenerate for families: {families}")
    return best_fit


def resolve_labels(mixture_fit, temperature_means):
    """Reorder clusters so cluster 1 has the highest mean temperature.

    Ties are broken by larger weight. Idempotent; Q is untouched.
    """
    means = np.asarray(temperature_means, float)
    ncl = mixture_fit.spec.n_clusters
    if means.size != ncl:
        raise ValueError("one temperature mean per cluster required")
    order = sorted(range(ncl),
                   key=lambda l: (-means[l], -mixture_fit.weights[l], l))
    if order == list(range(ncl)):
        return mixture_fit
    idx = np.asarray(order)
    return MixtureFit(
        spec=mixture_fit.spec,
        params=[mixture_fit.params[l] for l in order],
        weights=mixture_fit.weights[idx],
        responsibilities=mixture_fit.responsibilities[:, idx],
        log_dens=mixture_fit.log_dens[:, idx],
        q_trace=list(mixture_fit.q_trace),
        converged=mixture_fit.converged,
        restart_id=mixture_fit.restart_id,
        flagged_rows=mixture_fit.flagged_rows,
    )
