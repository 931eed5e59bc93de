"""Model-selection metrics and the per-criterion chooser."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cloudlayers.mixtures import MixtureSpec, fit
from cloudlayers.selection import (CRITERIA, MetricReport, count_from_fit,
                                   entropy, hard_log_likelihood, metrics,
                                   parameter_count, select)


def _spec(n_clusters, components):
    return MixtureSpec(n_clusters=n_clusters, components=components,
                       dirichlet_alpha=(1.0,) * n_clusters)


def test_parameter_count_enumeration():
    # One gamma cluster: 2 shape/scale parameters, no free weight.
    assert parameter_count(_spec(1, (("x", "gamma"),))) == 2
    # Two clusters of beta + von mises: 2 * (2 + 2) + 1 weight = 9.
    assert parameter_count(
        _spec(2, (("x", "beta"), ("phi", "von_mises")))) == 9
    # Bivariate gamma has three parameters.
    assert parameter_count(_spec(1, (("xy", "bivariate_gamma"),))) == 3
    # A 2-D Gaussian: 2 means + 3 covariance entries = 5 per cluster.
    assert parameter_count(_spec(2, (("uv", "gaussian"),)),
                           gaussian_dims={"uv": 2}) == 11
    # Scalar Gaussian defaults to dimension 1: 1 + 1 = 2 per cluster.
    assert parameter_count(_spec(1, (("x", "gaussian"),))) == 2


def test_entropy_uniform_rows():
    # Ten rows of (0.5, 0.5): H = 10 * 2 * 0.5 ln 0.5 = -10 ln 2.
    g = np.full((10, 2), 0.5)
    assert entropy(g) == pytest.approx(-10.0 * math.log(2.0), abs=1e-12)
    assert entropy(g) == pytest.approx(-6.931471805599453, abs=1e-12)


def test_entropy_hard_assignment_is_zero():
    g = np.zeros((8, 2))
    g[:, 0] = 1.0
    assert entropy(g) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_entropy_is_nonpositive(seed):
    rng = np.random.default_rng(seed)
    g = rng.dirichlet([1.0, 1.0], size=23)
    assert entropy(g) <= 0.0


def test_bic_hand_value():
    # lambda = 2, n = 100, log Q-hat = -50:
    # BIC = 2 ln 100 + 100 = 109.21034037...
    r = MetricReport(log_q=-50.0, n_params=2, n=100, entropy=0.0,
                     bic=2 * math.log(100) + 100.0,
                     aic=2 * 2 + 100.0,
                     clc=100.0, icl=2 * math.log(100) + 100.0)
    assert r.bic == pytest.approx(109.21034037197618, abs=1e-10)
    assert r.bic - r.aic == pytest.approx(2 * (math.log(100) - 2.0))


def _fitted(n_clusters, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.random(400) < 0.5
    x = np.where(z, rng.normal(0, 1, 400), rng.normal(8, 1, 400))
    return fit({"x": x}, _spec(n_clusters, (("x", "gaussian"),)),
               init_seed=seed)


def test_metrics_internal_consistency():
    f = _fitted(2)
    r = metrics(f)
    lam = count_from_fit(f)
    assert r.n_params == lam == 5  # 2 * (1 + 1) + 1
    assert r.n == 400
    assert r.entropy <= 0.0
    assert r.log_q == pytest.approx(hard_log_likelihood(f))
    assert r.bic == pytest.approx(lam * math.log(400) - 2 * r.log_q)
    assert r.aic == pytest.approx(2 * lam - 2 * r.log_q)
    assert r.clc == pytest.approx(2 * abs(r.entropy) - 2 * r.log_q)
    assert r.icl == pytest.approx(r.bic + 2 * abs(r.entropy))


def test_hard_log_likelihood_upper_bounds_soft_assignments():
    # Hard assignment drops the assignment uncertainty, so log Q-hat is at
    # least the soft CDLL when the prior term is zero.
    f = _fitted(2, seed=3)
    assert hard_log_likelihood(f) >= f.q - 1e-9


def test_select_on_separated_data():
    reports = [metrics(_fitted(l, seed=1)) for l in (1, 2)]
    for criterion in CRITERIA:
        assert select(reports, criterion) == 2


def test_select_tie_goes_to_smaller_l():
    a = MetricReport(log_q=-5.0, n_params=2, n=10, entropy=0.0,
                     bic=1.0, aic=1.0, clc=1.0, icl=1.0)
    b = MetricReport(log_q=-5.0, n_params=4, n=10, entropy=0.0,
                     bic=1.0, aic=1.0, clc=1.0, icl=1.0)
    for criterion in CRITERIA:
        assert select([a, b], criterion) == 1


def test_select_ml_uses_argmax_log_q():
    a = MetricReport(log_q=-5.0, n_params=2, n=10, entropy=0.0,
                     bic=0.0, aic=0.0, clc=0.0, icl=0.0)
    b = MetricReport(log_q=-2.0, n_params=4, n=10, entropy=0.0,
                     bic=9.0, aic=9.0, clc=9.0, icl=9.0)
    assert select([a, b], "ml") == 2
    assert select([a, b], "bic") == 1


def test_select_rejects_unknown_criterion():
    a = MetricReport(log_q=0, n_params=1, n=1, entropy=0.0,
                     bic=0, aic=0, clc=0, icl=0)
    with pytest.raises(ValueError):
        select([a], "dic")


def test_report_json_dict_is_plain():
    r = MetricReport(log_q=-1.5, n_params=3, n=7, entropy=-0.2,
                     bic=1.0, aic=2.0, clc=3.0, icl=4.0)
    d = r.to_json_dict()
    assert d["n_params"] == 3 and d["log_q"] == -1.5
    assert set(d) == {"log_q", "n_params", "n", "entropy",
                      "bic", "aic", "clc", "icl"}
