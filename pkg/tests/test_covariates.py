import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from seqcrt.core import RngStream
from seqcrt.covariates import (ColumnSampler, GaussianModel, HmmModel, fit_gaussian, gaussian_conditional,
                               gaussian_conditional_all, gaussian_resample_column, gaussian_sample_rows,
                               gaussian_sample_x_given_y, hmm_conditional, hmm_sample_rows, model_from_json)


def schur_conditional(cov, mean, j, x_rest):
    """Oracle: conditional law by the Schur complement on the full covariance."""
    rest = np.delete(np.arange(cov.shape[0]), j)
    s12 = cov[j, rest]
    s22 = cov[np.ix_(rest, rest)]
    w = linalg.solve(s22, s12)
    return mean[j] + w @ (x_rest - mean[rest]), cov[j, j] - s12 @ w


def brute_force_hmm(model, j, x_full):
    """Oracle: P(X_j = a | X_{-j}) by summing over every hidden path."""
    codes = model.symbols(x_full)
    p = model.p
    out = np.zeros(model.n_out)
    for a in range(model.n_out):
        c = codes.copy()
        c[j] = a
        total = 0.0
        for path in itertools.product(range(model.n_hidden), repeat=p):
            w = model.initial[path[0]] * model.emission[path[0], c[0]]
            for t in range(1, p):
                w *= model.transition[path[t - 1], path[t]] * model.emission[path[t], c[t]]
            total += w
        out[a] = total
    return out / out.sum()


# --------------------------------------------------------------------------- Gaussian


def test_identity_sample_covariance():
    x = gaussian_sample_rows(GaussianModel.identity(4), 100_000, RngStream(0))
    assert np.max(np.abs(np.cov(x, rowvar=False) - np.eye(4))) < 0.02


def test_ar1_autocorrelation():
    x = gaussian_sample_rows(GaussianModel.ar1(10, 0.5), 50_000, RngStream(1))
    c = np.corrcoef(x, rowvar=False)
    assert abs(np.mean(np.diag(c, 1)) - 0.5) < 0.02
    assert abs(np.mean(np.diag(c, 2)) - 0.25) < 0.02


def test_univariate_moments():
    m = GaussianModel(np.array([2.0]), np.array([[4.0]]))
    x = gaussian_sample_rows(m, 100_000, RngStream(2))[:, 0]
    assert abs(x.mean() - 2.0) < 0.03
    assert abs(x.var() - 4.0) < 0.08


def test_non_pd_covariance_raises():
    with pytest.raises(linalg.LinAlgError):
        GaussianModel(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_identity_conditional_ignores_rest():
    m = GaussianModel(np.array([1.0, -1.0, 0.5]), np.eye(3))
    law = gaussian_conditional(m, 1, np.array([10.0, -7.0]))
    assert law.mu_cond == pytest.approx(-1.0)
    assert law.sigma2_cond == pytest.approx(1.0)


def test_ar1_interior_and_boundary_conditionals():
    rho = 0.5
    m = GaussianModel.ar1(6, rho)
    x = np.array([0.3, -1.2, 0.7, 2.0, -0.4, 1.1])
    law = gaussian_conditional(m, 2, np.delete(x, 2))
    assert law.mu_cond == pytest.approx(rho * (x[1] + x[3]) / (1 + rho**2), abs=1e-12)
    assert law.sigma2_cond == pytest.approx(0.6, abs=1e-12)
    law0 = gaussian_conditional(m, 0, np.delete(x, 0))
    assert law0.mu_cond == pytest.approx(rho * x[1], abs=1e-12)
    assert law0.sigma2_cond == pytest.approx(1 - rho**2, abs=1e-12)


def test_block_conditional_depends_only_on_block():
    m = GaussianModel.block(9, 3, 0.3)
    x = np.linspace(-1, 1, 9)
    base = gaussian_conditional(m, 4, np.delete(x, 4))
    y = x.copy()
    y[[0, 1, 2, 6, 7, 8]] += 5.0
    moved = gaussian_conditional(m, 4, np.delete(y, 4))
    assert moved.mu_cond == pytest.approx(base.mu_cond, abs=1e-12)
    assert set(m.neighbors(4).tolist()) == {3, 5}


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_conditional_matches_schur_oracle(p, seed):
    gen = np.random.default_rng(seed)
    a = gen.standard_normal((p, p))
    cov = a @ a.T + p * np.eye(p)
    mean = gen.standard_normal(p)
    m = GaussianModel(mean, cov)
    j = int(gen.integers(p))
    x_rest = gen.standard_normal(p - 1)
    mu, var = schur_conditional(cov, mean, j, x_rest)
    law = gaussian_conditional(m, j, x_rest)
    assert law.mu_cond == pytest.approx(mu, abs=1e-10)
    assert law.sigma2_cond == pytest.approx(var, abs=1e-10)


def test_vectorized_conditionals_agree():
    m = GaussianModel.ar1(7, 0.4)
    x = gaussian_sample_rows(m, 5, RngStream(3))
    mu, var = gaussian_conditional_all(m, x)
    for j in range(7):
        law = gaussian_conditional(m, j, np.delete(x[2], j))
        assert mu[2, j] == pytest.approx(law.mu_cond, abs=1e-12)
        assert var[j] == pytest.approx(law.sigma2_cond, abs=1e-12)


def test_resampling_preserves_joint_law():
    # swap one column for a conditional draw: mean and covariance stay put
    m = GaussianModel.ar1(5, 0.5)
    reps = 10_000
    x = gaussian_sample_rows(m, reps, RngStream(4))
    swapped = x.copy()
    swapped[:, 2] = gaussian_resample_column(m, x, 2, 1, RngStream(5))[:, 0]
    se = 1.0 / np.sqrt(reps)
    assert np.max(np.abs(swapped.mean(axis=0))) < 4 * se
    diff = np.cov(swapped, rowvar=False) - m.covariance
    assert np.max(np.abs(diff)) < 4 * np.sqrt(2) * se


def test_x_given_y_beta_zero_is_marginal():
    m = GaussianModel.ar1(3, 0.5)
    draws = gaussian_sample_x_given_y(m, np.zeros(3), 1.0, np.full(50_000, 3.0), RngStream(6))
    assert np.max(np.abs(np.cov(draws, rowvar=False) - m.covariance)) < 0.03
    assert np.max(np.abs(draws.mean(axis=0))) < 0.03


def test_x_given_y_bivariate():
    m = GaussianModel.identity(1)
    y = 1.3
    draws = gaussian_sample_x_given_y(m, np.ones(1), 1.0, np.full(100_000, y), RngStream(7))[:, 0]
    assert abs(draws.mean() - y / 2) < 0.02
    assert abs(draws.var() - 0.5) < 0.02


def test_x_given_y_total_covariance():
    m = GaussianModel.ar1(3, 0.5)
    beta = np.array([1.0, 0.0, -0.5])
    gen = np.random.default_rng(8)
    total = beta @ m.covariance @ beta + 1.0
    y = gen.normal(0, np.sqrt(total), 50_000)
    draws = gaussian_sample_x_given_y(m, beta, 1.0, y, RngStream(8))
    assert np.max(np.abs(np.cov(draws, rowvar=False) - m.covariance)) < 0.03


def test_x_given_y_scalar_and_domain():
    m = GaussianModel.identity(2)
    assert gaussian_sample_x_given_y(m, np.ones(2), 1.0, 0.5, RngStream(0)).shape == (2,)
    with pytest.raises(ValueError):
        gaussian_sample_x_given_y(m, np.ones(2), 0.0, 0.5, RngStream(0))


def test_fit_gaussian_recovers_conditional_means():
    m = GaussianModel.ar1(5, 0.5)
    x = gaussian_sample_rows(m, 20_000, RngStream(9))
    fitted = fit_gaussian(x)
    probe = gaussian_sample_rows(m, 20, RngStream(10))
    mu_true, _ = gaussian_conditional_all(m, probe)
    mu_fit, _ = gaussian_conditional_all(fitted, probe)
    assert np.max(np.abs(mu_true - mu_fit)) < 0.05


# --------------------------------------------------------------------------- HMM


def test_hmm_single_position_marginal():
    m = HmmModel(1)
    x = hmm_sample_rows(m, 100_000, RngStream(11))[:, 0]
    expected = m.initial @ m.emission
    freq = np.array([(x == v).mean() for v in m.output_alphabet])
    se = np.sqrt(expected * (1 - expected) / x.size)
    assert np.all(np.abs(freq - expected) < 3 * se)
    assert expected[0] == pytest.approx(0.2 * (2 / 3 + 5 / 12 + 1 / 6 + 1 / 6 + 1 / 6))
    assert expected[0] == pytest.approx(0.3167, abs=1e-4)


def test_hmm_identity_transition_gives_iid_columns():
    m = HmmModel(4, transition=np.eye(5), initial=np.eye(5)[0])
    x = hmm_sample_rows(m, 40_000, RngStream(12))
    for t in range(4):
        freq = np.array([(x[:, t] == v).mean() for v in m.output_alphabet])
        assert np.max(np.abs(freq - m.emission[0])) < 0.015
    assert abs(np.corrcoef(x[:, 0], x[:, 3])[0, 1]) < 0.03


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000))
def test_hmm_conditional_matches_path_enumeration(p, seed):
    m = HmmModel(p)
    gen = np.random.default_rng(seed)
    x = gen.choice(m.output_alphabet, size=p)
    j = int(gen.integers(p))
    law = hmm_conditional(m, j, np.delete(x, j))
    assert np.allclose(law.probs, brute_force_hmm(m, j, x), atol=1e-10)
    assert abs(law.probs.sum() - 1) < 1e-12


def test_hmm_uniform_transition_is_independent():
    m = HmmModel(5, transition=np.full((5, 5), 0.2))
    law_a = hmm_conditional(m, 2, np.array([1.0, 1.0, 1.0, 1.0]))
    law_b = hmm_conditional(m, 2, np.array([3.0, 2.0, 3.0, 3.0]))
    assert np.allclose(law_a.probs, law_b.probs, atol=1e-12)
    assert np.allclose(law_a.probs, m.initial @ m.emission, atol=1e-12)


def test_hmm_zero_probability_event_names_position():
    emission = np.array([[1.0, 0.0, 0.0]] * 5)
    m = HmmModel(3, emission=emission)
    with pytest.raises(ValueError, match="position"):
        hmm_conditional(m, 1, np.array([2.0, 1.0]))


def test_hmm_validation():
    with pytest.raises(ValueError):
        HmmModel(3, transition=np.full((5, 5), 0.3))
    with pytest.raises(ValueError):
        HmmModel(3).symbols(np.array([1.5]))


def test_column_sampler_hmm_matches_conditional():
    m = HmmModel(6)
    x = hmm_sample_rows(m, 1, RngStream(13))
    draws = ColumnSampler(m, x).resample(3, 40_000, RngStream(14))[0]
    law = hmm_conditional(m, 3, np.delete(x[0], 3))
    freq = np.array([(draws == v).mean() for v in m.output_alphabet])
    assert np.max(np.abs(freq - law.probs)) < 0.015


def test_model_json_roundtrip():
    for m in (GaussianModel.ar1(4, 0.3), GaussianModel.block(6, 3, 0.3), HmmModel(4)):
        back = model_from_json(json.loads(json.dumps(m.to_json())))
        assert back.to_json() == m.to_json()
    with pytest.raises(ValueError):
        model_from_json({"type": "poisson"})
