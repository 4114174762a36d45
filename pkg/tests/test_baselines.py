import math

import numpy as np
import pytest

from hetnet import CountNetwork, lasso_fit, mle_fit, two_stage_select


def _uniform_network(n: int, c: int) -> CountNetwork:
    return CountNetwork.from_edges(
        n, [(i, j, c) for i in range(n) for j in range(n) if i != j]
    )


def _rates(est) -> np.ndarray:
    return np.exp(est.alpha_hat[:, None] + est.beta_hat[None, :])


def _random_positive_degree_network(seed: int, n: int) -> CountNetwork:
    rng = np.random.default_rng(seed)
    counts = {}
    for i in range(n):
        for j in range(n):
            if i != j and rng.uniform() < 0.6:
                counts[(i, j)] = int(rng.integers(1, 7))
    # a directed cycle guarantees every in- and out-degree is positive
    for i in range(n):
        counts.setdefault((i, (i + 1) % n), 1)
    return CountNetwork.from_edges(n, [(i, j, c) for (i, j), c in counts.items()])


# ----------------------------------------------------------------- mle_fit

@pytest.mark.parametrize("c", [1, 4, 9])
@pytest.mark.parametrize("n", [5, 20])
def test_mle_uniform_network_exact(c, n):
    est = mle_fit(_uniform_network(n, c))
    assert est.converged
    assert not est.flagged_alpha and not est.flagged_beta
    # symmetry: every node at log(c)/2 on both sides
    np.testing.assert_allclose(est.alpha_hat, math.log(c) / 2.0, rtol=1e-10)
    np.testing.assert_allclose(est.beta_hat, math.log(c) / 2.0, rtol=1e-10)
    off = ~np.eye(n, dtype=bool)
    np.testing.assert_allclose(_rates(est)[off], float(c), rtol=1e-10)


def test_mle_two_node_saturated_model():
    A = CountNetwork.from_edges(2, [(0, 1, 2), (1, 0, 8)])
    est = mle_fit(A)
    rates = _rates(est)
    assert rates[0, 1] == pytest.approx(2.0, abs=1e-6)
    assert rates[1, 0] == pytest.approx(8.0, abs=1e-6)


def test_mle_zero_out_degree_matches_reduced_oracle():
    # node 0 sends nothing: its sender rate sits on the boundary at 0 and
    # the survivors solve the reduced model.  The oracle profiles the
    # receiver rates out and grid-searches the two free sender rates.
    A = CountNetwork.from_edges(3, [(1, 0, 3), (1, 2, 2), (2, 0, 1), (2, 1, 4)])
    counts = {(1, 0): 3.0, (1, 2): 2.0, (2, 0): 1.0, (2, 1): 4.0}

    def profiled_nll(a1, a2):
        b0 = 4.0 / (a1 + a2)
        b1 = 4.0 / a2
        b2 = 2.0 / a1
        total = 0.0
        for (i, j), cnt in counts.items():
            rate = {1: a1, 2: a2}[i] * {0: b0, 1: b1, 2: b2}[j]
            total = total + rate - cnt * np.log(rate)
        # the zero-rate sender contributes nothing: rate 0, count 0
        return total

    lo1, hi1, lo2, hi2 = -3.0, 3.0, -3.0, 3.0
    for step in (0.02, 1e-3, 5e-5, 2.5e-6):
        g1 = np.arange(lo1, hi1 + step, step)
        g2 = np.arange(lo2, hi2 + step, step)
        vals = profiled_nll(np.exp(g1)[:, None], np.exp(g2)[None, :])
        k1, k2 = np.unravel_index(np.argmin(vals), vals.shape)
        lo1, hi1 = g1[k1] - 2 * step, g1[k1] + 2 * step
        lo2, hi2 = g2[k2] - 2 * step, g2[k2] + 2 * step
    a1, a2 = math.exp(g1[k1]), math.exp(g2[k2])
    oracle = {(1, 0): a1 * 4.0 / (a1 + a2), (1, 2): a1 * 2.0 / a1,
              (2, 0): a2 * 4.0 / (a1 + a2), (2, 1): a2 * 4.0 / a2}

    est = mle_fit(A)
    assert est.flagged_alpha == {0}
    assert est.flagged_beta == set()
    # the clamped sender sits strictly below every live parameter
    assert math.isfinite(est.alpha_hat[0])
    assert est.alpha_hat[0] == est.alpha_hat.min()
    rates = _rates(est)
    for (i, j), want in oracle.items():
        assert rates[i, j] == pytest.approx(want, abs=1e-6)


def test_mle_stationarity_on_random_networks():
    checked = 0
    for seed in range(100):
        A = _random_positive_degree_network(seed, 8)
        est = mle_fit(A)
        assert est.converged
        a = np.exp(est.alpha_hat)
        b = np.exp(est.beta_hat)
        out_res = a * (b.sum() - b) - A.out_degree
        in_res = b * (a.sum() - a) - A.in_degree
        assert np.all(np.abs(out_res) <= 1e-6 * (1.0 + A.out_degree))
        assert np.all(np.abs(in_res) <= 1e-6 * (1.0 + A.in_degree))
        checked += 1
    assert checked == 100


def test_mle_empty_network_all_flagged():
    est = mle_fit(CountNetwork.from_edges(4, []))
    clamp = math.log(0.5 / 4)
    np.testing.assert_allclose(est.alpha_hat, clamp, rtol=1e-12)
    np.testing.assert_allclose(est.beta_hat, clamp, rtol=1e-12)
    assert est.flagged_alpha == {0, 1, 2, 3}
    assert est.flagged_beta == {0, 1, 2, 3}
    assert est.converged


def test_mle_centering_invariant():
    for seed in (0, 5, 9):
        est = mle_fit(_random_positive_degree_network(seed, 10))
        sa, sb = est.alpha_hat.sum(), est.beta_hat.sum()
        assert abs(sa - sb) <= 1e-8 * (1.0 + abs(sa))


def test_mle_z_scaling():
    A = _random_positive_degree_network(3, 6)
    base = mle_fit(A, z_n=1.0)
    scaled = mle_fit(A, z_n=2.5)
    np.testing.assert_allclose(scaled.alpha_hat, 2.5 * base.alpha_hat, rtol=1e-9)
    np.testing.assert_allclose(scaled.beta_hat, 2.5 * base.beta_hat, rtol=1e-9)


def test_mle_validation():
    with pytest.raises(ValueError):
        mle_fit(CountNetwork.from_edges(1, []))
    with pytest.raises(ValueError):
        mle_fit(_uniform_network(3, 1), z_n=0.0)


# --------------------------------------------------------------- lasso_fit

def test_lasso_zero_penalty_matches_least_squares():
    rng = np.random.default_rng(0)
    n, p = 40, 5
    X = np.linalg.qr(rng.normal(size=(n, p)))[0]  # orthonormal columns
    y = rng.normal(size=n)
    coef, intercept = lasso_fit(X, y, 0.0)
    design = np.column_stack([np.ones(n), X])
    ols = np.linalg.lstsq(design, y, rcond=None)[0]
    assert intercept == pytest.approx(ols[0], abs=1e-8)
    np.testing.assert_allclose(coef, ols[1:], atol=1e-8)


def test_lasso_above_lambda_max_is_null_model():
    rng = np.random.default_rng(1)
    n, p = 30, 4
    X = rng.normal(size=(n, p))
    y = rng.normal(size=n)
    xs = (X - X.mean(axis=0)) / X.std(axis=0)
    lam_max = float(np.abs(xs.T @ (y - y.mean())).max()) / n
    coef, intercept = lasso_fit(X, y, lam_max * 1.000001)
    assert np.all(coef == 0.0)
    assert intercept == pytest.approx(float(y.mean()), rel=1e-12)


def test_lasso_single_column_closed_form():
    rng = np.random.default_rng(2)
    n = 50
    x = rng.normal(size=n)
    x = (x - x.mean()) / x.std()  # exact unit population variance
    y = 0.8 * x + rng.normal(scale=0.3, size=n)
    lam = 0.1
    coef, _ = lasso_fit(x[:, None], y, lam)
    cov = float(x @ (y - y.mean())) / n
    want = math.copysign(max(abs(cov) - lam, 0.0), cov)
    assert coef[0] == pytest.approx(want, rel=1e-8)


def test_lasso_solution_satisfies_kkt():
    rng = np.random.default_rng(3)
    n, p = 60, 8
    X = rng.normal(size=(n, p))
    beta_true = np.array([1.5, -2.0, 0.0, 0.0, 0.7, 0.0, 0.0, 0.0])
    y = X @ beta_true + rng.normal(scale=0.5, size=n)
    lam = 0.15
    coef, intercept = lasso_fit(X, y, lam)
    mean, sd = X.mean(axis=0), X.std(axis=0)
    xs = (X - mean) / sd
    beta_std = coef * sd
    r = (y - y.mean()) - xs @ beta_std
    grad = xs.T @ r / n
    for j in range(p):
        if beta_std[j] == 0.0:
            assert abs(grad[j]) <= lam + 1e-8
        else:
            assert grad[j] == pytest.approx(lam * np.sign(beta_std[j]), abs=1e-8)
    fitted = intercept + X @ coef
    assert np.allclose(fitted, y.mean() + xs @ beta_std, atol=1e-10)


def test_lasso_constant_column_gets_zero():
    rng = np.random.default_rng(4)
    X = np.column_stack([np.full(20, 3.0), rng.normal(size=20)])
    y = rng.normal(size=20)
    coef, _ = lasso_fit(X, y, 0.05)
    assert coef[0] == 0.0


def test_lasso_validation():
    X = np.zeros((5, 2))
    with pytest.raises(ValueError):
        lasso_fit(X, np.zeros(5), -0.1)
    with pytest.raises(ValueError):
        lasso_fit(X, np.zeros(4), 0.1)


# --------------------------------------------------------- two_stage_select

def test_two_stage_recovers_strong_linear_signal():
    # counts large enough that the MLE is nearly noiseless, so the
    # regression stage sees an almost exactly linear response
    rng = np.random.default_rng(7)
    n, p = 40, 8
    X = rng.uniform(-1, 1, size=(n, p))
    alpha0 = 2.0 * X[:, 0] + X[:, 3] + 2.5
    beta0 = 1.5 * X[:, 5] + 2.5
    counts = rng.poisson(np.exp(alpha0[:, None] + beta0[None, :]))
    np.fill_diagonal(counts, 0)
    counts = np.maximum(counts, 1)
    np.fill_diagonal(counts, 0)
    A = CountNetwork.from_edges(
        n, [(i, j, int(counts[i, j])) for i in range(n) for j in range(n) if i != j]
    )
    s_alpha, s_beta, alpha_hat, beta_hat = two_stage_select(A, X)
    assert {0, 3} <= s_alpha
    assert 5 in s_beta
    # the smoothed estimates track the truth up to the shared gauge shift
    resid = (alpha_hat - alpha0) - (alpha_hat - alpha0).mean()
    assert float(np.abs(resid).mean()) < 0.15


def test_two_stage_constant_response_selects_nothing():
    A = _uniform_network(6, 4)
    X = np.random.default_rng(8).uniform(-1, 1, size=(6, 5))
    s_alpha, s_beta, alpha_hat, beta_hat = two_stage_select(A, X)
    assert s_alpha == set()
    assert s_beta == set()
    np.testing.assert_allclose(alpha_hat, math.log(4) / 2.0, rtol=1e-8)


def test_two_stage_overselects_when_p_exceeds_n():
    # with p > n and a noisy response the penalized path can interpolate,
    # and the RSS-based criterion rewards that: selection balloons
    from hetnet.rng import seed_for
    from hetnet.simbench import gen_attributes, linear_truth, sample_network

    n, p, z = 30, 60, 10.0
    X = gen_attributes(n, p, seed_for("attributes", 55))
    truth = linear_truth(X, z)
    A = sample_network(truth, seed_for("network", 55))
    s_alpha, _, _, _ = two_stage_select(A, X, z_n=z)
    assert len(s_alpha) > 15


def test_two_stage_validation():
    A = _uniform_network(4, 1)
    with pytest.raises(ValueError):
        two_stage_select(A, np.zeros((5, 3)))
