import numpy as np
import pytest

from ocpad.errors import ConfigurationError, FitError, InputError
from ocpad.gmm import (
    EmConfig,
    GmmParams,
    fit_em,
    log_likelihood,
    log_likelihood_many,
    responsibilities,
)


def naive_density_log(gmm, x):
    """Direct evaluation of the mixture density with det/inv (oracle)."""
    total = 0.0
    d = gmm.dim
    for w, mu, cov in zip(gmm.weights, gmm.means, gmm.covariances):
        diff = x - mu
        quad = diff @ np.linalg.inv(cov) @ diff
        norm = (2.0 * np.pi) ** (-d / 2.0) * np.linalg.det(cov) ** -0.5
        total += w * norm * np.exp(-0.5 * quad)
    return np.log(total)


def single_gaussian(mu, var):
    return GmmParams(
        weights=np.array([1.0]),
        means=np.array([mu], dtype=float),
        covariances=np.array([np.atleast_2d(var)], dtype=float),
    )


class TestScoring:
    def test_standard_normal_at_mean(self):
        gmm = single_gaussian([0.0], 1.0)
        assert log_likelihood(gmm, np.array([0.0])) == pytest.approx(
            -0.5 * np.log(2.0 * np.pi), abs=1e-12)

    def test_duplicate_components_equal_single(self):
        rng = np.random.default_rng(0)
        mu = rng.normal(size=3)
        A = rng.normal(size=(3, 3))
        cov = A @ A.T + np.eye(3)
        one = GmmParams(np.array([1.0]), mu[None, :], cov[None, :, :])
        two = GmmParams(np.array([0.5, 0.5]), np.stack([mu, mu]),
                        np.stack([cov, cov]))
        x = rng.normal(size=3)
        assert log_likelihood(two, x) == pytest.approx(
            log_likelihood(one, x), rel=1e-12)

    def test_decays_away_from_mean(self):
        gmm = single_gaussian([0.0, 0.0], np.eye(2))
        near = log_likelihood(gmm, np.zeros(2))
        far = log_likelihood(gmm, np.array([100.0, 0.0]))
        assert near > far

    def test_matches_naive_density(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            K, d = int(rng.integers(1, 4)), int(rng.integers(1, 5))
            w = rng.uniform(0.2, 1.0, size=K)
            w /= w.sum()
            means = rng.normal(size=(K, d))
            covs = []
            for _ in range(K):
                A = rng.normal(size=(d, d))
                covs.append(A @ A.T + np.eye(d))
            gmm = GmmParams(w, means, np.array(covs))
            x = rng.normal(size=d)
            assert log_likelihood(gmm, x) == pytest.approx(
                naive_density_log(gmm, x), rel=1e-9)

    def test_invariant_to_component_reordering(self):
        rng = np.random.default_rng(2)
        K, d = 4, 3
        w = rng.uniform(0.1, 1.0, size=K)
        w /= w.sum()
        means = rng.normal(size=(K, d))
        covs = np.array([np.diag(rng.uniform(0.5, 2.0, size=d)) for _ in range(K)])
        gmm = GmmParams(w, means, covs)
        perm = rng.permutation(K)
        shuffled = GmmParams(w[perm], means[perm], covs[perm])
        x = rng.normal(size=d)
        assert log_likelihood(gmm, x) == pytest.approx(
            log_likelihood(shuffled, x), rel=1e-12)

    def test_dimension_mismatch_rejected(self):
        gmm = single_gaussian([0.0, 0.0], np.eye(2))
        with pytest.raises(InputError):
            log_likelihood(gmm, np.zeros(3))


class TestResponsibilities:
    def test_single_component(self):
        gmm = single_gaussian([0.0], 1.0)
        np.testing.assert_array_equal(responsibilities(gmm, np.zeros(1)), [1.0])

    def test_separated_components(self):
        gmm = GmmParams(
            np.array([0.5, 0.5]),
            np.array([[-50.0], [50.0]]),
            np.array([np.eye(1), np.eye(1)]),
        )
        r = responsibilities(gmm, np.array([-50.0]))
        assert r[0] > 0.999

    def test_identical_components_uniform(self):
        gmm = GmmParams(
            np.array([0.25, 0.25, 0.25, 0.25]),
            np.zeros((4, 2)),
            np.array([np.eye(2)] * 4),
        )
        r = responsibilities(gmm, np.array([1.0, -1.0]))
        np.testing.assert_allclose(r, 0.25, atol=1e-12)

    def test_sums_to_one(self):
        rng = np.random.default_rng(3)
        gmm = GmmParams(
            np.array([0.2, 0.3, 0.5]),
            rng.normal(size=(3, 4)),
            np.array([np.eye(4)] * 3),
        )
        r = responsibilities(gmm, rng.normal(size=4))
        assert abs(r.sum() - 1.0) <= 1e-12


class TestFit:
    def test_single_component_closed_form(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(200, 3)) @ np.diag([1.0, 2.0, 0.5]) + [1.0, -2.0, 3.0]
        cfg = EmConfig(n_components=1, cov_reg=1e-6, seed=0)
        gmm, trace = fit_em(X, cfg)
        np.testing.assert_allclose(gmm.means[0], X.mean(axis=0), atol=1e-9)
        expected_cov = np.cov(X, rowvar=False, bias=True) + 1e-6 * np.eye(3)
        np.testing.assert_allclose(gmm.covariances[0], expected_cov, atol=1e-9)
        np.testing.assert_array_equal(gmm.weights, [1.0])

    def test_two_cluster_recovery(self):
        hits = 0
        for seed in range(4):
            rng = np.random.default_rng(100 + seed)
            d = 3
            a = rng.normal(size=(1000, d)) - 5.0
            b = rng.normal(size=(1000, d)) + 5.0
            X = np.concatenate([a, b])
            gmm, _ = fit_em(X, EmConfig(n_components=2, seed=seed))
            targets = np.array([[-5.0] * d, [5.0] * d])
            err = min(
                max(np.linalg.norm(gmm.means[0] - targets[0]),
                    np.linalg.norm(gmm.means[1] - targets[1])),
                max(np.linalg.norm(gmm.means[0] - targets[1]),
                    np.linalg.norm(gmm.means[1] - targets[0])),
            )
            if err < 0.1:
                hits += 1
        assert hits >= 3

    def test_too_few_points_rejected(self):
        X = np.zeros((4, 2))
        with pytest.raises(FitError):
            fit_em(X, EmConfig(n_components=5, seed=0))

    def test_non_finite_rejected(self):
        X = np.zeros((10, 2))
        X[3, 1] = np.nan
        with pytest.raises(InputError):
            fit_em(X, EmConfig(n_components=2, seed=0))

    def test_trace_non_decreasing(self):
        rng = np.random.default_rng(5)
        for trial in range(10):
            X = np.concatenate([
                rng.normal(size=(80, 4)) * rng.uniform(0.5, 2.0),
                rng.normal(size=(80, 4)) + rng.normal(size=4) * 3,
            ])
            _, trace = fit_em(X, EmConfig(n_components=3, seed=trial))
            t = np.asarray(trace)
            slack = 1e-9 * np.maximum(1.0, np.abs(t[:-1]))
            assert np.all(np.diff(t) >= -slack)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(100, 3))
        g1, t1 = fit_em(X, EmConfig(n_components=3, seed=9))
        g2, t2 = fit_em(X, EmConfig(n_components=3, seed=9))
        assert t1 == t2
        np.testing.assert_array_equal(g1.weights, g2.weights)
        np.testing.assert_array_equal(g1.means, g2.means)
        np.testing.assert_array_equal(g1.covariances, g2.covariances)

    def test_weights_and_covariances_valid_after_fit(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(150, 5))
        gmm, _ = fit_em(X, EmConfig(n_components=4, seed=1))
        assert abs(gmm.weights.sum() - 1.0) <= 1e-12
        for cov in gmm.covariances:
            np.linalg.cholesky(cov)

    def test_random_points_init(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(60, 2))
        gmm, trace = fit_em(X, EmConfig(n_components=2, seed=3, init="random_points"))
        assert len(trace) >= 2
        gmm.validate()

    def test_batch_scoring_matches_scalar(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(50, 3))
        gmm, _ = fit_em(X, EmConfig(n_components=2, seed=0))
        scores = log_likelihood_many(gmm, X[:10])
        for i in range(10):
            assert scores[i] == pytest.approx(log_likelihood(gmm, X[i]), rel=1e-12)


class TestEmConfig:
    @pytest.mark.parametrize("kw", [
        {"n_components": 0}, {"max_iters": 0}, {"rel_tol": 0.0},
        {"cov_reg": -1.0}, {"init": "magic"},
    ])
    def test_bad_config_rejected(self, kw):
        with pytest.raises(ConfigurationError):
            EmConfig(**kw).validate()
