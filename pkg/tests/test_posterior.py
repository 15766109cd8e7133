import numpy as np
import pytest

from hierbandits.gausscore import pd_inverse
from hierbandits.oraclecheck import compare_instance, random_history, random_pd
from hierbandits.posterior import (
    GaussianPrior,
    HyperPosterior,
    TaskStats,
    hyper_posterior_karmed,
    hyper_posterior_linear,
    marginal_posterior,
    sigma_max_sq,
    task_conditional_karmed,
    task_conditional_linear,
    task_contribution,
    telescoping_increment,
    total_covariance_terms,
    update_task_stats,
)


def history_stats(d, m, tasks, actions, rewards, sigma):
    stats = [TaskStats.empty(d) for _ in range(m)]
    for s, a, y in zip(tasks, actions, rewards):
        stats[s] = update_task_stats(stats[s], a, y, sigma)
    return stats


def one_pull_scalar():
    return [update_task_stats(TaskStats.empty(1), [1.0], 1.0, 1.0)]


def random_basis_history(rng, K, m, n_obs):
    tasks = rng.integers(0, m, size=n_obs)
    arms = rng.integers(0, K, size=n_obs)
    rewards = rng.normal(size=n_obs)
    return tasks, [np.eye(K)[i] for i in arms], rewards


class TestStats:
    def test_update(self):
        st = update_task_stats(TaskStats.empty(2), [0.6, 0.8], 2.0, 0.5)
        np.testing.assert_allclose(st.G, 4 * np.outer([0.6, 0.8], [0.6, 0.8]))
        np.testing.assert_allclose(st.B, 4 * 2.0 * np.array([0.6, 0.8]))
        assert st.count == 1 and not st.karmed

    def test_karmed_view(self):
        st = TaskStats.empty(3)
        for i, y in [(0, 1.0), (2, -0.5), (0, 0.25)]:
            st = update_task_stats(st, np.eye(3)[i], y, 1.0)
        np.testing.assert_array_equal(st.arm_counts, [2, 0, 1])
        np.testing.assert_allclose(st.arm_sums, [1.25, 0.0, -0.5])
        assert st.karmed

    def test_immutable_update(self):
        st = TaskStats.empty(2)
        update_task_stats(st, [1.0, 0.0], 1.0, 1.0)
        assert st.count == 0 and not st.G.any()


class TestHyperPosterior:
    def test_no_data_is_prior(self):
        rng = np.random.default_rng(0)
        Sq, S0 = random_pd(rng, 3), random_pd(rng, 3)
        mu_q = rng.normal(size=3)
        h = hyper_posterior_linear(mu_q, Sq, S0, [TaskStats.empty(3) for _ in range(4)])
        np.testing.assert_allclose(h.mean, mu_q, atol=1e-12)
        np.testing.assert_allclose(h.cov, Sq, atol=1e-12)

    def test_scalar_worked_case(self):
        h = hyper_posterior_linear([0.0], [[1.0]], [[1.0]], one_pull_scalar())
        assert h.mean[0] == pytest.approx(1 / 3, abs=1e-12)
        assert h.cov[0, 0] == pytest.approx(2 / 3, abs=1e-12)

    def test_karmed_scalar_worked_case(self):
        h = hyper_posterior_karmed([0.0], 1.0, 1.0, 1.0, one_pull_scalar())
        assert h.mean[0] == pytest.approx(1 / 3, abs=1e-12)
        assert h.cov[0, 0] == pytest.approx(2 / 3, abs=1e-12)

    def test_karmed_no_data(self):
        h = hyper_posterior_karmed([0.5, -1.0], 0.7, 0.2, 1.0, [TaskStats.empty(2)] * 3)
        np.testing.assert_allclose(h.mean, [0.5, -1.0])
        np.testing.assert_allclose(h.cov, 0.49 * np.eye(2))

    def test_karmed_rejects_linear_history(self):
        st = update_task_stats(TaskStats.empty(2), [0.5, 0.5], 1.0, 1.0)
        with pytest.raises(ValueError):
            hyper_posterior_karmed([0.0, 0.0], 1.0, 1.0, 1.0, [st])

    def test_precision_dominates_prior(self):
        rng = np.random.default_rng(5)
        Sq, S0 = random_pd(rng, 3), random_pd(rng, 3)
        tasks, actions, rewards = random_history(rng, 3, 3, 12, np.zeros(3), Sq, S0, 0.7)
        stats = history_stats(3, 3, tasks, actions, rewards, 0.7)
        h = hyper_posterior_linear(np.zeros(3), Sq, S0, stats)
        assert np.linalg.eigvalsh(h.precision - pd_inverse(Sq))[0] >= -1e-10

    def test_task_contribution_cap(self):
        # each task adds at most Sigma_0^{-1} worth of precision, however much data it has
        rng = np.random.default_rng(6)
        S0 = random_pd(rng, 2, scale=0.1)
        st = TaskStats.empty(2)
        for _ in range(5000):
            st = update_task_stats(st, rng.normal(size=2) / 2, 0.0, 0.1)
        P, _ = task_contribution(pd_inverse(S0), st)
        assert np.linalg.eigvalsh(P)[-1] <= 1 / np.linalg.eigvalsh(S0)[0] * (1 + 1e-9)


class TestTaskConditional:
    def test_empty_is_prior(self):
        S0 = random_pd(np.random.default_rng(1), 2)
        c = task_conditional_linear([0.3, 0.1], S0, TaskStats.empty(2))
        np.testing.assert_allclose(c.mean, [0.3, 0.1], atol=1e-12)
        np.testing.assert_allclose(c.cov, S0, atol=1e-12)

    @pytest.mark.parametrize("mu_t", [-1.0, 0.0, 2.5])
    def test_scalar_worked_case(self, mu_t):
        c = task_conditional_linear([mu_t], [[1.0]], one_pull_scalar()[0])
        assert c.mean[0] == pytest.approx((mu_t + 1) / 2, abs=1e-12)
        assert c.cov[0, 0] == pytest.approx(0.5, abs=1e-12)

    def test_cov_below_task_prior(self):
        rng = np.random.default_rng(2)
        S0 = random_pd(rng, 3)
        tasks, actions, rewards = random_history(rng, 3, 1, 8, np.zeros(3), np.eye(3), S0, 0.5)
        st = history_stats(3, 1, tasks, actions, rewards, 0.5)[0]
        c1 = task_conditional_linear(np.zeros(3), S0, st)
        c2 = task_conditional_linear(np.ones(3) * 5, S0, st)
        assert np.linalg.eigvalsh(S0 - c1.cov)[0] >= -1e-12
        np.testing.assert_array_equal(c1.cov, c2.cov)

    def test_karmed_unpulled_arm(self):
        st = update_task_stats(TaskStats.empty(2), [1.0, 0.0], 3.0, 1.0)
        c = task_conditional_karmed([0.4, -0.2], 0.5, 1.0, st)
        assert c.mean[1] == pytest.approx(-0.2)
        assert c.cov[1, 1] == pytest.approx(0.25)

    def test_karmed_many_pulls_limit(self):
        N, ybar = 10**6, 0.37
        st = TaskStats(np.zeros((1, 1)), np.zeros(1), np.array([N]), np.array([N * ybar]), N, True)
        c = task_conditional_karmed([1.0], 0.5, 1.0, st)
        assert abs(c.mean[0] - ybar) < 1e-4

    def test_matches_oracle_given_mu(self):
        # condition on mu_* and the task's rewards inside the joint model
        from hierbandits.gausscore import condition_joint_gaussian
        from hierbandits.oraclecheck import hierarchical_joint
        rng = np.random.default_rng(13)
        for _ in range(20):
            d = int(rng.integers(1, 4))
            Sq, S0 = random_pd(rng, d), random_pd(rng, d, scale=0.5)
            tasks, actions, rewards = random_history(rng, d, 1, 6, np.zeros(d), Sq, S0, 0.8)
            mu = rng.normal(size=d)
            joint = hierarchical_joint(np.zeros(d), Sq, S0, 0.8, 1, tasks, actions)
            idx = list(range(d)) + list(range(2 * d, 2 * d + len(tasks)))
            post = condition_joint_gaussian(joint, idx, np.concatenate([mu, rewards]))
            tm, tc = post.block("theta_0")
            c = task_conditional_linear(mu, S0, history_stats(d, 1, tasks, actions, rewards, 0.8)[0])
            np.testing.assert_allclose(c.mean, tm, atol=1e-8)
            np.testing.assert_allclose(c.cov, tc, atol=1e-8)


class TestMarginal:
    def test_no_data(self):
        rng = np.random.default_rng(3)
        Sq, S0 = random_pd(rng, 2), random_pd(rng, 2)
        h = HyperPosterior(np.array([0.1, 0.2]), Sq, pd_inverse(Sq))
        mp = marginal_posterior(h, S0, TaskStats.empty(2))
        np.testing.assert_allclose(mp.cov, Sq + S0, atol=1e-12)
        np.testing.assert_allclose(mp.mean, [0.1, 0.2], atol=1e-12)

    def test_scalar_worked_case(self):
        stats = one_pull_scalar()
        h = hyper_posterior_linear([0.0], [[1.0]], [[1.0]], stats)
        mp = marginal_posterior(h, [[1.0]], stats[0])
        assert mp.mean[0] == pytest.approx(2 / 3, abs=1e-12)
        assert mp.cov[0, 0] == pytest.approx(2 / 3, abs=1e-12)

    def test_oracle_equivalence(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            d, m = int(rng.integers(1, 4)), int(rng.integers(1, 5))
            Sq, S0 = random_pd(rng, d), random_pd(rng, d, scale=0.5)
            mu_q = rng.normal(size=d)
            tasks, actions, rewards = random_history(rng, d, m, int(rng.integers(0, 11)), mu_q, Sq, S0, 0.6)
            err = compare_instance(mu_q, Sq, S0, 0.6, m, tasks, actions, rewards)
            assert err.worst <= 1e-8

    def test_decomposition_and_cap(self):
        rng = np.random.default_rng(4)
        Sq, S0 = random_pd(rng, 3), random_pd(rng, 3, scale=0.3)
        tasks, actions, rewards = random_history(rng, 3, 3, 10, np.zeros(3), Sq, S0, 0.5)
        stats = history_stats(3, 3, tasks, actions, rewards, 0.5)
        h = hyper_posterior_linear(np.zeros(3), Sq, S0, stats)
        cap = sigma_max_sq(Sq, S0)
        for st in stats:
            mp = marginal_posterior(h, S0, st)
            task, hyper = total_covariance_terms(h, pd_inverse(S0), st)
            np.testing.assert_allclose(mp.cov, task + hyper, atol=1e-12)
            assert np.linalg.eigvalsh(mp.cov)[-1] <= cap


class TestTelescoping:
    def test_matches_direct_difference(self):
        rng = np.random.default_rng(8)
        d, m, sigma = 3, 3, 0.5
        Sq, S0 = random_pd(rng, d), random_pd(rng, d, scale=0.3)
        prior = GaussianPrior(np.zeros(d), Sq, S0)
        stats = [TaskStats.empty(d) for _ in range(m)]
        before = hyper_posterior_linear(prior.mu_q, Sq, S0, stats, prior)
        for _ in range(60):
            s = int(rng.integers(m))
            a = rng.normal(size=d)
            a /= max(1.0, np.linalg.norm(a))
            inc = telescoping_increment(S0, stats[s], a, sigma)
            stats[s] = update_task_stats(stats[s], a, float(rng.normal()), sigma)
            after = hyper_posterior_linear(prior.mu_q, Sq, S0, stats, prior)
            np.testing.assert_allclose(after.precision - before.precision, inc, atol=1e-9)
            before = after

    def test_rank_one_psd(self):
        rng = np.random.default_rng(9)
        S0 = random_pd(rng, 4)
        inc = telescoping_increment(S0, TaskStats.empty(4), rng.normal(size=4) / 3, 0.7)
        w = np.linalg.eigvalsh(inc)
        assert w[0] >= -1e-14
        assert np.sum(w > 1e-12 * w[-1]) == 1

    def test_denominator_below_c(self):
        rng = np.random.default_rng(10)
        S0 = random_pd(rng, 3, scale=0.2)
        sigma = 0.5
        lam1 = np.linalg.eigvalsh(S0)[-1]
        st = TaskStats.empty(3)
        for _ in range(30):
            a = rng.normal(size=3)
            a /= np.linalg.norm(a)
            u = np.linalg.solve(pd_inverse(S0) + st.G, a)
            assert 1 + a @ u / sigma**2 <= 1 + lam1 / sigma**2 + 1e-12
            st = update_task_stats(st, a, 0.0, sigma)


class TestPathEquivalence:
    def test_karmed_matches_linear(self):
        rng = np.random.default_rng(11)
        K, m = 4, 3
        sq, s0, sigma = 0.8, 0.3, 0.6
        mu_q = rng.normal(size=K)
        tasks, actions, rewards = random_basis_history(rng, K, m, 25)
        stats = history_stats(K, m, tasks, actions, rewards, sigma)
        lin = hyper_posterior_linear(mu_q, sq**2 * np.eye(K), s0**2 * np.eye(K), stats)
        kar = hyper_posterior_karmed(mu_q, sq, s0, sigma, stats)
        np.testing.assert_allclose(kar.mean, lin.mean, atol=1e-10)
        np.testing.assert_allclose(kar.cov, lin.cov, atol=1e-10)
        mu_t = rng.normal(size=K)
        for st in stats:
            a = task_conditional_linear(mu_t, s0**2 * np.eye(K), st)
            b = task_conditional_karmed(mu_t, s0, sigma, st)
            np.testing.assert_allclose(a.mean, b.mean, atol=1e-10)
            np.testing.assert_allclose(a.cov, b.cov, atol=1e-10)
