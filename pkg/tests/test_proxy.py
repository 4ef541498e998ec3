import numpy as np
import pytest

from ptdistill.core import InvalidInputError, ProbVector
from ptdistill.losses import PerturbationConfig, pt_rows
from ptdistill.proxy import (
    SolverConfig,
    _gradient_rows,
    _hessian_rows,
    proxy_objective_rows,
    solve_proxy_batch,
    solve_proxy_example,
    solve_proxy_rows,
)


def grid_oracle(teacher, cfg, step=1e-6):
    """Binary dense grid argmin of the per-example objective."""
    q0 = np.arange(step, 1.0, step)
    q = np.stack([q0, 1.0 - q0], axis=1)
    g = pt_rows(np.tile(teacher, (q0.size, 1)), q, cfg)
    i = int(np.argmin(g))
    return q[i], float(g[i])


class TestGradientAndHessian:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(61)
        h = 1e-6
        for _ in range(50):
            c = int(rng.integers(2, 5))
            t = rng.dirichlet(np.ones(c))
            z = rng.uniform(-2, 2, size=c)
            m = int(rng.integers(1, 4))
            cfg = PerturbationConfig(m, rng.uniform(-2, 2, size=(c, m)))
            grad = _gradient_rows(t[None], z[None], cfg)[0]
            from ptdistill.core import softmax_rows
            for j in range(c):
                e = np.zeros(c)
                e[j] = h
                up = pt_rows(t, softmax_rows(z + e), cfg)
                dn = pt_rows(t, softmax_rows(z - e), cfg)
                assert grad[j] == pytest.approx(
                    float(up - dn) / (2 * h), abs=2e-6, rel=1e-4)

    def test_hessian_matches_gradient_differences(self):
        rng = np.random.default_rng(63)
        h = 1e-6
        for _ in range(20):
            c = int(rng.integers(2, 5))
            t = rng.dirichlet(np.ones(c))
            z = rng.uniform(-2, 2, size=c)
            m = int(rng.integers(1, 4))
            cfg = PerturbationConfig(m, rng.uniform(-2, 2, size=(c, m)))
            hess = _hessian_rows(t[None], z[None], cfg)[0]
            for j in range(c):
                e = np.zeros(c)
                e[j] = h
                up = _gradient_rows(t[None], (z + e)[None], cfg)[0]
                dn = _gradient_rows(t[None], (z - e)[None], cfg)[0]
                fd = (up - dn) / (2 * h)
                np.testing.assert_allclose(hess[:, j], fd, atol=5e-6)


class TestSolveProxyExample:
    def test_zero_coefficients_return_teacher(self):
        rng = np.random.default_rng(65)
        for c in (2, 3, 10):
            for _ in range(20):
                t = rng.dirichlet(np.ones(c))
                t = np.clip(t, 1e-4, None)
                t /= t.sum()
                sol = solve_proxy_example(ProbVector(t),
                                          PerturbationConfig.zero(c))
                assert sol.converged
                np.testing.assert_allclose(sol.proxy.values, t, atol=1e-8)

    def test_direct_binary_value(self):
        sol = solve_proxy_example(ProbVector([0.8, 0.2]),
                                  PerturbationConfig.tied([1.0], 2))
        assert sol.converged
        assert sol.proxy.values[0] == pytest.approx(
            0.8685170917577956, abs=1e-8)
        obj = float(proxy_objective_rows(np.array([0.8, 0.2]),
                                         sol.proxy.values,
                                         PerturbationConfig.tied([1.0], 2)))
        assert obj == pytest.approx(0.29703741473093437, abs=1e-10)

    def test_direct_binary_order_two(self):
        cfg = PerturbationConfig.tied([1.0, 1.0], 2)
        sol = solve_proxy_example(ProbVector([0.8, 0.2]), cfg)
        assert sol.proxy.values[0] == pytest.approx(
            0.8586093362777536, abs=1e-8)

    def test_stationary_gradient(self):
        rng = np.random.default_rng(67)
        for _ in range(50):
            c = int(rng.integers(2, 6))
            t = rng.dirichlet(np.ones(c))
            t = np.clip(t, 1e-3, None)
            t /= t.sum()
            m = int(rng.integers(1, 4))
            cfg = PerturbationConfig(m, rng.uniform(-2, 2, size=(c, m)))
            sol = solve_proxy_example(ProbVector(t), cfg)
            if sol.converged:
                z = np.log(sol.proxy.values)
                grad = _gradient_rows(t[None], z[None], cfg)[0]
                assert np.linalg.norm(grad) <= 1e-6

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            t0 = rng.uniform(0.05, 0.95)
            t = np.array([t0, 1.0 - t0])
            m = int(rng.integers(1, 4))
            cfg = PerturbationConfig(m, rng.uniform(-2, 2, size=(2, m)))
            sol = solve_proxy_example(ProbVector(t), cfg)
            q_star, g_star = grid_oracle(t, cfg)
            obj = float(proxy_objective_rows(t, sol.proxy.values, cfg))
            assert obj == pytest.approx(g_star, abs=1e-6)
            np.testing.assert_allclose(sol.proxy.values, q_star, atol=1e-4)

    def test_idempotent_restart(self):
        # restarting from the solution must terminate immediately
        t = ProbVector([0.7, 0.3])
        cfg = PerturbationConfig.tied([2.0], 2)
        first = solve_proxy_example(t, cfg)
        z = np.log(first.proxy.values)
        z -= z.mean()
        again = solve_proxy_example(t, cfg, start_logits=z)
        assert again.iterations == 0
        np.testing.assert_allclose(again.proxy.values, first.proxy.values,
                                   atol=1e-10)

    def test_reports_nonconvergence(self):
        sol = solve_proxy_example(
            ProbVector([0.8, 0.2]), PerturbationConfig.tied([5.0], 2),
            SolverConfig(max_iterations=1))
        assert not sol.converged
        assert sol.residual_norm > 1e-8


class TestBatchSolvers:
    def test_batch_matches_example(self):
        rng = np.random.default_rng(71)
        teachers = rng.dirichlet(np.ones(3), size=8)
        cfg = PerturbationConfig(2, rng.uniform(-1, 2, size=(3, 2)))
        sols = solve_proxy_batch(teachers, cfg)
        assert len(sols) == 8
        for row, sol in zip(teachers, sols):
            single = solve_proxy_example(ProbVector(row), cfg)
            np.testing.assert_allclose(sol.proxy.values, single.proxy.values,
                                       atol=1e-9)
            assert sol.converged == single.converged

    def test_rows_matches_batch(self):
        rng = np.random.default_rng(73)
        teachers = rng.dirichlet(np.ones(4), size=6)
        cfg = PerturbationConfig.tied([0.5, -0.2], 4)
        proxies, conv = solve_proxy_rows(teachers, cfg)
        sols = solve_proxy_batch(teachers, cfg)
        np.testing.assert_allclose(
            proxies, np.stack([s.proxy.values for s in sols]), atol=1e-12)
        assert list(conv) == [s.converged for s in sols]

    def test_empty_batch(self):
        with pytest.raises(InvalidInputError):
            solve_proxy_batch([], PerturbationConfig.zero(2))

    def test_mismatched_classes(self):
        with pytest.raises(InvalidInputError):
            solve_proxy_rows(np.full((3, 4), 0.25),
                             PerturbationConfig.tied([1.0], 3))


class TestSolverConfig:
    @pytest.mark.parametrize("kwargs", [
        {"tolerance": 0.0},
        {"max_iterations": 0},
        {"damping_init": -1.0},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(InvalidInputError):
            SolverConfig(**kwargs)
