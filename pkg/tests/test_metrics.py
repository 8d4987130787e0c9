import numpy as np
import pytest

from teleadapt.metrics import MetricAccumulator, accumulate, delta_f, delta_p


class TestDeltaP:
    def test_arithmetic(self):
        np.testing.assert_allclose(delta_p([1.0, 2.0], [0.9, 2.0]), [0.1, 0.0], atol=1e-12)

    def test_zero_reference_gives_zero(self):
        np.testing.assert_allclose(delta_p([0.0, 0.5], [0.3, 0.5]), [0.0, 0.0])

    def test_perfect_tracking(self):
        q = np.array([0.7, -1.1])
        np.testing.assert_allclose(delta_p(q, q), [0.0, 0.0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(30)
        for _ in range(100):
            qm = rng.uniform(0.1, 2.0, 2) * rng.choice([-1, 1], 2)
            qs = rng.uniform(-2, 2, 2)
            c = rng.uniform(0.5, 3.0) * rng.choice([-1, 1])
            np.testing.assert_allclose(
                delta_p(c * qm, c * qs), delta_p(qm, qs), rtol=1e-10
            )


class TestDeltaF:
    def test_arithmetic(self):
        np.testing.assert_allclose(delta_f([0.0, 5.0], [0.0, 4.0]), [0.0, 0.25])

    def test_zero_contact_force_gives_zero(self):
        np.testing.assert_allclose(delta_f([3.0, -1.0], [0.0, 0.0]), [0.0, 0.0])

    def test_perfect_force_tracking(self):
        F = np.array([2.0, -3.0])
        np.testing.assert_allclose(delta_f(F, F), [0.0, 0.0])


class TestAccumulate:
    def test_constant_integrand(self):
        acc = MetricAccumulator()
        for k in range(1001):
            accumulate(acc, ([0.1, 0.1], [0.0, 0.0]), k * 0.01)
        np.testing.assert_allclose(acc.dp_integral, [1.0, 1.0], atol=1e-9)

    def test_all_zero(self):
        acc = MetricAccumulator()
        for k in range(100):
            accumulate(acc, (np.zeros(2), np.zeros(2)), k * 0.1)
        assert np.all(acc.dp_integral == 0.0) and np.all(acc.df_integral == 0.0)

    def test_linear_ramp(self):
        acc = MetricAccumulator()
        dt = 1e-3
        for k in range(1001):
            t = k * dt
            accumulate(acc, ([t, 0.0], [0.0, t]), t)
        assert abs(acc.dp_integral[0] - 0.5) < 1e-6
        assert abs(acc.df_integral[1] - 0.5) < 1e-6

    def test_refinement_second_order(self):
        # trapezoid error on a smooth integrand drops ~4x with dt/2
        errs = []
        for dt in (1e-2, 5e-3):
            acc = MetricAccumulator()
            n = int(round(1.0 / dt))
            for k in range(n + 1):
                t = k * dt
                accumulate(acc, ([np.sin(3 * t) ** 2, 0.0], [0.0, 0.0]), t)
            exact = 0.5 - np.sin(6.0) / 12.0
            errs.append(abs(acc.dp_integral[0] - exact))
        assert errs[1] < errs[0] / 3.0

    def test_integrals_never_decrease(self):
        rng = np.random.default_rng(31)
        acc = MetricAccumulator()
        prev = 0.0
        for k in range(200):
            accumulate(acc, (rng.uniform(0, 1, 2), rng.uniform(0, 1, 2)), k * 0.01)
            cur = acc.dp_integral.sum() + acc.df_integral.sum()
            assert cur >= prev
            prev = cur

    def test_time_order_enforced(self):
        acc = MetricAccumulator()
        accumulate(acc, (np.zeros(2), np.zeros(2)), 1.0)
        with pytest.raises(ValueError):
            accumulate(acc, (np.zeros(2), np.zeros(2)), 0.5)
