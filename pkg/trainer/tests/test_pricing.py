"""Closed-form pricing oracle checks.

The bivariate normal CDF is validated against scipy's multivariate_normal,
an implementation the trainer does not use internally, so agreement is a
genuine cross-check rather than a tautology.
"""

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from pino_trainer import ConfigError, MarketParams, bvn_cdf, payoff, price, price_grid


def _scipy_bvn(h, k, rho):
    cov = [[1.0, rho], [rho, 1.0]]
    return multivariate_normal(mean=[0.0, 0.0], cov=cov).cdf([h, k])


class TestBvnCdf:
    @pytest.mark.parametrize("h,k,rho", [
        (0.0, 0.0, 0.0),
        (0.0, 0.0, 0.5),
        (0.3, -0.4, 0.5),
        (1.2, 0.7, -0.6),
        (-1.5, 2.0, 0.9),
        (2.5, 2.5, -0.9),
        (-2.0, -2.0, 0.3),
        (0.5, 0.5, 0.95),
        (3.5, -3.0, -0.2),
        (1.0, 1.0, 0.0),
    ])
    def test_matches_scipy(self, h, k, rho):
        ours = float(bvn_cdf(np.float64(h), np.float64(k), rho))
        ref = _scipy_bvn(h, k, rho)
        assert ours == pytest.approx(ref, abs=5e-10)

    def test_zero_correlation_factorises(self):
        from pino_trainer import norm_cdf
        h = np.linspace(-2.0, 2.0, 9)
        k = np.linspace(-1.0, 3.0, 9)
        assert np.allclose(bvn_cdf(h, k, 0.0), norm_cdf(h) * norm_cdf(k), atol=1e-14)

    def test_monotone_in_arguments(self):
        lo = bvn_cdf(np.float64(-0.5), np.float64(0.2), 0.4)
        hi = bvn_cdf(np.float64(0.5), np.float64(0.2), 0.4)
        assert hi > lo

    def test_bounds(self, rng):
        h = rng.normal(size=200)
        k = rng.normal(size=200)
        v = bvn_cdf(h, k, 0.7)
        assert np.all(v >= 0.0) and np.all(v <= 1.0)


class TestMarketParams:
    def test_benchmark_values(self, params):
        assert params.sigma1 == 0.3 and params.sigma2 == 0.3
        assert params.rho == 0.5 and params.r == 1.0
        assert params.s1 == 100.0 and params.s2 == 100.0
        assert params.cash == 1.0 and params.maturity == 1.0

    @pytest.mark.parametrize("kwargs", [
        dict(sigma1=-0.1), dict(rho=1.2), dict(s1=0.0), dict(maturity=-1.0),
    ])
    def test_invalid_rejected(self, kwargs):
        base = dict(sigma1=0.3, sigma2=0.3, rho=0.5, r=1.0,
                    s1=100.0, s2=100.0, cash=1.0, maturity=1.0)
        base.update(kwargs)
        with pytest.raises(ConfigError):
            MarketParams(**base)


class TestPayoff:
    def test_indicator(self, params):
        x = np.array([150.0, 150.0, 50.0, 100.0])
        y = np.array([120.0, 80.0, 120.0, 100.0])
        expect = np.array([1.0, 0.0, 0.0, 1.0]) * params.cash
        assert np.array_equal(payoff(x, y, params), expect)


class TestPrice:
    def test_zero_tau_is_payoff(self, params, rng):
        x = rng.uniform(0.0, 300.0, size=50)
        y = rng.uniform(0.0, 300.0, size=50)
        assert np.array_equal(price(x, y, 0.0, params), payoff(x, y, params))

    def test_negative_tau_rejected(self, params):
        with pytest.raises(ConfigError):
            price(np.array([100.0]), np.array([100.0]), -0.1, params)

    def test_absorbed_assets_price_zero(self, params):
        v = price(np.array([0.0, 100.0]), np.array([100.0, 0.0]), 0.5, params)
        assert np.array_equal(v, np.zeros(2))

    def test_discount_bound(self, params, rng):
        tau = 0.7
        x = rng.uniform(1.0, 300.0, size=100)
        y = rng.uniform(1.0, 300.0, size=100)
        v = price(x, y, tau, params)
        assert np.all(v >= 0.0)
        assert np.all(v <= params.cash * np.exp(-params.r * tau) + 1e-12)

    def test_deep_in_the_money_limit(self, params):
        v = float(price(np.array([10_000.0]), np.array([10_000.0]), 0.25, params)[0])
        assert v == pytest.approx(params.cash * np.exp(-params.r * 0.25), rel=1e-9)

    def test_tau_broadcasts(self, params):
        x = np.full(3, 120.0)
        y = np.full(3, 130.0)
        tau = np.array([0.0, 0.3, 0.6])
        v = price(x, y, tau, params)
        for i, t in enumerate(tau):
            assert v[i] == pytest.approx(float(price(x[:1], y[:1], float(t), params)[0]))

    def test_grid_matches_pointwise(self, params):
        nx = np.array([50.0, 100.0, 200.0])
        ny = np.array([80.0, 160.0])
        g = price_grid(nx, ny, 0.4, params)
        assert g.shape == (3, 2)
        for i, xv in enumerate(nx):
            for j, yv in enumerate(ny):
                assert g[i, j] == pytest.approx(
                    float(price(np.array([xv]), np.array([yv]), 0.4, params)[0]))

    def test_pde_satisfied_pointwise(self, params):
        """Backward-time operator defect of the closed form via central differences."""
        rng = np.random.default_rng(7)
        pts = rng.uniform(60.0, 240.0, size=(20, 2))
        ts = rng.uniform(0.1, 0.9, size=20)
        h = 1e-3
        p = params

        def u(xx, yy, tt):
            return float(price(np.array([xx]), np.array([yy]), tt, p)[0])

        for (x, y), t in zip(pts, ts):
            u_t = (u(x, y, t + h) - u(x, y, t - h)) / (2 * h)
            u_x = (u(x + h, y, t) - u(x - h, y, t)) / (2 * h)
            u_y = (u(x, y + h, t) - u(x, y - h, t)) / (2 * h)
            u_xx = (u(x + h, y, t) - 2 * u(x, y, t) + u(x - h, y, t)) / h**2
            u_yy = (u(x, y + h, t) - 2 * u(x, y, t) + u(x, y - h, t)) / h**2
            u_xy = (u(x + h, y + h, t) - u(x + h, y - h, t)
                    - u(x - h, y + h, t) + u(x - h, y - h, t)) / (4 * h**2)
            gen = (0.5 * p.sigma1**2 * x**2 * u_xx
                   + p.rho * p.sigma1 * p.sigma2 * x * y * u_xy
                   + 0.5 * p.sigma2**2 * y**2 * u_yy
                   + p.r * x * u_x + p.r * y * u_y - p.r * u(x, y, t))
            assert u_t == pytest.approx(gen, abs=5e-4)
