"""Closed-form two-asset digital prices used to build training targets.

The trainer keeps its own pricing routines on purpose: training data must not
depend on the inference package, so that the exported-fixture parity check
compares two genuinely independent code paths.  The bivariate normal CDF is
evaluated with Gauss-Legendre quadrature of the Drezner correlation integral,
which is plenty for the moderate correlations used here; the test suite pins
it against scipy's mvn implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr

from .errors import ConfigError

QUAD_NODES = 64
DT_CLIP = 37.0          # beyond this many stddevs the cdf saturates in f64


@dataclass(frozen=True, slots=True)
class MarketParams:
    """Model constants of the two-asset problem in diffusion time."""

    sigma1: float
    sigma2: float
    rho: float
    r: float
    s1: float
    s2: float
    cash: float
    maturity: float

    def __post_init__(self) -> None:
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ConfigError("volatilities must be non-negative")
        if not -0.99 <= self.rho <= 0.99:
            raise ConfigError("correlation must lie in [-0.99, 0.99]")
        if self.s1 <= 0 or self.s2 <= 0 or self.cash <= 0 or self.maturity <= 0:
            raise ConfigError("strikes, cash and maturity must be positive")

    @classmethod
    def benchmark(cls) -> "MarketParams":
        return cls(sigma1=0.3, sigma2=0.3, rho=0.5, r=1.0,
                   s1=100.0, s2=100.0, cash=1.0, maturity=1.0)


def norm_cdf(z: np.ndarray | float) -> np.ndarray | float:
    return ndtr(z)


def bvn_cdf(h: np.ndarray | float, k: np.ndarray | float, rho: float) -> np.ndarray:
    """P(Z1 <= h, Z2 <= k) for standard normals with correlation rho.

    Drezner's reduction: the correlation derivative of the CDF is the
    bivariate density at (h, k), so integrating it from 0 to rho and adding
    the independent product gives the full value with one smooth 1-D integral.
    """
    if not -0.99 <= rho <= 0.99:
        raise ConfigError("correlation must lie in [-0.99, 0.99]")
    h = np.asarray(h, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    base = ndtr(h) * ndtr(k)
    if rho == 0.0:
        return base
    nodes, weights = leggauss(QUAD_NODES)
    t = 0.5 * rho * (nodes + 1.0)             # map [-1, 1] -> [0, rho]
    hh = h[..., None]
    kk = k[..., None]
    one_m_t2 = 1.0 - t * t
    expo = -(hh * hh - 2.0 * t * hh * kk + kk * kk) / (2.0 * one_m_t2)
    dens = np.exp(np.clip(expo, -700.0, 0.0)) / (2.0 * np.pi * np.sqrt(one_m_t2))
    return base + 0.5 * rho * (dens * weights).sum(axis=-1)


def payoff(x: np.ndarray, y: np.ndarray, p: MarketParams) -> np.ndarray:
    """Cash paid when both assets finish at or above their strikes."""
    return np.where((np.asarray(x) >= p.s1) & (np.asarray(y) >= p.s2), p.cash, 0.0)


def price(x: np.ndarray, y: np.ndarray, tau: np.ndarray | float,
          p: MarketParams) -> np.ndarray:
    """Discounted both-above probability at time-to-expiry tau.

    tau broadcasts against x and y, so scattered space-time target sets
    evaluate in one call.  tau = 0 entries return the payoff itself;
    non-positive spots price to zero since an absorbed asset can never clear
    its strike.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(tau < 0):
        raise ConfigError("tau must be non-negative")
    x, y, tau = np.broadcast_arrays(x, y, tau)
    live = tau > 0
    pos = (x > 0) & (y > 0)
    xs = np.where(pos, x, 1.0)
    ys = np.where(pos, y, 1.0)
    ts = np.where(live, tau, 1.0)
    st = np.sqrt(ts)
    d1 = (np.log(xs / p.s1) + (p.r - 0.5 * p.sigma1 ** 2) * ts) / (p.sigma1 * st)
    d2 = (np.log(ys / p.s2) + (p.r - 0.5 * p.sigma2 ** 2) * ts) / (p.sigma2 * st)
    d1 = np.clip(d1, -DT_CLIP, DT_CLIP)
    d2 = np.clip(d2, -DT_CLIP, DT_CLIP)
    val = p.cash * np.exp(-p.r * ts) * bvn_cdf(d1, d2, p.rho)
    return np.where(live, np.where(pos, val, 0.0), payoff(x, y, p))


def price_grid(nodes_x: np.ndarray, nodes_y: np.ndarray, tau: float,
               p: MarketParams) -> np.ndarray:
    """Price snapshot on a tensor grid, shape (len(nodes_x), len(nodes_y))."""
    return np.asarray(price(nodes_x[:, None], nodes_y[None, :], tau, p))
