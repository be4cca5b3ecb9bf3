"""Chebyshev kernel-polynomial baseline for spectral density estimation.

The Gaussian kernel at each evaluation point is interpolated by a Chebyshev
series on an interval enclosing the spectrum, and the probe's spectral
measure enters only through its Chebyshev moments ``v^T T_j(H~) v``, where
``H~`` is the operator affinely mapped onto ``[-1, 1]``. With a narrow kernel
the interpolant needs a very high degree, and the estimate develops
oscillations and negative lobes.
"""

import math
import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_grid, check_positive, check_vector
from .exceptions import InvalidInputError
from .operator import as_operator
from .slq import (SpectralDensityEstimate, auto_grid, gaussian_kernel, lanczos,
                  probe_seeds, random_probe)


@dataclass(frozen=True)
class ChebyshevApprox:
    coefficients: np.ndarray
    interval: tuple

    @property
    def degree(self):
        return self.coefficients.size - 1

    def __call__(self, x):
        return np.polynomial.chebyshev.chebval(_to_unit(x, self.interval), self.coefficients)


@dataclass(frozen=True)
class MomentVector:
    """Chebyshev moments ``mu_0 .. mu_m`` (``mu_0`` is the squared probe norm)."""

    values: np.ndarray
    interval: tuple

    @property
    def degree(self):
        return self.values.size - 1


def _check_interval(interval):
    lo, hi = (float(x) for x in interval)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        raise InvalidInputError(f"degenerate interval [{lo}, {hi}]")
    return lo, hi


def _to_unit(x, interval):
    lo, hi = interval
    return (2.0 * np.asarray(x, dtype=np.float64) - (lo + hi)) / (hi - lo)


def _from_unit(x, interval):
    lo, hi = interval
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo)


def _collocation_matrix(degree):
    """Map samples at first-kind Chebyshev points to series coefficients."""
    N = degree + 1
    theta = math.pi * (np.arange(N) + 0.5) / N
    C = (2.0 / N) * np.cos(np.outer(np.arange(N), theta))
    C[0] *= 0.5
    return np.cos(theta), C


def chebyshev_fit(func, degree, interval=(-1.0, 1.0)):
    """Interpolate a vectorized ``func`` at the ``degree + 1`` Chebyshev points."""
    degree = check_count(degree, "degree", minimum=0)
    interval = _check_interval(interval)
    x, C = _collocation_matrix(degree)
    samples = np.asarray(func(_from_unit(x, interval)), dtype=np.float64)
    return ChebyshevApprox(coefficients=C @ samples, interval=interval)


def cheb_coeffs(t, sigma2, degree, interval):
    """Chebyshev interpolant of ``lambda -> N(t; lambda, sigma2)`` on ``interval``."""
    sigma2 = check_positive(sigma2, "sigma2")
    return chebyshev_fit(lambda lam: gaussian_kernel(lam, t, sigma2), degree, interval)


def kernel_coefficient_matrix(grid, sigma2, degree, interval):
    """Rows are the kernel interpolation coefficients for each grid point."""
    sigma2 = check_positive(sigma2, "sigma2")
    interval = _check_interval(interval)
    x, C = _collocation_matrix(check_count(degree, "degree", minimum=0))
    lam = _from_unit(x, interval)
    F = gaussian_kernel(lam[None, :], np.asarray(grid)[:, None], sigma2)
    return F @ C.T


def cheb_moments(op, v, degree, interval):
    """Moments by the vector recurrence ``w_{j+1} = 2 H~ w_j - w_{j-1}``;
    uses exactly ``degree`` operator applications."""
    op = as_operator(op)
    v = check_vector(v, n=op.n)
    degree = check_count(degree, "degree", minimum=0)
    lo, hi = _check_interval(interval)
    a, b = 2.0 / (hi - lo), -(hi + lo) / (hi - lo)

    def scaled(w):
        return a * op.apply(w) + b * w

    mu = np.empty(degree + 1)
    w_prev, w = None, v
    mu[0] = v @ v
    for j in range(1, degree + 1):
        w_next = scaled(w) if j == 1 else 2.0 * scaled(w) - w_prev
        w_prev, w = w, w_next
        mu[j] = v @ w
    return MomentVector(values=mu, interval=(lo, hi))


def exact_cheb_moments(eigenvalues, weights, degree, interval):
    """Moments of the discrete measure ``sum_i weights_i delta(lambda_i)``."""
    interval = _check_interval(interval)
    x = _to_unit(check_vector(eigenvalues, name="eigenvalues"), interval)
    wts = check_vector(weights, n=x.size, name="weights")
    T = np.polynomial.chebyshev.chebvander(x, check_count(degree, "degree", minimum=0))
    return MomentVector(values=wts @ T, interval=interval)


def spectral_interval(op, steps=30, margin=0.05, seed=0):
    """Extreme Ritz values of a short Lanczos run, widened by ``margin`` of the width per side."""
    op = as_operator(op)
    res = lanczos(op, random_probe(op.n, seed), min(steps, op.n))
    ritz = np.linalg.eigvalsh(res.T.to_dense())
    lo, hi = float(ritz[0]), float(ritz[-1])
    width = hi - lo
    if width <= 0:
        width = max(abs(lo), 1.0)
    return lo - margin * width, hi + margin * width


def density_from_moments(moments, grid, sigma2):
    coef = kernel_coefficient_matrix(grid, sigma2, moments.degree, moments.interval)
    return coef @ moments.values


def estimate_density_cheb(op, k=10, degree=90, sigma2=1e-5, grid=None, seed=0,
                          interval=None):
    """Kernel-polynomial estimate averaged over ``k`` random unit probes.

    Values may be negative; that is a property of the method. If
    ``interval`` is omitted it is estimated with :func:`spectral_interval`
    (30 extra operator applications).
    """
    op = as_operator(op)
    sigma2 = check_positive(sigma2, "sigma2")
    start = time.perf_counter()
    if interval is None:
        interval = spectral_interval(op, seed=seed)
    interval = _check_interval(interval)
    if grid is None:
        grid = auto_grid(np.array(interval), sigma2)
    grid = check_grid(grid)
    seeds = probe_seeds(seed, check_count(k, "k"))
    mu = np.zeros(degree + 1)
    for s in seeds:
        mu = mu + cheb_moments(op, random_probe(op.n, s), degree, interval).values
    moments = MomentVector(values=mu / len(seeds), interval=interval)
    return SpectralDensityEstimate(
        grid=grid, values=density_from_moments(moments, grid, sigma2), sigma2=sigma2,
        k=len(seeds), m=degree, seeds=seeds,
        meta={"n": op.n, "method": "chebyshev", "interval": list(interval),
              "runtime_seconds": time.perf_counter() - start})


def exact_density_cheb(eigenvalues, degree, sigma2, grid, interval=None):
    """Kernel-polynomial estimate fed with exact moments of the uniform spectral measure."""
    lam = check_vector(eigenvalues, name="eigenvalues")
    if interval is None:
        width = lam.max() - lam.min()
        interval = (lam.min() - 0.05 * width, lam.max() + 0.05 * width)
    moments = exact_cheb_moments(lam, np.full(lam.size, 1.0 / lam.size), degree, interval)
    grid = check_grid(grid)
    return SpectralDensityEstimate(
        grid=grid, values=density_from_moments(moments, grid, sigma2), sigma2=sigma2,
        m=degree, meta={"n": lam.size, "method": "chebyshev-exact-moments",
                        "interval": list(moments.interval)})


class ChebyshevDensity(BaseEstimator):
    """Kernel-polynomial counterpart of :class:`~slqspec.slq.SLQDensity`."""

    def __init__(self, n_probes=10, degree=90, sigma2=1e-5, seed=0, interval=None,
                 grid_points=1000):
        self.n_probes = n_probes
        self.degree = degree
        self.sigma2 = sigma2
        self.seed = seed
        self.interval = interval
        self.grid_points = grid_points

    def fit(self, op, y=None):
        op = as_operator(op)
        interval = self.interval if self.interval is not None else spectral_interval(op, seed=self.seed)
        self.interval_ = _check_interval(interval)
        self.seeds_ = probe_seeds(self.seed, check_count(self.n_probes, "n_probes"))
        mu = np.zeros(self.degree + 1)
        for s in self.seeds_:
            mu = mu + cheb_moments(op, random_probe(op.n, s), self.degree, self.interval_).values
        self.moments_ = MomentVector(values=mu / len(self.seeds_), interval=self.interval_)
        self.n_features_in_ = op.n
        return self

    def density(self, grid):
        check_is_fitted(self, "moments_")
        return density_from_moments(self.moments_, check_grid(grid), self.sigma2)

    def estimate(self, grid=None):
        check_is_fitted(self, "moments_")
        grid = auto_grid(np.array(self.interval_), self.sigma2, self.grid_points) \
            if grid is None else check_grid(grid)
        return SpectralDensityEstimate(
            grid=grid, values=self.density(grid), sigma2=float(self.sigma2),
            k=len(self.seeds_), m=self.degree, seeds=self.seeds_,
            meta={"n": self.n_features_in_, "method": "chebyshev",
                  "interval": list(self.interval_)})
