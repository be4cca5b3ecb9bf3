"""Stochastic Lanczos quadrature for smoothed spectral densities.

Each random unit probe ``v`` defines a spectral measure with weights
``(v . q_i)^2`` on the eigenvalues of the operator. ``m`` Lanczos steps give a
tridiagonal ``T`` whose eigenvalues and squared first eigenvector components
are the nodes and weights of the ``m``-point Gauss rule for that measure; the
rule is exact for polynomials of degree ``2m - 1``. Convolving the rule with
a Gaussian kernel and averaging over probes estimates the smoothed density
``(1/n) sum_i N(t; lambda_i, sigma2)``.
"""

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_count, check_grid, check_positive, check_vector
from .exceptions import InvalidInputError
from .linalg import TridiagonalMatrix, sym_tridiag_eig_firstrow
from .operator import as_operator

BREAKDOWN_RTOL = 1e-12


@dataclass(frozen=True)
class LanczosResult:
    T: TridiagonalMatrix
    basis: np.ndarray = field(repr=False)  # (m_eff, n), rows orthonormal
    breakdown: Optional[int] = None

    @property
    def m(self):
        return self.T.m


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, g):
        """Apply the rule to a vectorized function ``g``."""
        return float(np.dot(self.weights, g(self.nodes)))


@dataclass
class SpectralDensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    sigma2: float
    k: Optional[int] = None
    m: Optional[int] = None
    seeds: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def integral(self):
        return float(np.trapezoid(self.values, self.grid))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "density"])
            for t, y in zip(self.grid, self.values):
                writer.writerow([format(t, ".17g"), format(y, ".17g")])

    @classmethod
    def from_csv(cls, path, sigma2=float("nan")):
        try:
            with open(path, newline="") as fh:
                rows = list(csv.reader(fh))
            if not rows or [c.strip() for c in rows[0]] != ["t", "density"]:
                raise InvalidInputError(f"{path}: missing 't,density' header")
            data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        except ValueError as exc:
            raise InvalidInputError(f"{path}: parse error: {exc}") from None
        if data.shape[0] < 2:
            raise InvalidInputError(f"{path}: needs at least two grid points")
        return cls(grid=data[:, 0], values=data[:, 1], sigma2=sigma2)

    def metadata(self):
        out = {"n": self.meta.get("n"), "k": self.k, "m": self.m,
               "sigma2": self.sigma2, "seeds": list(self.seeds)}
        out.update({key: val for key, val in self.meta.items() if key != "n"})
        return out

    def write_metadata(self, path):
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2)


@dataclass(frozen=True)
class ConcentrationReport:
    n: int
    k: int
    sigma: float
    x: np.ndarray
    epsilon: np.ndarray
    probability: np.ndarray
    epsilon_norm: Optional[np.ndarray] = None

    def rows(self):
        eps_norm = self.epsilon_norm if self.epsilon_norm is not None else [None] * len(self.x)
        return [{"x": float(x), "epsilon": float(e), "probability_bound": float(p),
                 "epsilon_norm_dependent": None if en is None else float(en)}
                for x, e, p, en in zip(self.x, self.epsilon, self.probability, eps_norm)]


def gaussian_kernel(lam, t, sigma2):
    """Normal density with mean ``lam`` and variance ``sigma2`` evaluated at ``t``."""
    sigma2 = check_positive(sigma2, "sigma2")
    lam = np.asarray(lam, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    out = np.exp(-(t - lam) ** 2 / (2.0 * sigma2)) / math.sqrt(2.0 * math.pi * sigma2)
    return float(out) if out.ndim == 0 else out


def lanczos(op, v0, m, breakdown_rtol=BREAKDOWN_RTOL):
    """``m`` Lanczos steps with full (twice-applied) Gram-Schmidt reorthogonalization.

    Stops early when the residual norm drops below ``breakdown_rtol`` times
    the running operator scale, in which case the Krylov space is invariant
    and the truncated rule is exact.
    """
    op = as_operator(op)
    n = op.n
    m = check_count(m, "m")
    if m > n:
        raise InvalidInputError(f"m={m} exceeds operator dimension n={n}")
    v = check_vector(v0, n=n, name="v0")
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise InvalidInputError("v0 must have unit norm")

    V = np.zeros((m, n))
    V[0] = v
    alphas, betas = [], []
    scale = 0.0
    breakdown = None
    for j in range(m):
        w = op.apply(V[j])
        scale = max(scale, float(np.linalg.norm(w)))
        alpha = float(V[j] @ w)
        w = w - alpha * V[j]
        if j > 0:
            w = w - betas[-1] * V[j - 1]
        basis = V[:j + 1]
        for _ in range(2):
            w = w - basis.T @ (basis @ w)
        alphas.append(alpha)
        if j == m - 1:
            break
        beta = float(np.linalg.norm(w))
        if beta <= breakdown_rtol * max(scale, np.finfo(float).tiny):
            breakdown = j + 1
            break
        betas.append(beta)
        V[j + 1] = w / beta
    m_eff = len(alphas)
    return LanczosResult(T=TridiagonalMatrix(alphas, betas[:m_eff - 1]),
                         basis=V[:m_eff].copy(), breakdown=breakdown)


def golub_welsch(T):
    """Gauss quadrature rule from a Jacobi matrix: nodes = eigenvalues of T,
    weights = squared first components of its unit eigenvectors."""
    eig = sym_tridiag_eig_firstrow(T)
    return QuadratureRule(nodes=eig.eigenvalues, weights=eig.first_row_sq)


def probe_density(rule, grid, sigma2):
    grid = np.asarray(grid, dtype=np.float64)
    K = gaussian_kernel(rule.nodes[:, None], grid[None, :], sigma2)
    return rule.weights @ K


def probe_seeds(seed, k):
    """Per-probe integer seeds derived deterministically from a master seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(k, dtype=np.uint64)]


def random_probe(n, seed):
    """Draw ``v ~ N(0, I/n)`` and rescale it to unit length."""
    v = np.random.default_rng(seed).standard_normal(n) / math.sqrt(n)
    return v / np.linalg.norm(v)


def quadrature_rules(op, k, m, seed=0):
    """Gauss rules for ``k`` random probes; returns (rules, seeds, breakdown steps)."""
    op = as_operator(op)
    k = check_count(k, "k")
    m = min(check_count(m, "m"), op.n)
    seeds = probe_seeds(seed, k)
    rules, breakdowns = [], []
    for s in seeds:
        res = lanczos(op, random_probe(op.n, s), m)
        rules.append(golub_welsch(res.T))
        breakdowns.append(res.breakdown)
    return rules, seeds, breakdowns


def auto_grid(nodes, sigma2, points=1000):
    """Uniform grid over the node range padded by ``5 sigma`` plus 1% of the range."""
    nodes = np.asarray(nodes, dtype=np.float64)
    lo, hi = float(nodes.min()), float(nodes.max())
    pad = 5.0 * math.sqrt(sigma2) + 0.01 * (hi - lo)
    return np.linspace(lo - pad, hi + pad, points)


def average_density(rules, grid, sigma2):
    acc = np.zeros(grid.size)
    for rule in rules:
        acc = acc + probe_density(rule, grid, sigma2)
    return acc / len(rules)


def estimate_density(op, k=10, m=90, sigma2=1e-5, grid=None, seed=0):
    """Two-stage SLQ estimate of the Gaussian-smoothed spectral density."""
    op = as_operator(op)
    sigma2 = check_positive(sigma2, "sigma2")
    start = time.perf_counter()
    rules, seeds, breakdowns = quadrature_rules(op, k, m, seed)
    if grid is None:
        grid = auto_grid(np.concatenate([r.nodes for r in rules]), sigma2)
    grid = check_grid(grid)
    values = average_density(rules, grid, sigma2)
    return SpectralDensityEstimate(
        grid=grid, values=values, sigma2=sigma2, k=len(rules), m=min(m, op.n), seeds=seeds,
        meta={"n": op.n, "method": "slq", "breakdown_steps": breakdowns,
              "runtime_seconds": time.perf_counter() - start})


def exact_smoothed_density(eigenvalues, sigma2, grid):
    lam = check_vector(eigenvalues, name="eigenvalues")
    grid = check_grid(grid)
    values = np.zeros(grid.size)
    for chunk in np.array_split(lam, max(1, lam.size // 256)):
        values += gaussian_kernel(chunk[:, None], grid[None, :], sigma2).sum(axis=0)
    return SpectralDensityEstimate(grid=grid, values=values / lam.size, sigma2=sigma2,
                                   meta={"n": lam.size, "method": "exact"})


def l1_distance(d1, d2):
    """Trapezoid-rule integral of ``|d1 - d2|`` over their common grid."""
    g1 = getattr(d1, "grid", None)
    g2 = getattr(d2, "grid", None)
    if g1 is None or g2 is None or g1.shape != g2.shape or np.any(g1 != g2):
        raise InvalidInputError("densities are not on identical grids")
    return float(np.trapezoid(np.abs(d1.values - d2.values), g1))


def concentration_epsilon(x, n, k, sigma):
    x = np.asarray(x, dtype=np.float64)
    r = x / (n * k)
    return math.sqrt(2.0 / (math.pi * sigma ** 2)) * (np.sqrt(r) + r)


def concentration_bound(n, k, sigma, xs, frob=None, spectral=None):
    """Deviation ``epsilon(x)`` that the k-probe estimate exceeds with
    probability at most ``2 exp(-x)``, at any fixed evaluation point.

    The norm-independent form is always reported. If ``frob`` and
    ``spectral`` (``||f(H)||_F`` and ``||f(H)||_2`` at the evaluation point)
    are given, the sharper norm-dependent form is reported too.
    """
    n = check_count(n, "n")
    k = check_count(k, "k")
    sigma = check_positive(sigma, "sigma")
    xs = np.asarray(xs, dtype=np.float64)
    if np.any(xs < 0):
        raise InvalidInputError("x values must be non-negative")
    eps = concentration_epsilon(xs, n, k, sigma)
    eps_norm = None
    if frob is not None and spectral is not None:
        eps_norm = 2 * frob / (n * math.sqrt(k)) * np.sqrt(xs) + 2 * spectral / (k * n) * xs
    return ConcentrationReport(n=n, k=k, sigma=sigma, x=xs, epsilon=eps,
                               probability=2.0 * np.exp(-xs), epsilon_norm=eps_norm)


class SLQDensity(BaseEstimator):
    """Spectral density estimator for a symmetric operator.

    ``fit`` accepts a :class:`~slqspec.operator.SymmetricOperator` or a dense
    symmetric array and stores one Gauss rule per probe in ``rules_``.
    ``density`` evaluates the averaged kernel mixture on any grid.
    """

    def __init__(self, n_probes=10, degree=90, sigma2=1e-5, seed=0, grid_points=1000):
        self.n_probes = n_probes
        self.degree = degree
        self.sigma2 = sigma2
        self.seed = seed
        self.grid_points = grid_points

    def fit(self, op, y=None):
        op = as_operator(op)
        check_positive(self.sigma2, "sigma2")
        self.rules_, self.seeds_, self.breakdown_steps_ = quadrature_rules(
            op, self.n_probes, self.degree, self.seed)
        self.n_features_in_ = op.n
        nodes = np.concatenate([r.nodes for r in self.rules_])
        self.spectral_range_ = (float(nodes.min()), float(nodes.max()))
        return self

    def default_grid(self):
        check_is_fitted(self, "rules_")
        return auto_grid(np.array(self.spectral_range_), self.sigma2, self.grid_points)

    def density(self, grid):
        check_is_fitted(self, "rules_")
        return average_density(self.rules_, check_grid(grid), self.sigma2)

    def score_samples(self, grid):
        """Log density, following the scikit-learn density-estimator convention."""
        with np.errstate(divide="ignore"):
            return np.log(self.density(grid))

    def estimate(self, grid=None):
        grid = self.default_grid() if grid is None else check_grid(grid)
        return SpectralDensityEstimate(
            grid=grid, values=self.density(grid), sigma2=float(self.sigma2),
            k=len(self.rules_), m=min(self.degree, self.n_features_in_), seeds=self.seeds_,
            meta={"n": self.n_features_in_, "method": "slq",
                  "breakdown_steps": self.breakdown_steps_})
