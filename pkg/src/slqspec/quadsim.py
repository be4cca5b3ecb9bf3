"""Gradient descent and SGD on a quadratic model, in the Hessian eigenbasis.

The loss is ``0.5 (theta - theta*)^T H (theta - theta*)`` with
``H = diag(lambda)`` and ``theta* = 0``. SGD gradients are taken on the
shifted loss with ``theta + z``, ``z ~ N(0, S)`` drawn afresh each step.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import check_count, check_positive, check_vector
from .exceptions import InvalidInputError

TRIAL_CHUNK = 1000


@dataclass(frozen=True)
class QuadraticProblem:
    eigenvalues: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        lam = check_vector(self.eigenvalues, name="eigenvalues")
        if np.any(lam <= 0):
            raise InvalidInputError("eigenvalues must be strictly positive")
        if np.any(np.diff(lam) > 0):
            raise InvalidInputError("eigenvalues must be in descending order")
        S = np.asarray(self.S, dtype=np.float64)
        if S.shape != (lam.size, lam.size) or not np.all(np.isfinite(S)):
            raise InvalidInputError("S must be a finite n x n matrix")
        if np.max(np.abs(S - S.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(S))):
            raise InvalidInputError("S must be symmetric")
        S = 0.5 * (S + S.T)
        w = np.linalg.eigvalsh(S)
        if w[0] < -1e-12 * max(1.0, abs(w[-1])):
            raise InvalidInputError("S must be positive semi-definite")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "S", S)

    @property
    def n(self):
        return self.eigenvalues.size

    def noise_factor(self):
        """A matrix ``L`` with ``L L^T = S``."""
        w, V = np.linalg.eigh(self.S)
        return V * np.sqrt(np.clip(w, 0.0, None))


@dataclass
class AlignmentReport:
    eigenvalues: np.ndarray
    mc_estimate: np.ndarray
    mc_stderr: np.ndarray
    closed_form_finite_t: np.ndarray
    closed_form_limit: np.ndarray

    @property
    def rel_error(self):
        return np.abs(self.mc_estimate - self.closed_form_finite_t) / self.closed_form_finite_t

    def to_json(self):
        return [{"lambda": float(l), "mc_estimate": float(mc), "mc_stderr": float(se),
                 "closed_form_finite_t": float(cf), "closed_form_limit": float(lim),
                 "rel_error": float(re)}
                for l, mc, se, cf, lim, re in zip(
                    self.eigenvalues, self.mc_estimate, self.mc_stderr,
                    self.closed_form_finite_t, self.closed_form_limit, self.rel_error)]


def gd_trajectory(problem, theta0, eta, T):
    """Absolute per-coordinate errors ``|theta_t - theta*|`` for t = 0..T, shape (T+1, n).

    Requires ``0 < eta <= 2 / lambda_1``; at the upper end the top coordinate
    neither shrinks nor grows.
    """
    lam = problem.eigenvalues
    eta = check_positive(eta, "eta")
    if eta > 2.0 / lam[0]:
        raise InvalidInputError(f"eta={eta} exceeds 2/lambda_1={2.0 / lam[0]}: GD diverges")
    theta = check_vector(theta0, n=problem.n, name="theta0").copy()
    T = check_count(T, "T", minimum=0)
    out = np.empty((T + 1, problem.n))
    out[0] = np.abs(theta)
    for t in range(1, T + 1):
        theta = theta - eta * (lam * theta)
        out[t] = np.abs(theta)
    return out


def _check_step(lam, eta):
    x = eta * lam
    if np.any(x <= 0) or np.any(x >= 2):
        raise InvalidInputError("need 0 < eta * lambda_i < 2 for every coordinate")
    return x


def sgd_alignment_closed_form(problem, eta, t, i=None):
    """``E[<q_i, theta_{t+1} - theta_t>^2]`` for ``theta_0 ~ N(0, I)``.

    Returns a scalar for coordinate ``i`` (0-based) or the whole vector.
    """
    lam = problem.eigenvalues
    x = _check_step(lam, check_positive(eta, "eta"))
    t = check_count(t, "t", minimum=0)
    r = (1.0 - x) ** 2
    geom = (1.0 - r ** t) / (1.0 - r)
    s_ii = np.diag(problem.S)
    out = x ** 2 * r ** t + (x ** 4 * geom + x ** 2) * s_ii
    return out if i is None else float(out[i])


def sgd_alignment_limit(problem, eta, i=None):
    lam = problem.eigenvalues
    x = _check_step(lam, check_positive(eta, "eta"))
    out = 2.0 * x ** 2 / (2.0 - x) * np.diag(problem.S)
    return out if i is None else float(out[i])


def sgd_alignment_montecarlo(problem, eta, t, trials=10_000, seed=0):
    """Monte Carlo estimate of the single-update alignment after ``t`` SGD steps.

    Trials run in fixed-size chunks, each with its own generator spawned
    from ``seed``, and chunk results are combined in order.
    """
    lam = problem.eigenvalues
    _check_step(lam, check_positive(eta, "eta"))
    t = check_count(t, "t", minimum=0)
    trials = check_count(trials, "trials")
    L = problem.noise_factor()
    n = problem.n
    sizes = [TRIAL_CHUNK] * (trials // TRIAL_CHUNK)
    if trials % TRIAL_CHUNK:
        sizes.append(trials % TRIAL_CHUNK)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    sums = np.zeros(n)
    sq_sums = np.zeros(n)
    for size, child in zip(sizes, children):
        rng = np.random.default_rng(child)
        theta = rng.standard_normal((size, n))
        for _ in range(t):
            z = rng.standard_normal((size, n)) @ L.T
            theta = theta - eta * lam * (theta + z)
        z = rng.standard_normal((size, n)) @ L.T
        update_sq = (eta * lam * (theta + z)) ** 2
        sums += update_sq.sum(axis=0)
        sq_sums += (update_sq ** 2).sum(axis=0)
    mean = sums / trials
    var = np.maximum(sq_sums / trials - mean ** 2, 0.0)
    return AlignmentReport(
        eigenvalues=lam.copy(), mc_estimate=mean, mc_stderr=np.sqrt(var / trials),
        closed_form_finite_t=sgd_alignment_closed_form(problem, eta, t),
        closed_form_limit=sgd_alignment_limit(problem, eta))


def top_share(values, top=1):
    """Fraction of the total carried by the first ``top`` coordinates."""
    values = np.asarray(values, dtype=np.float64)
    return float(values[:top].sum() / values.sum())


def default_problem(n=20, noise="identity", lambda_min=0.05):
    """Geometric spectrum from 1 down to ``lambda_min`` with a chosen noise shape."""
    lam = np.geomspace(1.0, lambda_min, n)
    if noise == "identity":
        S = np.eye(n)
    elif noise == "hessian":
        S = np.diag(lam)
    elif noise == "inverse":
        S = np.diag(1.0 / lam)
    else:
        raise InvalidInputError(f"unknown noise shape {noise!r}")
    return QuadraticProblem(lam, S)
