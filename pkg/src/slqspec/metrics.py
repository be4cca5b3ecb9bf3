"""Spectral and gradient-geometry diagnostics for optimization trajectories."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_count, check_vector
from .exceptions import ConvergenceError, DegenerateSpectrumError, InvalidInputError
from .linalg import sym_eig_dense
from .operator import SymmetricOperator
from .slq import lanczos, random_probe


@dataclass(frozen=True)
class SubspaceBasis:
    """``r`` orthonormal vectors of length ``n``, stored as columns."""

    vectors: np.ndarray

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if B.ndim != 2 or B.shape[1] > B.shape[0]:
            raise InvalidInputError("basis must be an n x r array with r <= n")
        gram = B.T @ B
        if np.max(np.abs(gram - np.eye(B.shape[1]))) > 1e-8:
            raise InvalidInputError("basis vectors are not orthonormal")
        object.__setattr__(self, "vectors", B)

    @property
    def n(self):
        return self.vectors.shape[0]

    @property
    def r(self):
        return self.vectors.shape[1]


def _descending(eigenvalues):
    return np.sort(check_vector(eigenvalues, name="eigenvalues"))[::-1]


def zeta(eigenvalues, K):
    """Outlier ratio ``lambda_1 / lambda_K`` (K-th largest, signed)."""
    lam = _descending(eigenvalues)
    K = check_count(K, "K")
    if K > lam.size:
        raise InvalidInputError(f"K={K} exceeds the number of eigenvalues {lam.size}")
    if lam[K - 1] == 0.0:
        raise DegenerateSpectrumError(f"lambda_{K} is zero")
    return float(lam[0] / lam[K - 1])


def signed_energy(eigenvalues, p, sign):
    """``(1/n) * sum |lambda|^p`` over the negative or positive eigenvalues."""
    lam = check_vector(eigenvalues, name="eigenvalues")
    if p not in (1, 2):
        raise InvalidInputError("p must be 1 or 2")
    if sign == "neg":
        sel = lam[lam < 0]
    elif sign == "pos":
        sel = lam[lam > 0]
    else:
        raise InvalidInputError("sign must be 'neg' or 'pos'")
    return float(np.sum(np.abs(sel) ** p) / lam.size)


def signed_energy_density(density, p, sign):
    """Same quantity from a density estimate: integral of ``|t|^p phi(t)`` over one sign."""
    t, phi = density.grid, density.values
    mask = t < 0 if sign == "neg" else t > 0
    if sign not in ("neg", "pos") or p not in (1, 2):
        raise InvalidInputError("p must be 1 or 2 and sign 'neg' or 'pos'")
    integrand = np.where(mask, np.abs(t) ** p * phi, 0.0)
    return float(np.trapezoid(integrand, t))


def energies(eigenvalues):
    return {f"l{p}_{s}": signed_energy(eigenvalues, p, s) for p in (1, 2) for s in ("neg", "pos")}


def top_eigenvectors(A, r, m=None, seed=0, rtol=1e-6):
    """Orthonormal basis for the ``r`` algebraically largest eigenpairs.

    Dense arrays go through the exact eigensolver. Operators use Ritz vectors
    of an ``m``-step Lanczos run (default ``max(3r, 60)``, capped at ``n``);
    every returned Ritz pair must have residual below ``rtol`` times the
    largest Ritz value magnitude.
    """
    r = check_count(r, "r")
    if not isinstance(A, SymmetricOperator):
        dec = sym_eig_dense(A)
        if r > dec.eigenvalues.size:
            raise InvalidInputError(f"r={r} exceeds n={dec.eigenvalues.size}")
        return SubspaceBasis(dec.eigenvectors[:, :r])

    if r > A.n:
        raise InvalidInputError(f"r={r} exceeds n={A.n}")
    m = min(A.n, max(3 * r, 60) if m is None else m)
    res = lanczos(A, random_probe(A.n, seed), m)
    theta, U = np.linalg.eigh(res.T.to_dense())
    order = np.argsort(theta)[::-1][:r]
    if order.size < r:
        raise ConvergenceError(f"Krylov space of dimension {res.m} too small for r={r}")
    Y = res.basis.T @ U[:, order]
    Y, _ = np.linalg.qr(Y)
    scale = max(np.max(np.abs(theta)), np.finfo(float).tiny)
    resid = np.array([np.linalg.norm(A.apply(Y[:, i]) - theta[order[i]] * Y[:, i])
                      for i in range(r)])
    if np.any(resid > rtol * scale):
        raise ConvergenceError(f"Ritz pairs not converged, residuals {resid.tolist()}")
    return SubspaceBasis(Y)


def projection_ratio(g, B):
    g = check_vector(g, n=B.n, name="g")
    gg = float(g @ g)
    if gg == 0.0:
        raise DegenerateSpectrumError("zero gradient")
    c = B.vectors.T @ g
    return float(min(1.0, (c @ c) / gg))


def subspace_overlap(U, W):
    """Mean fraction of each ``U`` basis vector's energy captured by span(W)."""
    if U.n != W.n:
        raise InvalidInputError("bases live in different dimensions")
    C = W.vectors.T @ U.vectors
    return float(np.sum(C * C) / U.r)


def path_alignment(grad, displacement):
    """Cosine between the gradient and ``theta_t - theta_star``."""
    g = check_vector(grad, name="grad")
    d = check_vector(displacement, n=g.size, name="displacement")
    ng, nd = np.linalg.norm(g), np.linalg.norm(d)
    if ng == 0.0 or nd == 0.0:
        raise DegenerateSpectrumError("zero vector in path alignment")
    return float(np.clip(g @ d / (ng * nd), -1.0, 1.0))


def metrics_report(step, eigenvalues, K, grad=None, hessian_basis=None,
                   displacement=None, covariance_basis=None):
    """Assemble the per-checkpoint metrics dictionary."""
    lam = _descending(eigenvalues)
    report = {"step": int(step), "energies": energies(lam)}
    try:
        report["zeta"] = zeta(lam, K)
    except DegenerateSpectrumError:
        report["zeta"] = None
    report["lambda_K_negative"] = bool(lam[K - 1] < 0)
    report["projection_ratio"] = (projection_ratio(grad, hessian_basis)
                                  if grad is not None and hessian_basis is not None
                                  and np.any(grad) else None)
    report["path_alignment"] = (path_alignment(grad, displacement)
                                if grad is not None and displacement is not None
                                and np.any(grad) and np.any(displacement) else None)
    report["subspace_overlap"] = (subspace_overlap(hessian_basis, covariance_basis)
                                  if hessian_basis is not None and covariance_basis is not None
                                  else None)
    return report
