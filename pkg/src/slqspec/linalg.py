"""Double-precision symmetric eigensolvers and deterministic vector primitives.

The dense solver is the exactness oracle for everything else in the package;
the tridiagonal solver is the Golub-Welsch workhorse and only tracks the first
row of the eigenvector matrix.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from ._validation import check_square, check_vector
from .exceptions import ConvergenceError, InvalidInputError


@dataclass(frozen=True)
class TridiagonalMatrix:
    """Symmetric tridiagonal matrix stored by its diagonal and off-diagonal."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=np.float64).ravel()
        offdiag = np.asarray(self.offdiag, dtype=np.float64).ravel()
        if diag.size < 1:
            raise InvalidInputError("tridiagonal matrix needs order >= 1")
        if offdiag.size != diag.size - 1:
            raise InvalidInputError(
                f"offdiag has {offdiag.size} entries, expected {diag.size - 1}")
        if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(offdiag))):
            raise InvalidInputError("tridiagonal entries must be finite")
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", offdiag)

    @property
    def m(self):
        return self.diag.size

    def to_dense(self):
        return (np.diag(self.diag) + np.diag(self.offdiag, 1)
                + np.diag(self.offdiag, -1))


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in descending order plus eigenvectors or first-row weights.

    Exactly one of ``eigenvectors`` (columns match ``eigenvalues``) and
    ``first_row_sq`` (squared first components ``U[0, i]**2``) is set.
    """

    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray] = None
    first_row_sq: Optional[np.ndarray] = None


def symmetrize(A):
    """Validate ``A`` and return ``(A + A.T) / 2`` as float64."""
    A = check_square(A)
    return 0.5 * (A + A.T)


def sym_eig_dense(A):
    """Full eigendecomposition of a dense symmetric matrix, descending order.

    Uses LAPACK ``dsyev`` (Householder reduction followed by implicit QL/QR).
    The input is symmetrized first.
    """
    A = symmetrize(A)
    w, Q = scipy.linalg.eigh(A, driver="ev", check_finite=False)
    return EigenDecomposition(eigenvalues=w[::-1].copy(),
                              eigenvectors=Q[:, ::-1].copy())


def sym_tridiag_eig_firstrow(T, max_iter=60):
    """Eigenvalues of ``T`` and squared first components of its eigenvectors.

    Implicit-shift QL with Wilkinson-type shifts. Rotations are applied only
    to the first row of the (implicit) eigenvector matrix, so the cost is
    O(m^2) rather than O(m^3).
    """
    if not isinstance(T, TridiagonalMatrix):
        raise InvalidInputError("expected a TridiagonalMatrix")
    m = T.m
    d = T.diag.tolist()
    e = T.offdiag.tolist() + [0.0]
    z = [0.0] * m
    z[0] = 1.0
    eps = np.finfo(np.float64).eps

    for l in range(m):
        it = 0
        while True:
            # locate the first negligible off-diagonal at or after l
            mm = l
            while mm < m - 1:
                dd = abs(d[mm]) + abs(d[mm + 1])
                if abs(e[mm]) <= eps * dd:
                    break
                mm += 1
            if mm == l:
                break
            it += 1
            if it > max_iter:
                raise ConvergenceError(
                    f"tridiagonal QL failed to converge at index {l}")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[mm] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = mm - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[mm] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                f = z[i + 1]
                z[i + 1] = s * z[i] + c * f
                z[i] = c * z[i] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[mm] = 0.0

    d = np.array(d)
    z = np.array(z)
    order = np.argsort(-d, kind="stable")
    return EigenDecomposition(eigenvalues=d[order], first_row_sq=z[order] ** 2)


def dot(u, v):
    """Correctly rounded inner product (order independent, hence deterministic)."""
    u = check_vector(u, name="u")
    v = check_vector(v, n=u.size, name="v")
    return math.fsum((u * v).tolist())


def norm(v):
    v = check_vector(v)
    scale = float(np.max(np.abs(v))) if v.size else 0.0
    if scale == 0.0:
        return 0.0
    w = v / scale
    return scale * math.sqrt(math.fsum((w * w).tolist()))


def axpy(a, x, y):
    """Return ``a * x + y``."""
    x = check_vector(x, name="x")
    y = check_vector(y, n=x.size, name="y")
    return float(a) * x + y


def read_dense_matrix(path):
    """Read the dense text format: ``n`` on the first line, then n rows of n floats."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise InvalidInputError(f"{path}: empty matrix file")
    try:
        n = int(lines[0].split()[0])
        rows = [[float(x) for x in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise InvalidInputError(f"{path}: parse error: {exc}") from None
    if n < 1 or len(rows) != n or any(len(r) != n for r in rows):
        raise InvalidInputError(f"{path}: expected {n} rows of {n} values")
    return symmetrize(np.array(rows))


def write_dense_matrix(path, A):
    A = check_square(A)
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]}\n")
        for row in A:
            fh.write(" ".join(format(x, ".17g") for x in row) + "\n")


def write_eigenvalues(path, eigenvalues):
    with open(path, "w") as fh:
        for x in np.sort(np.asarray(eigenvalues, dtype=np.float64))[::-1]:
            fh.write(format(x, ".17g") + "\n")


def read_eigenvalues(path):
    try:
        vals = np.loadtxt(path, dtype=np.float64, ndmin=1)
    except ValueError as exc:
        raise InvalidInputError(f"{path}: parse error: {exc}") from None
    return np.sort(vals)[::-1]
