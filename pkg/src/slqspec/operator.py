"""Matrix-free symmetric operators."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_count, check_vector
from .exceptions import InvalidInputError, NumericFailureError
from .linalg import symmetrize


class SymmetricOperator:
    """A symmetric linear map ``R^n -> R^n`` given only through its action.

    ``matvec`` must be deterministic. ``apply`` validates the input and
    rejects non-finite output, which usually means the underlying model has
    diverged.
    """

    def __init__(self, n, matvec, label="operator"):
        self.n = check_count(n, "n")
        self._matvec = matvec
        self.label = label

    def apply(self, v):
        v = check_vector(v, n=self.n)
        out = np.asarray(self._matvec(v), dtype=np.float64)
        if out.shape != (self.n,):
            raise NumericFailureError(
                f"{self.label}: matvec returned shape {out.shape}")
        if not np.all(np.isfinite(out)):
            raise NumericFailureError(f"{self.label}: non-finite output")
        return out

    __matmul__ = apply

    @property
    def shape(self):
        return (self.n, self.n)

    def __repr__(self):
        return f"SymmetricOperator(n={self.n}, label={self.label!r})"


def apply(op, v):
    return op.apply(v)


def dense_operator(A, label="dense"):
    A = symmetrize(A)
    return SymmetricOperator(A.shape[0], lambda v: A @ v, label=label)


def as_operator(obj):
    """Coerce a dense array or existing operator into a ``SymmetricOperator``."""
    if isinstance(obj, SymmetricOperator):
        return obj
    return dense_operator(obj)


@dataclass(frozen=True)
class GradientSet:
    """``N`` per-batch gradient vectors of length ``n``, stored as rows."""

    gradients: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gradients, dtype=np.float64)
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise InvalidInputError("gradient set must be a non-empty N x n array")
        if not np.all(np.isfinite(g)):
            raise InvalidInputError("gradient set contains non-finite values")
        object.__setattr__(self, "gradients", g)

    @property
    def N(self):
        return self.gradients.shape[0]

    @property
    def n(self):
        return self.gradients.shape[1]


def covariance_operator(g):
    """Second-moment operator ``v -> (1/N) sum_i g_i (g_i . v)``."""
    if not isinstance(g, GradientSet):
        g = GradientSet(g)
    G = g.gradients
    N = g.N
    return SymmetricOperator(g.n, lambda v: G.T @ (G @ v) / N,
                             label=f"gradient-covariance(N={N})")


def materialize(op):
    """Dense matrix whose column j is ``op.apply(e_j)``; not symmetrized."""
    n = op.n
    A = np.empty((n, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        A[:, j] = op.apply(e)
        e[j] = 0.0
    return A


def check_symmetry(op, trials=10, seed=0):
    """Largest ``|u.(Av) - v.(Au)|`` over random unit pairs."""
    trials = check_count(trials, "trials")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        u = rng.standard_normal(op.n)
        v = rng.standard_normal(op.n)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        worst = max(worst, abs(u @ op.apply(v) - v @ op.apply(u)))
    return worst


def read_gradient_set(path):
    """Read ``N n`` on the first line followed by N rows of n floats."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise InvalidInputError(f"{path}: empty gradient file")
    try:
        N, n = (int(x) for x in lines[0].split()[:2])
        rows = [[float(x) for x in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise InvalidInputError(f"{path}: parse error: {exc}") from None
    if len(rows) != N or any(len(r) != n for r in rows):
        raise InvalidInputError(f"{path}: expected {N} rows of {n} values")
    return GradientSet(np.array(rows))


def write_gradient_set(path, g):
    G = g.gradients if isinstance(g, GradientSet) else np.asarray(g)
    with open(path, "w") as fh:
        fh.write(f"{G.shape[0]} {G.shape[1]}\n")
        for row in G:
            fh.write(" ".join(format(x, ".17g") for x in row) + "\n")
