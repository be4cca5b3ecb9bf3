"""Two-layer classifier with exact gradients and Hessian-vector products.

Parameters are stored as one flat vector laid out as
``[W1 (h x d, row-major), b1 (h), W2 (K x h, row-major), b2 (K)]``.
The full-batch loss is the mean of per-batch losses, each batch loss being
the mean smoothed cross-entropy over its examples. Hessian-vector products
use forward-over-reverse (R-operator) differentiation of the backward pass.
"""

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, validate_data

from ._validation import check_count, check_vector
from .exceptions import InvalidInputError, NumericFailureError, ResourceLimitError
from .operator import GradientSet, SymmetricOperator, materialize

DENSE_CAP = 4000


@dataclass(frozen=True)
class MlpConfig:
    d: int
    h: int
    K: int
    activation: str = "tanh"
    label_smoothing: float = 0.1

    def __post_init__(self):
        for name in ("d", "h", "K"):
            check_count(getattr(self, name), name)
        if self.activation not in ("tanh", "relu"):
            raise InvalidInputError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise InvalidInputError("label_smoothing must lie in [0, 1)")

    @property
    def n(self):
        return param_count(self)


def param_count(cfg):
    return (cfg.d + 1) * cfg.h + (cfg.h + 1) * cfg.K


@dataclass(frozen=True)
class Dataset:
    """Examples ``X`` (N x d), integer labels ``y`` and a batch size.

    Batches are the contiguous slices ``X[i*b:(i+1)*b]`` in storage order;
    the last batch may be shorter.
    """

    X: np.ndarray
    y: np.ndarray
    K: int
    batch_size: int = 50

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        if X.ndim != 2 or X.shape[0] < 1 or y.shape != (X.shape[0],):
            raise InvalidInputError("dataset needs X of shape (N, d) and y of shape (N,)")
        if not np.all(np.isfinite(X)):
            raise InvalidInputError("dataset contains non-finite features")
        if np.any(y != np.round(y)) or y.min() < 0 or y.max() >= self.K:
            raise InvalidInputError(f"labels must be integers in [0, {self.K})")
        check_count(self.batch_size, "batch_size")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y.astype(np.int64))

    @property
    def d(self):
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]

    def batches(self):
        b = self.batch_size
        return [(self.X[i:i + b], self.y[i:i + b]) for i in range(0, len(self), b)]

    @property
    def num_batches(self):
        return -(-len(self) // self.batch_size)


@dataclass(frozen=True)
class Checkpoint:
    step: int
    params: np.ndarray = field(repr=False)
    train_loss: float


def synth_dataset(seed, d, K, per_class, spread=1.0, batch_size=50):
    """Gaussian clusters, one per class, shuffled with the same seed."""
    check_count(per_class, "per_class")
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((K, d))
    y = np.repeat(np.arange(K), per_class)
    X = centers[y] + spread * rng.standard_normal((y.size, d))
    perm = rng.permutation(y.size)
    return Dataset(X[perm], y[perm], K=K, batch_size=batch_size)


def init_params(cfg, seed=0):
    rng = np.random.default_rng(seed)
    W1 = rng.standard_normal((cfg.h, cfg.d)) / np.sqrt(cfg.d)
    W2 = rng.standard_normal((cfg.K, cfg.h)) / np.sqrt(cfg.h)
    return pack(cfg, W1, np.zeros(cfg.h), W2, np.zeros(cfg.K))


def pack(cfg, W1, b1, W2, b2):
    return np.concatenate([np.ravel(W1), b1, np.ravel(W2), b2]).astype(np.float64)


def unpack(cfg, theta):
    d, h, K = cfg.d, cfg.h, cfg.K
    theta = check_vector(theta, n=param_count(cfg), name="params")
    i = 0
    W1 = theta[i:i + h * d].reshape(h, d)
    i += h * d
    b1 = theta[i:i + h]
    i += h
    W2 = theta[i:i + K * h].reshape(K, h)
    i += K * h
    b2 = theta[i:i + K]
    return W1, b1, W2, b2


def _activation(cfg, z):
    """Return activation value and its first and second derivatives."""
    if cfg.activation == "tanh":
        a = np.tanh(z)
        d1 = 1.0 - a * a
        return a, d1, -2.0 * a * d1
    # relu: second derivative is zero away from the kink
    a = np.maximum(z, 0.0)
    d1 = (z > 0).astype(np.float64)
    return a, d1, np.zeros_like(z)


def _targets(cfg, y):
    eps = cfg.label_smoothing
    Y = np.full((y.size, cfg.K), eps / cfg.K)
    Y[np.arange(y.size), y] += 1.0 - eps
    return Y


def _forward(params, cfg, X):
    W1, b1, W2, b2 = unpack(cfg, params)
    z1 = X @ W1.T + b1
    a, d1, d2 = _activation(cfg, z1)
    logits = a @ W2.T + b2
    if not np.all(np.isfinite(logits)):
        raise NumericFailureError("non-finite activations in forward pass")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    return (W1, W2), (z1, a, d1, d2), logp


def forward_loss(params, cfg, batch):
    X, y = batch
    _, _, logp = _forward(params, cfg, np.asarray(X, dtype=np.float64))
    Y = _targets(cfg, np.asarray(y))
    return float(-(Y * logp).sum() / X.shape[0])


def gradient(params, cfg, batch):
    X, y = batch
    X = np.asarray(X, dtype=np.float64)
    B = X.shape[0]
    (W1, W2), (z1, a, d1, _), logp = _forward(params, cfg, X)
    delta = (np.exp(logp) - _targets(cfg, np.asarray(y))) / B
    gW2 = delta.T @ a
    gb2 = delta.sum(axis=0)
    dz1 = (delta @ W2) * d1
    gW1 = dz1.T @ X
    gb1 = dz1.sum(axis=0)
    return pack(cfg, gW1, gb1, gW2, gb2)


def hvp(params, cfg, batch, v):
    """Exact Hessian-vector product of the batch loss (Pearlmutter's R-operator)."""
    X, y = batch
    X = np.asarray(X, dtype=np.float64)
    B = X.shape[0]
    v = check_vector(v, n=param_count(cfg))
    (W1, W2), (z1, a, d1, d2), logp = _forward(params, cfg, X)
    VW1, Vb1, VW2, Vb2 = unpack(cfg, v)
    p = np.exp(logp)
    delta = (p - _targets(cfg, np.asarray(y))) / B

    Rz1 = X @ VW1.T + Vb1
    Ra = d1 * Rz1
    Rlogits = Ra @ W2.T + a @ VW2.T + Vb2
    Rp = p * (Rlogits - (p * Rlogits).sum(axis=1, keepdims=True))
    Rdelta = Rp / B

    RgW2 = Rdelta.T @ a + delta.T @ Ra
    Rgb2 = Rdelta.sum(axis=0)
    da = delta @ W2
    Rda = Rdelta @ W2 + delta @ VW2
    Rdz1 = Rda * d1 + da * d2 * Rz1
    RgW1 = Rdz1.T @ X
    Rgb1 = Rdz1.sum(axis=0)
    out = pack(cfg, RgW1, Rgb1, RgW2, Rgb2)
    if not np.all(np.isfinite(out)):
        raise NumericFailureError("non-finite Hessian-vector product")
    return out


def _batch_mean(fn, data):
    # fixed batch order, sequential float64 accumulation
    batches = data.batches()
    acc = None
    for batch in batches:
        val = fn(batch)
        acc = val if acc is None else acc + val
    return acc / len(batches)


def full_loss(params, cfg, data):
    return float(_batch_mean(lambda b: forward_loss(params, cfg, b), data))


def full_gradient(params, cfg, data):
    return _batch_mean(lambda b: gradient(params, cfg, b), data)


def hessian_operator(params, cfg, data):
    """Full-data Hessian as a matrix-free operator."""
    params = check_vector(params, n=param_count(cfg), name="params")
    return SymmetricOperator(
        param_count(cfg),
        lambda v: _batch_mean(lambda b: hvp(params, cfg, b, v), data),
        label=f"mlp-hessian(n={param_count(cfg)})")


def exact_hessian(params, cfg, data, cap=DENSE_CAP, return_asymmetry=False):
    """Dense Hessian built column by column from HVPs, then symmetrized."""
    n = param_count(cfg)
    if n > cap:
        raise ResourceLimitError(f"n={n} exceeds the dense cap of {cap}")
    A = materialize(hessian_operator(params, cfg, data))
    asym = float(np.max(np.abs(A - A.T)))
    H = 0.5 * (A + A.T)
    return (H, asym) if return_asymmetry else H


def per_batch_gradients(params, cfg, data):
    return GradientSet(np.array([gradient(params, cfg, b) for b in data.batches()]))


def constant_lr(lr):
    return lambda step: lr


def step_lr(lr, drops):
    """Piecewise-constant schedule; ``drops`` maps step -> multiplicative factor."""
    drops = sorted(drops.items())

    def schedule(step):
        out = lr
        for s, factor in drops:
            if step >= s:
                out *= factor
        return out

    return schedule


def train(cfg, data, optimizer="momentum", lr=0.05, steps=3000, seed=0,
          checkpoint_every=100, momentum=0.9, params0=None):
    """Mini-batch SGD or heavy-ball momentum; returns a list of checkpoints.

    ``lr`` is a float or a callable ``step -> learning rate``. Each epoch
    visits the batches in an order drawn from ``seed``. Checkpoints are taken
    at step 0, every ``checkpoint_every`` steps, and at the final step.
    """
    if optimizer not in ("sgd", "momentum"):
        raise InvalidInputError(f"unknown optimizer {optimizer!r}")
    steps = check_count(steps, "steps")
    checkpoint_every = check_count(checkpoint_every, "checkpoint_every")
    schedule = lr if callable(lr) else constant_lr(float(lr))
    rng = np.random.default_rng(seed)
    theta = init_params(cfg, seed) if params0 is None else check_vector(params0, n=cfg.n).copy()
    velocity = np.zeros_like(theta)
    batches = data.batches()
    order = []

    def snapshot(step):
        loss = full_loss(theta, cfg, data)
        if not np.isfinite(loss):
            raise NumericFailureError(f"training diverged at step {step}")
        return Checkpoint(step=step, params=theta.copy(), train_loss=loss)

    checkpoints = [snapshot(0)]
    for step in range(1, steps + 1):
        if not order:
            order = rng.permutation(len(batches)).tolist()
        try:
            g = gradient(theta, cfg, batches[order.pop()])
        except NumericFailureError:
            raise NumericFailureError(f"training diverged at step {step}") from None
        eta = schedule(step - 1)
        if optimizer == "momentum":
            velocity = momentum * velocity + g
            theta = theta - eta * velocity
        else:
            theta = theta - eta * g
        if not np.all(np.isfinite(theta)):
            raise NumericFailureError(f"training diverged at step {step}")
        if step % checkpoint_every == 0 or step == steps:
            checkpoints.append(snapshot(step))
    return checkpoints


def smoothing_entropy(K, label_smoothing):
    """Lowest attainable smoothed cross-entropy (entropy of the target)."""
    hi = 1.0 - label_smoothing + label_smoothing / K
    lo = label_smoothing / K
    out = -hi * np.log(hi)
    if lo > 0:
        out -= (K - 1) * lo * np.log(lo)
    return float(out)


# --------------------------------------------------------------------- I/O

def save_run(path, cfg, checkpoints):
    """Write a run file: model config plus every checkpoint."""
    doc = {
        "config": asdict(cfg),
        "checkpoints": [{"step": c.step, "train_loss": c.train_loss,
                         "params": c.params.tolist()} for c in checkpoints],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_run(path):
    """Load a run file (or a single-checkpoint file) -> (config, [Checkpoint])."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: parse error: {exc}") from None
    try:
        cfg = MlpConfig(**doc["config"])
        raw = doc["checkpoints"] if "checkpoints" in doc else [doc]
        cps = [Checkpoint(int(c["step"]), check_vector(c["params"], n=cfg.n, name="params"),
                          float(c["train_loss"])) for c in raw]
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"{path}: malformed checkpoint file: {exc}") from None
    steps = [c.step for c in cps]
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise InvalidInputError(f"{path}: checkpoint steps are not strictly increasing")
    return cfg, cps


def save_dataset(path, data):
    """Text cache: header ``count d K batch_size`` then ``label x_1 .. x_d`` rows."""
    with open(path, "w") as fh:
        fh.write(f"{len(data)} {data.d} {data.K} {data.batch_size}\n")
        for x, y in zip(data.X, data.y):
            fh.write(f"{y} " + " ".join(format(v, ".17g") for v in x) + "\n")


def load_dataset(path):
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    try:
        count, d, K, batch_size = (int(x) for x in lines[0].split())
        rows = np.array([[float(x) for x in ln.split()] for ln in lines[1:]])
    except (ValueError, IndexError) as exc:
        raise InvalidInputError(f"{path}: parse error: {exc}") from None
    if rows.shape != (count, d + 1):
        raise InvalidInputError(f"{path}: expected {count} rows of {d + 1} values")
    return Dataset(rows[:, 1:], rows[:, 0].astype(np.int64), K=K, batch_size=batch_size)


_IDX_TYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def read_idx(path):
    """Read an IDX file (the MNIST distribution format) into an array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0 or raw[2] not in _IDX_TYPES:
        raise InvalidInputError(f"{path}: not an IDX file")
    ndim = raw[3]
    dims = struct.unpack(">" + "I" * ndim, raw[4:4 + 4 * ndim])
    arr = np.frombuffer(raw, dtype=_IDX_TYPES[raw[2]], offset=4 + 4 * ndim)
    if arr.size != int(np.prod(dims)):
        raise InvalidInputError(f"{path}: truncated IDX payload")
    return arr.reshape(dims)


def dataset_from_idx(images_path, labels_path, limit=1000, batch_size=50):
    """Flattened, [0, 1]-scaled images with labels, first ``limit`` examples."""
    images = read_idx(images_path)[:limit].astype(np.float64)
    labels = read_idx(labels_path)[:limit].astype(np.int64)
    X = images.reshape(images.shape[0], -1) / 255.0
    return Dataset(X, labels, K=int(labels.max()) + 1, batch_size=batch_size)


# --------------------------------------------------------------- estimator

class TwoLayerMLP(ClassifierMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`train`.

    After ``fit``, ``coef_`` holds the flat parameter vector and
    ``checkpoints_`` the training trajectory. ``hessian_operator(X, y)``
    exposes the full-data loss Hessian at the fitted parameters.
    """

    def __init__(self, hidden=16, activation="tanh", label_smoothing=0.1,
                 optimizer="momentum", lr=0.05, steps=3000, batch_size=50,
                 checkpoint_every=100, seed=0):
        self.hidden = hidden
        self.activation = activation
        self.label_smoothing = label_smoothing
        self.optimizer = optimizer
        self.lr = lr
        self.steps = steps
        self.batch_size = batch_size
        self.checkpoint_every = checkpoint_every
        self.seed = seed

    def _dataset(self, X, y):
        return Dataset(X, np.searchsorted(self.classes_, y), K=self.classes_.size,
                       batch_size=self.batch_size)

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.unique(y)
        self.config_ = MlpConfig(d=X.shape[1], h=self.hidden, K=self.classes_.size,
                                 activation=self.activation,
                                 label_smoothing=self.label_smoothing)
        self.checkpoints_ = train(self.config_, self._dataset(X, y), optimizer=self.optimizer,
                                  lr=self.lr, steps=self.steps, seed=self.seed,
                                  checkpoint_every=self.checkpoint_every)
        self.coef_ = self.checkpoints_[-1].params
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        _, _, logp = _forward(self.coef_, self.config_, X)
        return np.exp(logp)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def hessian_operator(self, X, y):
        check_is_fitted(self, "coef_")
        return hessian_operator(self.coef_, self.config_, self._dataset(X, y))
