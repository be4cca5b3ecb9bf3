import numpy as np
import pytest

from slqspec import nn
from slqspec.linalg import sym_eig_dense

ACCEPTANCE_LINES = []


def random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    return (A + A.T) / np.sqrt(8 * n)


def matrix_with_spectrum(eigenvalues, seed):
    """Dense symmetric matrix with the given eigenvalues and a random eigenbasis."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((lam.size, lam.size)))
    Q = Q * np.sign(np.diag(R))
    A = (Q * lam) @ Q.T
    return 0.5 * (A + A.T), Q


@pytest.fixture(scope="session")
def toy_run():
    """The desk-scale setting: d=100, h=16, K=5, 200 examples per class, 3000 momentum steps."""
    cfg = nn.MlpConfig(d=100, h=16, K=5)
    data = nn.synth_dataset(0, 100, 5, 200)
    cps = nn.train(cfg, data, optimizer="momentum", lr=0.05, steps=3000, seed=0,
                   checkpoint_every=500, momentum=0.9)
    return cfg, data, cps


@pytest.fixture(scope="session")
def toy_hessian(toy_run):
    cfg, data, cps = toy_run
    H, asym = nn.exact_hessian(cps[-1].params, cfg, data, return_asymmetry=True)
    return H, asym, sym_eig_dense(H)


@pytest.fixture(scope="session")
def tiny_model():
    cfg = nn.MlpConfig(d=3, h=2, K=2)
    data = nn.synth_dataset(7, 3, 2, 10, spread=1.0, batch_size=8)
    return cfg, data


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
