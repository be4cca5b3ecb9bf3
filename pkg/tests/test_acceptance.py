"""Acceptance criteria, one test each. Every test records a PASS/FAIL line
that is printed in the terminal summary."""

import math

import numpy as np

from conftest import ACCEPTANCE_LINES, matrix_with_spectrum, random_symmetric
from slqspec import chebyshev as cb
from slqspec import nn, quadsim as qs, slq
from slqspec.operator import dense_operator


def record(number, name, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {name}: {detail}")
    return ok


def _probe_reference(lam, Q, v, grid, sigma2):
    w = (Q.T @ v) ** 2
    dens = np.zeros(grid.size)
    for chunk in np.array_split(np.arange(lam.size), max(1, lam.size // 200)):
        dens += w[chunk] @ slq.gaussian_kernel(lam[chunk, None], grid[None, :], sigma2)
    return slq.SpectralDensityEstimate(grid, dens, sigma2)


def test_c1_quadrature_exactness():
    worst = 0.0
    for trial in range(20):
        n, m = 200, 30
        A = random_symmetric(n, 100 + trial)
        lam, Q = np.linalg.eigh(A)
        v = slq.random_probe(n, 500 + trial)
        mu = (Q.T @ v) ** 2
        rule = slq.golub_welsch(slq.lanczos(dense_operator(A), v, m).T)
        rng = np.random.default_rng(trial)
        for _ in range(20):
            deg = int(rng.integers(0, 2 * m))
            coef = rng.standard_normal(deg + 1)
            exact = float(mu @ np.polynomial.chebyshev.chebval(lam, coef))
            approx = rule.integrate(lambda x: np.polynomial.chebyshev.chebval(x, coef))
            worst = max(worst, abs(approx - exact) / abs(exact))
    assert record(1, "Gauss rule exact to degree 59", worst <= 1e-8,
                  f"max relative error {worst:.3e} (<= 1e-8) over 400 polynomials")


def test_c2_toy_mlp_density(toy_run, toy_hessian):
    cfg, data, cps = toy_run
    H, asym, eig = toy_hessian
    lam = eig.eigenvalues
    sigma2 = ((lam[0] - lam[-1]) / 300) ** 2
    grid = slq.auto_grid(lam, sigma2)
    exact = slq.exact_smoothed_density(lam, sigma2, grid)
    est = slq.estimate_density(nn.hessian_operator(cps[-1].params, cfg, data), k=10, m=90,
                               sigma2=sigma2, grid=grid, seed=0)
    dist = slq.l1_distance(est, exact)
    ok = dist <= 0.01 and asym <= 1e-8
    assert record(2, "toy MLP SLQ vs exact", ok,
                  f"n={cfg.n}, loss {cps[-1].train_loss:.5f}, sigma2={sigma2:.3e}, "
                  f"L1 {dist:.5f} (<= 0.01), Hessian asymmetry {asym:.1e}")


def test_c3_decay_in_degree():
    # spectrum in [-1, 1]: 980 bulk eigenvalues in [-0.02, 0.04] and 20 spread
    # over (0.04, 1], i.e. the bulk-plus-outlier shape scaled by 1/10
    rng = np.random.default_rng(0)
    lam = np.concatenate([rng.uniform(-0.02, 0.04, 980), rng.uniform(0.04, 1.0, 20)])
    A, Q = matrix_with_spectrum(lam, 1)
    lam_sorted, Q = np.linalg.eigh(A)
    v = slq.random_probe(lam.size, 2)
    sigma2 = 1e-3
    grid = np.linspace(-1.2, 1.2, 4001)
    ref = _probe_reference(lam_sorted, Q, v, grid, sigma2)
    err = {}
    for m in (20, 80):
        rule = slq.golub_welsch(slq.lanczos(dense_operator(A), v, m).T)
        est = slq.SpectralDensityEstimate(grid, slq.probe_density(rule, grid, sigma2), sigma2)
        err[m] = slq.l1_distance(est, ref)
    ok = err[80] <= 1e-8 and err[80] <= 1e-4 * err[20]
    assert record(3, "error decay in m (spiked spectrum)", ok,
                  f"L1 m=20 {err[20]:.3e}, m=80 {err[80]:.3e} (<= 1e-8 and <= 1e-4 x m=20)")


def test_c3_uniform_spectrum_ratio():
    # a uniform spectrum on [-1, 1] decays too, but reaches 1e-8 only for small n
    n = 400
    A, _ = matrix_with_spectrum(np.linspace(-1, 1, n), 3)
    lam, Q = np.linalg.eigh(A)
    v = slq.random_probe(n, 4)
    sigma2 = 1e-3
    grid = np.linspace(-1.2, 1.2, 4001)
    ref = _probe_reference(lam, Q, v, grid, sigma2)
    err = {}
    for m in (20, 80):
        rule = slq.golub_welsch(slq.lanczos(dense_operator(A), v, m).T)
        est = slq.SpectralDensityEstimate(grid, slq.probe_density(rule, grid, sigma2), sigma2)
        err[m] = slq.l1_distance(est, ref)
    ACCEPTANCE_LINES.append(
        f"[INFO] criterion 3 (uniform spectrum, n={n}): L1 m=20 {err[20]:.3e}, "
        f"m=80 {err[80]:.3e}; ratio holds, the 1e-8 floor is not reached at this n")
    assert err[80] <= 1e-4 * err[20]


def _spiked_spectrum(seed):
    rng = np.random.default_rng(seed)
    bulk = np.clip(rng.laplace(0.0, 0.05, 980), -0.2, 0.4)
    outliers = rng.uniform(0.4, 10.0, 20)
    outliers[outliers == 0.4] = 0.5  # keep the interval open at 0.4
    return np.concatenate([bulk, outliers])


def test_c4_chebyshev_failure():
    lam = _spiked_spectrum(0)
    A, _ = matrix_with_spectrum(lam, 1)
    op = dense_operator(A)
    sigma2 = 1e-5
    grid = slq.auto_grid(lam, sigma2, points=20001)
    exact = slq.exact_smoothed_density(lam, sigma2, grid)
    s = slq.estimate_density(op, k=10, m=90, sigma2=sigma2, grid=grid, seed=0)
    c = cb.estimate_density_cheb(op, k=10, degree=90, sigma2=sigma2, grid=grid, seed=0)
    l1_s, l1_c = slq.l1_distance(s, exact), slq.l1_distance(c, exact)
    mass_s, mass_c = abs(s.integral() - 1), abs(c.integral() - 1)
    ok = l1_c >= 10 * l1_s and mass_c > mass_s
    assert record(4, "Chebyshev baseline vs SLQ", ok,
                  f"L1 SLQ {l1_s:.4f}, Chebyshev {l1_c:.4f}, ratio {l1_c / l1_s:.1f} (>= 10); "
                  f"|mass-1| SLQ {mass_s:.1e}, Chebyshev {mass_c:.1e}")


def test_c5_concentration():
    rep = slq.concentration_bound(500_000, 20, 0.01, [3.0])
    eps3 = float(rep.epsilon[0])
    n, k, sigma = 1000, 10, 0.05
    rng = np.random.default_rng(0)
    lam = rng.uniform(-1, 1, n)
    A, _ = matrix_with_spectrum(lam, 5)
    grid = np.linspace(-1.2, 1.2, 481)
    exact = slq.exact_smoothed_density(lam, sigma ** 2, grid).values
    op = dense_operator(A)
    dev = 0.0
    for rep_seed in range(50):
        est = slq.estimate_density(op, k=k, m=90, sigma2=sigma ** 2, grid=grid, seed=rep_seed)
        dev = max(dev, float(np.max(np.abs(est.values - exact))))
    bound = float(slq.concentration_epsilon(math.log(100), n, k, sigma))
    ok = abs(eps3 - 0.0437) <= 1e-4 and dev < bound
    assert record(5, "concentration bound", ok,
                  f"eps(3) {eps3:.6f} (0.0437 +- 1e-4); max deviation {dev:.4f} over 50 "
                  f"estimates < eps(ln 100) {bound:.4f} at n={n}, k={k}, sigma={sigma}")


def test_c6_hvp_and_gradient(tiny_model):
    cfg, data = tiny_model
    batch = (data.X, data.y)
    rng = np.random.default_rng(0)
    worst_h = worst_g = 0.0
    for _ in range(50):
        theta, v = rng.standard_normal(cfg.n), rng.standard_normal(cfg.n)
        eps = 1e-4 * np.linalg.norm(theta) / np.linalg.norm(v)
        fd = (nn.gradient(theta + eps * v, cfg, batch)
              - nn.gradient(theta - eps * v, cfg, batch)) / (2 * eps)
        worst_h = max(worst_h, np.linalg.norm(nn.hvp(theta, cfg, batch, v) - fd)
                      / np.linalg.norm(fd))
        g = nn.gradient(theta, cfg, batch)
        h = 1e-5
        gfd = np.array([(nn.forward_loss(theta + h * e, cfg, batch)
                         - nn.forward_loss(theta - h * e, cfg, batch)) / (2 * h)
                        for e in np.eye(cfg.n)])
        worst_g = max(worst_g, np.linalg.norm(g - gfd) / np.linalg.norm(gfd))
    ok = worst_h <= 1e-5 and worst_g <= 1e-6
    assert record(6, "HVP and gradient vs finite differences", ok,
                  f"HVP rel err {worst_h:.2e} (<= 1e-5), gradient rel err {worst_g:.2e} "
                  f"(<= 1e-6), 50 probes, n={cfg.n}")


def test_c7_sgd_alignment():
    eta_c, t, trials = 0.5, 200, 10_000
    errs, shares = {}, {}
    for noise in ("identity", "hessian", "inverse"):
        p = qs.default_problem(20, noise)
        rep = qs.sgd_alignment_montecarlo(p, eta_c / p.eigenvalues[0], t, trials, seed=0)
        errs[noise] = float(rep.rel_error.max())
        shares[noise] = qs.top_share(rep.closed_form_finite_t)
    ok = max(errs.values()) <= 0.05 and shares["hessian"] > shares["identity"] > shares["inverse"]
    detail = ", ".join(f"S={k}: max rel err {v:.3f}" for k, v in errs.items())
    assert record(7, "SGD update alignment", ok,
                  f"{detail} (<= 0.05); top share H {shares['hessian']:.3f} > "
                  f"I {shares['identity']:.3f} > H^-1 {shares['inverse']:.3f}")


def test_c8_gd_contraction():
    p = qs.default_problem(20)
    lam = p.eigenvalues
    traj = qs.gd_trajectory(p, np.ones(20), 2.0 / lam[0], 100)
    mask = traj[:-1] > 0
    ratios = np.where(mask, traj[1:] / np.where(mask, traj[:-1], 1.0), 0.0)
    target = np.broadcast_to(np.abs(1 - 2 * lam / lam[0]), ratios.shape)
    worst = float(np.max(np.abs(ratios - target)[mask]))
    assert record(8, "GD per-coordinate contraction", worst <= 1e-12,
                  f"max |ratio - |1 - 2 lambda_i/lambda_1|| = {worst:.1e} (<= 1e-12), 100 steps")


def test_c9_lanczos_hygiene(toy_run, toy_hessian):
    cfg, data, cps = toy_run
    H = toy_hessian[0]
    res = slq.lanczos(nn.hessian_operator(cps[-1].params, cfg, data), slq.random_probe(cfg.n, 0),
                      90)
    V = res.basis.T
    T = res.T.to_dense()
    orth = float(np.max(np.abs(V.T @ V - np.eye(res.m))))
    proj = float(np.max(np.abs(V.T @ H @ V - T)) / np.max(np.abs(T)))
    ok = res.m == 90 and orth <= 1e-10 and proj <= 1e-8
    assert record(9, "Lanczos orthogonality on the toy Hessian", ok,
                  f"|V'V - I|max {orth:.1e} (<= 1e-10), |V'HV - T|max/|T|max {proj:.1e} (<= 1e-8)")


def test_c10_scope_statement():
    record(10, "large-scale claims", True,
           "not reproduced by design (ImageNet/CIFAR spectra, batch-norm ablations, "
           "gradient-energy share at large scale); instruments validated by 1-9 on toy models")
