"""Command-line interface: ``slqspec <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 3 numeric failure, 4 resource limit.
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import chebyshev, metrics, nn, quadsim, slq
from .exceptions import InvalidInputError, ResourceLimitError, SlqSpecError
from .linalg import read_dense_matrix, sym_eig_dense, write_eigenvalues
from .operator import covariance_operator, dense_operator, materialize, read_gradient_set


def _parse_grid(spec):
    if spec is None or spec == "auto":
        return None
    try:
        lo, hi, pts = spec.split(":")
        lo, hi, pts = float(lo), float(hi), int(pts)
    except ValueError:
        raise InvalidInputError(f"bad --grid {spec!r}, expected lo:hi:points or auto") from None
    if not hi > lo or pts < 2:
        raise InvalidInputError(f"bad --grid {spec!r}")
    return np.linspace(lo, hi, pts)


def _parse_sigma2(spec):
    if spec == "auto":
        return None
    try:
        return float(spec)
    except ValueError:
        raise InvalidInputError(f"bad --sigma2 {spec!r}") from None


def _operator_from_args(args):
    sources = [args.matrix is not None, args.checkpoint is not None, args.grads is not None]
    if sum(sources) != 1:
        raise InvalidInputError("give exactly one of --matrix, --checkpoint/--data, --grads")
    if args.matrix is not None:
        return dense_operator(read_dense_matrix(args.matrix), label=str(args.matrix))
    if args.grads is not None:
        return covariance_operator(read_gradient_set(args.grads))
    if args.data is None:
        raise InvalidInputError("--checkpoint requires --data")
    cfg, cps = nn.load_run(args.checkpoint)
    data = nn.load_dataset(args.data)
    return nn.hessian_operator(cps[-1].params, cfg, data)


def _auto_sigma2(lo, hi):
    return ((hi - lo) / 300.0) ** 2


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)


def _meta_path(out):
    return Path(str(out) + ".json")


def cmd_density(args):
    op = _operator_from_args(args)
    grid = _parse_grid(args.grid)
    sigma2 = _parse_sigma2(args.sigma2)
    if sigma2 is None:
        sigma2 = _auto_sigma2(*chebyshev.spectral_interval(op, margin=0.0, seed=args.seed))
    if args.method == "slq":
        est = slq.estimate_density(op, args.k, args.m, sigma2, grid, args.seed)
    else:
        est = chebyshev.estimate_density_cheb(op, args.k, args.m, sigma2, grid, args.seed)
    # runtime is excluded so repeated runs produce byte-identical artifacts
    est.meta.pop("runtime_seconds", None)
    est.to_csv(args.out)
    est.write_metadata(_meta_path(args.out))
    print(f"wrote {args.out} ({est.grid.size} points, integral {est.integral():.6f})")


def cmd_exact(args):
    op = _operator_from_args(args)
    if op.n > args.cap:
        raise ResourceLimitError(f"n={op.n} exceeds the dense cap of {args.cap}")
    lam = sym_eig_dense(materialize(op)).eigenvalues
    sigma2 = _parse_sigma2(args.sigma2)
    if sigma2 is None:
        sigma2 = _auto_sigma2(lam[-1], lam[0])
    grid = _parse_grid(args.grid)
    if grid is None:
        grid = slq.auto_grid(lam, sigma2)
    est = slq.exact_smoothed_density(lam, sigma2, grid)
    est.to_csv(args.out)
    est.write_metadata(_meta_path(args.out))
    eig_path = args.eigenvalues or Path(str(args.out) + ".eig.txt")
    write_eigenvalues(eig_path, lam)
    print(f"wrote {args.out} and {eig_path} (n={lam.size}, "
          f"lambda in [{lam[-1]:.6g}, {lam[0]:.6g}], integral {est.integral():.6f})")


def cmd_compare(args):
    d1 = slq.SpectralDensityEstimate.from_csv(args.first)
    d2 = slq.SpectralDensityEstimate.from_csv(args.second)
    dist = slq.l1_distance(d1, d2)
    print(f"L1 = {dist:.17g}")
    if args.out:
        _write_json(args.out, {"first": str(args.first), "second": str(args.second), "l1": dist})


def _parse_drops(items):
    drops = {}
    for item in items or []:
        try:
            step, factor = item.split(":")
            drops[int(step)] = float(factor)
        except ValueError:
            raise InvalidInputError(f"bad --lr-drop {item!r}, expected STEP:FACTOR") from None
    return drops


def cmd_train(args):
    if args.data is not None:
        data = nn.load_dataset(args.data)
    else:
        data = nn.synth_dataset(args.data_seed, args.d, args.K, args.per_class,
                                spread=args.spread, batch_size=args.batch_size)
    cfg = nn.MlpConfig(d=data.d, h=args.h, K=data.K, activation=args.activation,
                       label_smoothing=args.label_smoothing)
    schedule = nn.step_lr(args.lr, _parse_drops(args.lr_drop))
    cps = nn.train(cfg, data, optimizer=args.optimizer, lr=schedule, steps=args.steps,
                   seed=args.seed, checkpoint_every=args.checkpoint_every,
                   momentum=args.momentum)
    nn.save_run(args.out, cfg, cps)
    if args.data_out:
        nn.save_dataset(args.data_out, data)
    losses = ", ".join(f"{c.step}:{c.train_loss:.6f}" for c in cps)
    print(f"n={cfg.n} parameters; losses {losses}")


def _checkpoint_metrics(cfg, data, cp, final_params, r, cap, lanczos_m, seed):
    grad = nn.full_gradient(cp.params, cfg, data)
    op = nn.hessian_operator(cp.params, cfg, data)
    if lanczos_m is None and cfg.n <= cap:
        dec = sym_eig_dense(materialize(op))
        lam = dec.eigenvalues
        hbasis = metrics.SubspaceBasis(dec.eigenvectors[:, :r])
        energies = metrics.energies(lam)
    else:
        m = lanczos_m or 90
        hbasis = metrics.top_eigenvectors(op, r, m=m, seed=seed)
        res = slq.lanczos(op, slq.random_probe(op.n, seed), min(m, op.n))
        lam = np.sort(np.linalg.eigvalsh(res.T.to_dense()))[::-1]
        est = slq.estimate_density(op, 10, m, seed=seed)
        energies = {f"l{p}_{s}": metrics.signed_energy_density(est, p, s)
                    for p in (1, 2) for s in ("neg", "pos")}
    G = nn.per_batch_gradients(cp.params, cfg, data).gradients
    cov = G.T @ G / G.shape[0]
    cbasis = metrics.top_eigenvectors(cov, min(r, G.shape[0]))
    disp = cp.params - final_params
    report = metrics.metrics_report(cp.step, lam, min(cfg.K, lam.size), grad=grad,
                                    hessian_basis=hbasis, displacement=disp,
                                    covariance_basis=cbasis)
    report["energies"] = energies
    report["lambda_1"] = float(lam[0])
    report["train_loss"] = cp.train_loss
    return report


def cmd_metrics(args):
    cfg, cps = nn.load_run(args.checkpoint)
    data = nn.load_dataset(args.data)
    r = args.r or cfg.K
    final = cps[-1].params
    selected = cps[::args.every]
    if selected[-1] is not cps[-1]:
        selected.append(cps[-1])
    reports = []
    for cp in selected:
        try:
            reports.append(_checkpoint_metrics(cfg, data, cp, final, r, args.cap,
                                               args.lanczos_m, args.seed))
        except SlqSpecError as exc:
            raise type(exc)(f"step {cp.step}: {exc}") from None
        print(f"step {cp.step}: zeta={reports[-1]['zeta']} "
              f"projection_ratio={reports[-1]['projection_ratio']}")
    _write_json(args.out, reports)


def cmd_quadsim(args):
    problem = quadsim.default_problem(args.n, args.noise, args.lambda_min)
    eta = args.c / problem.eigenvalues[0]
    rep = quadsim.sgd_alignment_montecarlo(problem, eta, args.t, args.trials, args.seed)
    rows = rep.to_json()
    _write_json(args.out, {"n": args.n, "eta": eta, "t": args.t, "trials": args.trials,
                           "seed": args.seed, "noise": args.noise,
                           "top_share": quadsim.top_share(rep.closed_form_limit),
                           "coordinates": rows})
    print(f"max rel_error = {float(rep.rel_error.max()):.4f}")


def cmd_bounds(args):
    xs = args.x if args.x else np.linspace(0.0, 10.0, 21).tolist()
    rep = slq.concentration_bound(args.n, args.k, args.sigma, xs)
    rows = rep.rows()
    for row in rows:
        print(f"x={row['x']:.6g}  epsilon={row['epsilon']:.6g}  "
              f"P<={row['probability_bound']:.6g}")
    if args.out:
        _write_json(args.out, {"n": args.n, "k": args.k, "sigma": args.sigma, "table": rows})


def _add_source(p):
    p.add_argument("--matrix", type=Path)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--data", type=Path)
    p.add_argument("--grads", type=Path)


def build_parser():
    parser = argparse.ArgumentParser(prog="slqspec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("density", help="estimate a smoothed spectral density")
    _add_source(p)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--m", type=int, default=90)
    p.add_argument("--sigma2", default="1e-5", help="kernel variance or 'auto'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", default="auto", help="lo:hi:points or auto")
    p.add_argument("--method", choices=["slq", "chebyshev"], default="slq")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("exact", help="exact eigenvalues and smoothed density")
    _add_source(p)
    p.add_argument("--sigma2", default="1e-5")
    p.add_argument("--grid", default="auto")
    p.add_argument("--cap", type=int, default=nn.DENSE_CAP)
    p.add_argument("--eigenvalues", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("compare", help="L1 distance between two density CSVs")
    p.add_argument("first", type=Path)
    p.add_argument("second", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("train", help="train the toy classifier and save checkpoints")
    p.add_argument("--data", type=Path, help="dataset cache to train on")
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--h", type=int, default=16)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=50)
    p.add_argument("--activation", choices=["tanh", "relu"], default="tanh")
    p.add_argument("--label-smoothing", type=float, default=0.1)
    p.add_argument("--optimizer", choices=["sgd", "momentum"], default="momentum")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--lr-drop", action="append", metavar="STEP:FACTOR")
    p.add_argument("--steps", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=100)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--data-out", type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("metrics", help="spectral metrics over a run's checkpoints")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--r", type=int, help="top eigenspace dimension (default K)")
    p.add_argument("--every", type=int, default=1, help="use every n-th checkpoint")
    p.add_argument("--cap", type=int, default=nn.DENSE_CAP)
    p.add_argument("--lanczos-m", type=int, help="matrix-free path with this many steps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("quadsim", help="SGD update alignment on a quadratic model")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--c", type=float, default=0.5, help="step size as a fraction of 1/lambda_1")
    p.add_argument("--t", type=int, default=200)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--noise", choices=["identity", "hessian", "inverse"], default="identity")
    p.add_argument("--lambda-min", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_quadsim)

    p = sub.add_parser("bounds", help="concentration bound table")
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--x", type=float, nargs="*")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "n", None) is not None and args.command == "bounds":
        if args.n != math.floor(args.n):
            print("error: --n must be an integer", file=sys.stderr)
            return 2
        args.n = int(args.n)
    try:
        args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except SlqSpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
