"""Command-line entry point.

Exit codes: 0 success, 1 certificate failure, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bound import HypothesisError, loss_bound
from .config import ConfigError, load_spec
from .data import IDXError, load_mnist
from .mechanism import InfeasibleError, verify_IR, verify_truthfulness
from .output import emit, fmt
from .scenarios import build_variants, prepare, run_scenario

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _spec(args, **extra):
    spec = load_spec(args.spec, **extra)
    if args.seed is not None:
        spec = replace(spec, seeds=(args.seed,))
    return spec.validate()


def _setting(args, spec):
    seed = spec.data_seed if spec.data_seed >= 0 else spec.seeds[0]
    return prepare(spec, seed)


def cmd_run(args) -> int:
    spec = _spec(args)
    if args.command == "train":
        spec = replace(spec, seeds=spec.seeds[:1])
    if args.workers:
        spec = replace(spec, workers=args.workers)
    result = run_scenario(spec)
    for path in emit(result, args.out):
        print(f"wrote {path}")
    for line in result.summary:
        print(line)
    if result.certificates:
        print(f"certificates: {'pass' if result.passed else 'fail'}")
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_bound(args) -> int:
    spec = _spec(args)
    s = _setting(args, spec)
    b = s.bound
    for name in ("L", "mu", "eta", "T", "H", "beta", "G_sq", "init_dist_sq"):
        print(f"{name}: {fmt(getattr(b, name))}")
    for i in range(b.n_clients):
        print(f"client {i}: p={fmt(b.p[i])} sigma_sq={fmt(b.sigma_sq[i])} d={fmt(b.d[i])}")
    for v in build_variants(spec, s):
        print(f"bound {v.name}: {fmt(loss_bound(b, list(v.strategies)))}")
    return EXIT_OK


def cmd_assign(args) -> int:
    s = _setting(args, _spec(args))
    a = s.assignment
    print(f"A: {fmt(a.A)}")
    print("client,D_star,D_prime,floor,phi,omega")
    D_star = a.D_star if a.D_star is not None else np.full(len(a.D_prime), np.nan)
    for i in range(len(a.D_prime)):
        print(",".join([str(i), fmt(D_star[i]), fmt(a.D_prime[i]), fmt(a.floor[i]), fmt(a.phi[i]), fmt(a.omega[i])]))
    return EXIT_OK


def cmd_verify(args) -> int:
    s = _setting(args, _spec(args))
    certs = [verify_truthfulness(s.assignment, s.bound, s.costs), verify_IR(s.assignment, s.bound, s.costs)]
    text = "\n\n".join("\n".join(c.lines()) for c in certs) + "\n"
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "certificate.txt").write_text(text, encoding="utf-8")
    return EXIT_OK if all(c.passed for c in certs) else EXIT_FAIL


def cmd_mnist_check(args) -> int:
    X, y = load_mnist(args.images, args.labels)
    print(f"samples: {len(y)}")
    print(f"feature_dim: {X.shape[1]}")
    print(f"x_max: {fmt(float(np.max(np.sum(X * X, axis=1))))}")
    print("label_counts: " + ",".join(str(c) for c in np.bincount(y, minlength=10)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedelicit", description="Incentive-compatible federated learning simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_spec(p):
        p.add_argument("spec", help="experiment spec file (key = value lines)")
        p.add_argument("--seed", type=int, default=None, help="single seed replacing the spec's seed list")
        return p

    for name, text in (("train", "run the spec's scenario for one seed"),
                       ("sweep", "run the spec's scenario for every seed")):
        p = with_spec(sub.add_parser(name, help=text))
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--workers", type=int, default=0, help="seeds run concurrently (default: spec value)")
        p.set_defaults(func=cmd_run)
    with_spec(sub.add_parser("bound", help="print estimated constants and the loss bound")).set_defaults(func=cmd_bound)
    with_spec(sub.add_parser("assign", help="print the optimal assignment")).set_defaults(func=cmd_assign)
    p = with_spec(sub.add_parser("verify", help="check truthfulness and individual rationality"))
    p.add_argument("--out", default=None, help="also write certificate.txt here")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("mnist-check", help="parse MNIST IDX files and print a digest")
    p.add_argument("images")
    p.add_argument("labels")
    p.set_defaults(func=cmd_mnist_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, HypothesisError, InfeasibleError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, IDXError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
