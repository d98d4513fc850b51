"""Command line: ``trotterscar {simulate,optimize,figure,selftest}``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .experiments import FIGURES, cmd_figure, cmd_optimize, cmd_simulate
from .linalg import NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _selftest_checks():
    from .analysis import loschmidt_exact, perturbative_error
    from .formulas import (
        error_kernel,
        measured_trotter_error,
        schedule_for_order,
        step_matrix,
        suzuki_coefficients,
        TrotterStepper,
    )
    from .linalg import SX, eigendecompose_hermitian, kron_embed
    from .models import build_model
    from .variational import LossConfig, SpectralLoss, VariationalParameters, haar_random_product_state

    def embed():
        return np.allclose(kron_embed(SX, [2], 3), np.kron(np.kron(np.eye(2), SX), np.eye(2)))

    def suzuki():
        return all(
            abs(4 * p + s - 1) < 1e-12 and abs(4 * p ** (2 * k + 1) + s ** (2 * k + 1)) < 1e-12
            for k in range(1, 5)
            for p, s in [suzuki_coefficients(k)]
        )

    def local_vs_dense():
        worst = 0.0
        psi = haar_random_product_state(4, 7)
        for name in ("heisenberg", "stark", "pxp"):
            ham = build_model(name, 4)
            for q in (1, 2, 4):
                s = schedule_for_order(q)
                dense = step_matrix(ham, s, 0.05) @ psi
                worst = max(worst, np.max(np.abs(TrotterStepper(ham, s, 0.05).step(psi) - dense)))
        return worst < 1e-12

    def predictor():
        ham = build_model("heisenberg", 4)
        spec = eigendecompose_hermitian(ham.dense)
        psi = haar_random_product_state(4, 3)
        k = error_kernel(ham, 2)
        measured = measured_trotter_error(ham, schedule_for_order(2), 0.01, psi, [2.0])[0]
        return abs(perturbative_error(spec, k, psi, 0.01, 2.0) / measured - 1) < 0.1

    def gradient():
        ham = build_model("stark", 3)
        loss = SpectralLoss(ham, LossConfig(T_l=1.0))
        x = np.random.default_rng(5).uniform(-np.pi, np.pi, 6)
        g = loss.value_and_grad(VariationalParameters.from_vector(x))[1]
        h = 1e-5
        f = lambda y: loss(VariationalParameters.from_vector(y))[0]  # noqa: E731
        fd = np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(6)])
        return np.allclose(g, fd, rtol=1e-4, atol=1e-10)

    def echo():
        spec = eigendecompose_hermitian(np.diag([0.0, 0.5]).astype(complex))
        psi = np.array([1, 1]) / np.sqrt(2)
        return abs(loschmidt_exact(spec, psi, [4 * np.pi])[0] - 1) < 1e-10

    return [
        ("kron_embed bit order", embed),
        ("Suzuki coefficient identities", suzuki),
        ("local gates equal dense step", local_vs_dense),
        ("spectral predictor within 10%", predictor),
        ("loss gradient vs finite differences", gradient),
        ("Loschmidt revival on a ladder", echo),
    ]


def selftest() -> int:
    failed = 0
    for name, check in _selftest_checks():
        ok = bool(check())
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_OK if not failed else EXIT_NUMERIC


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.out is not None:
        changes["out"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    return cfg.replace(**changes) if changes else cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trotterscar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("simulate", "trajectory, echoes and errors for one initial state"),
        ("optimize", "variational search for a low-error product state"),
        ("figure", "plot data from a finished run"),
        ("selftest", "quick numerical self-checks"),
    ):
        p = sub.add_parser(name, help=text)
        if name == "figure":
            p.add_argument("which", choices=FIGURES)
        if name != "selftest":
            p.add_argument("--config", metavar="PATH")
            p.add_argument("--out", metavar="DIR")
            p.add_argument("--seed", type=int, metavar="N")
            p.add_argument("--jobs", type=int, default=1, metavar="N")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return selftest()
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be at least 1")
        if args.command == "figure":
            out = args.out if args.out is not None else _config(args).out
            svg, data = cmd_figure(out, args.which)
            print(f"wrote {svg} and {data}")
            return EXIT_OK
        cfg = _config(args)
        run = cmd_simulate if args.command == "simulate" else cmd_optimize
        man = run(cfg, jobs=args.jobs)
        print(json.dumps({"out": cfg.out, "manifest_hash": man["manifest_hash"], **man["derived"]}, default=str))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
