"""Command-line entry point.

Subcommands: simulate, likelihood, mcmc, bounds, moments, table1, version.
Exit codes: 0 success, 1 usage error, 2 data/config error, 3 numerical or
capacity error. Every randomized output embeds its seed.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io as lio
from .bounds import MomentConstraint, extremize, kingman_test
from .exceptions import (
    CapacityError,
    DataFormatError,
    DomainError,
    InfeasibleConstraints,
    LambdaInferError,
    NumericalError,
)
from .genealogy import SamplingSchedule, simulate_dataset
from .likelihood import estimate_likelihood, exact_likelihood
from .measures import (
    LambdaMeasure,
    beta_coalescent,
    bolthausen_sznitman,
    durrett_schweinsberg,
    eldon_wakeley,
    expected_limiting_posterior,
    kingman,
    moment,
    star,
)
from .mcmc import ChainConfig, credible_interval, run_chain
from .mutation import BinaryLociModel, parent_independent
from .prior import PriorSpec

TABLE1_THETAS = (0.04, 0.1, 0.5, 1.0, 5.0, 10.0, 17.0)


class UsageError(LambdaInferError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with code 2 by default
        raise UsageError(message)


def parse_measure(spec: str) -> LambdaMeasure:
    """Named measure (kingman, star, uniform, beta:a, ew:psi, ds:c) or a
    measure config file path."""
    if os.path.exists(spec):
        return lio.read_measure_config(spec)
    name, _, arg = spec.partition(":")
    name = name.lower()
    try:
        if name in ("kingman", "delta0"):
            return kingman()
        if name in ("star", "delta1"):
            return star()
        if name in ("uniform", "bs", "bolthausen-sznitman"):
            return bolthausen_sznitman()
        if name == "beta":
            return beta_coalescent(float(arg))
        if name in ("ew", "eldon-wakeley"):
            return eldon_wakeley(float(arg))
        if name in ("ds", "durrett-schweinsberg"):
            return durrett_schweinsberg(float(arg))
    except ValueError:
        raise DataFormatError(f"bad measure parameter in {spec!r}") from None
    raise DataFormatError(f"unknown measure {spec!r} (and no such file)")


def parse_schedule(spec: str) -> SamplingSchedule:
    """``time:size,time:size,...``"""
    entries = []
    for part in spec.split(","):
        t, _, s = part.partition(":")
        try:
            entries.append((float(t), int(s)))
        except ValueError:
            raise DataFormatError(f"bad schedule entry {part!r}") from None
    return SamplingSchedule(tuple(entries))


def build_model(args):
    if args.model == "binary-loci":
        return BinaryLociModel(args.loci, args.theta)
    if args.model == "parent-independent":
        return parent_independent(args.alleles, args.theta)
    raise DataFormatError(f"unknown mutation model {args.model!r}")


def _add_model_flags(p):
    p.add_argument("--model", default="binary-loci", choices=["binary-loci", "parent-independent"])
    p.add_argument("--theta", type=float, default=0.1, help="total mutation rate")
    p.add_argument("--loci", type=int, default=10, help="binary loci count")
    p.add_argument("--alleles", type=int, default=2, help="type count for parent-independent")


def _out_fh(path):
    return open(path, "w", newline="") if path else sys.stdout


def cmd_version(args, argv) -> int:
    print(f"lambda-infer {lio.PACKAGE_VERSION}")
    return 0


def cmd_table1(args, argv) -> int:
    thetas = (
        [float(t) for t in args.theta_list.split(",")] if args.theta_list else list(TABLE1_THETAS)
    )
    fh = _out_fh(args.out)
    try:
        fh.write(lio.comment_line(None, argv) + "\n")
        fh.write("theta,E_kingman,E_star\n")
        for th in thetas:
            ek = expected_limiting_posterior(th, "kingman")
            es = expected_limiting_posterior(th, "star")
            fh.write(f"{th:g},{ek:.6f},{es:.6f}\n")
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_moments(args, argv) -> int:
    measure = parse_measure(args.measure)
    values = [moment(measure, k) for k in range(3, args.n + 1)]
    if args.out:
        lio.write_moments(values, args.out, argv=argv)
    else:
        lio.write_moments(values, sys.stdout, argv=argv)
    return 0


def cmd_simulate(args, argv) -> int:
    measure = parse_measure(args.measure)
    measure.validate(tol=1e-9)
    model = build_model(args)
    schedule = parse_schedule(args.schedule)
    data = simulate_dataset(measure, model, schedule, args.seed)
    if args.out:
        lio.write_dataset(data, args.out, seed=args.seed, argv=argv)
    else:
        lio.write_dataset(data, "/dev/stdout", seed=args.seed, argv=argv)
    return 0


def cmd_likelihood(args, argv) -> int:
    data = lio.read_dataset(args.data)
    measure = parse_measure(args.measure)
    model = build_model(args)
    if args.exact:
        if len(data.batches) != 1:
            raise DataFormatError("--exact requires single-time data")
        value = exact_likelihood(measure, data.counts_at(0), model)
        log_value = math.log(value) if value > 0 else -math.inf
        print(f"value {value:.12g}")
        print(f"log_value {log_value:.12g}")
        print("log_variance 0")
        return 0
    est = estimate_likelihood(
        measure, data, model, args.particles, args.seed, threads=args.threads
    )
    print(f"value {est.value:.12g}")
    print(f"log_value {est.log_value:.12g}")
    print(f"log_variance {est.log_variance:.12g}")
    return 0


def cmd_mcmc(args, argv) -> int:
    data = lio.read_dataset(args.data)
    model = build_model(args)
    prior = lio.read_prior_config(args.prior) if args.prior else PriorSpec()
    config = ChainConfig(
        data=data,
        model=model,
        prior=prior,
        variant=args.variant,
        steps=args.steps,
        scale=args.scale,
        particles=args.particles,
        surrogate_particles=args.surrogate_particles,
        seed=args.seed,
        thin=args.thin,
        n_moments=args.moments_upto,
        threads=args.threads,
    )
    result = run_chain(config)
    lio.write_chain(result, args.out, argv=argv)
    lo, hi = credible_interval(result.trace(3, burn=args.steps // 2, thin=args.thin), 0.95)
    print(f"steps {args.steps}")
    print(f"acceptance {result.acceptance_rate:.4f}")
    print(f"stage1 {result.stage1_rate:.4f} stage2 {result.stage2_rate:.4f}")
    print(f"lambda3_interval_95 [{lo:.4f}, {hi:.4f}]")
    print(f"wall_ms_total {result.wall_ms.sum():.1f}")
    return 0


def _parse_functional(spec: str):
    name, _, arg = spec.partition(":")
    if name == "exp":
        return lambda r: math.exp(-r)
    if name == "monomial":
        k = int(arg)
        return lambda r: r**k
    if name == "indicator":
        a, b = (float(x) for x in arg.split(","))
        return lambda r: 1.0 if a <= r <= b else 0.0
    raise DataFormatError(f"unknown functional {spec!r} (use exp, monomial:k, indicator:a,b)")


def cmd_bounds(args, argv) -> int:
    cols = lio.read_chain_traces(args.chain)
    indices = [int(i) for i in args.indices.split(",")]
    burn = int(args.burn)
    constraints = []
    for idx in indices:
        key = f"lambda{idx}"
        if key not in cols:
            raise DataFormatError(f"chain file lacks column {key}")
        lo, hi = credible_interval(cols[key][burn:], args.level, thin=args.thin)
        constraints.append(MomentConstraint(idx, 0, hi))
        constraints.append(MomentConstraint(idx, 1, -lo))
    q = _parse_functional(args.functional)
    low = extremize(q, constraints, "min", args.grid)
    high = extremize(q, constraints, "max", args.grid)
    fh = _out_fh(args.out)
    try:
        fh.write(lio.comment_line(None, argv) + "\n")
        fh.write("quantity,value\n")
        fh.write(f"min,{low.value:.9f}\n")
        fh.write(f"max,{high.value:.9f}\n")
        for tag, res in (("min", low), ("max", high)):
            for x, w in res.witness.atoms:
                fh.write(f"witness_{tag},{x:.9f}:{w:.9f}\n")
        if args.kingman_test:
            fh.write(f"kingman_test,{kingman_test(cols['lambda3'][burn:], args.level)}\n")
    finally:
        if args.out:
            fh.close()
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="lambda-infer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("version", help="print the package version")
    p.set_defaults(func=cmd_version)

    p = sub.add_parser("table1", help="limiting posterior probabilities by theta")
    p.add_argument("--theta-list", default=None, help="comma-separated theta values")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("moments", help="moment column of a named measure")
    p.add_argument("--measure", required=True)
    p.add_argument("--n", type=int, required=True, help="highest moment index")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("simulate", help="simulate a serial dataset")
    p.add_argument("--measure", required=True)
    p.add_argument("--schedule", default="0:20,0.5:20,1:20,1.5:20,2:20")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    _add_model_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("likelihood", help="likelihood of a dataset under a measure")
    p.add_argument("--data", required=True)
    p.add_argument("--measure", required=True)
    p.add_argument("--particles", type=int, default=75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--threads", type=int, default=_default_threads())
    _add_model_flags(p)
    p.set_defaults(func=cmd_likelihood)

    p = sub.add_parser("mcmc", help="sample the posterior over mixture parameters")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", default="exact", choices=["exact", "noisy", "da-exact", "da-noisy"])
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--particles", type=int, default=75)
    p.add_argument("--surrogate-particles", type=int, default=5)
    p.add_argument("--scale", type=float, default=0.0025)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--moments-upto", type=int, default=None)
    p.add_argument("--prior", default=None, help="prior config file")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_mcmc)

    p = sub.add_parser("bounds", help="extremize a functional over a credible envelope")
    p.add_argument("--chain", required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--indices", default="3,4")
    p.add_argument("--functional", default="exp")
    p.add_argument("--grid", type=int, default=1000)
    p.add_argument("--burn", type=int, default=0)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--kingman-test", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bounds)

    return parser


def _default_threads() -> int:
    env = os.environ.get("LAMBDA_INFER_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (DataFormatError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, CapacityError, InfeasibleConstraints) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
