"""Command-line front end: build, optimize, evaluate, stream, verify, compare.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 verification
mismatch.  Analysis outputs are CSV on stdout; factorizations and noise go to
files named by --out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .error_eval import (
    MECH_CSV_HEADER,
    bounds_csv,
    bounds_table,
    max_err,
    rownorm_of,
    sensitivity_of,
)
from .optimizer import OptConfig, optimize_blt
from .params import (
    blt_coeffs,
    degree1_closed_form,
    load_factorization,
    save_factorization,
)
from .rational import ra_blt_build
from .recursive import comb_dense, comc_dense, recursive_norms
from .seq import ltt_apply_dense, ltt_dense, series_reciprocal
from .streaming import (
    PER_STEP,
    PREFIX,
    NoiseStreamConfig,
    _uniform_chunk,
    noise_stream,
    write_noise_csv,
    write_noise_f64,
)

_VERIFY_CAP = 1 << 14
_RECURSIVE_DENSE_CAP = 1 << 12


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text: str):
    vals = [int(tok) for tok in text.split(",") if tok.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _str_list(text: str):
    vals = [tok.strip() for tok in text.split(",") if tok.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _num_threads() -> int:
    env = os.environ.get("BLT_NOISE_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _cmd_bounds(args) -> int:
    if args.n_max < 1:
        raise ValueError("--n-max must be >= 1")
    if args.log_grid:
        ns = np.unique(
            np.clip(np.round(np.geomspace(1, args.n_max, args.log_grid)), 1, args.n_max)
        ).astype(int)
    else:
        ns = np.arange(1, args.n_max + 1)
    sys.stdout.write(bounds_csv(ns))
    return 0


def _cmd_build(args) -> int:
    if args.method == "ra":
        if args.degree is None:
            raise ValueError("--degree is required for --method ra")
        fact = ra_blt_build(args.degree, args.steps)
    else:  # degree1
        if args.degree not in (None, 1):
            raise ValueError("--method degree1 only supports --degree 1")
        fact = degree1_closed_form(args.steps)
    save_factorization(fact, args.out)
    print(
        json.dumps(
            {"out": args.out, "method": fact.method, "degree": fact.degree, "n": fact.n}
        )
    )
    return 0


def _cmd_optimize(args) -> int:
    cfg = OptConfig(degree=args.degree, n=args.steps, max_iters=args.max_iters)
    res = optimize_blt(cfg)
    save_factorization(res.factorization, args.out)
    print(
        json.dumps(
            {
                "out": args.out,
                "degree": args.degree,
                "n": args.steps,
                "max_err": res.final_max_err,
                "ratio": res.factorization.meta["final_ratio"],
                "iterations": res.iterations,
                "converged": res.converged,
            }
        )
    )
    return 0


def _cmd_eval(args) -> int:
    fact = load_factorization(args.blt)
    n = args.steps if args.steps is not None else fact.n
    rep = max_err(fact, n)
    print(json.dumps(rep.as_dict(), indent=2))
    return 0


def _cmd_noisegen(args) -> int:
    fact = load_factorization(args.blt)
    kind = PER_STEP if args.mode == "per-step" else PREFIX
    cfg = NoiseStreamConfig(
        factorization=fact,
        n=args.steps,
        m=args.dim,
        seed=args.seed,
        zeta=args.zeta,
        output_kind=kind,
    )
    summary = {
        "out": args.out,
        "n": cfg.n,
        "m": cfg.m,
        "sigma": cfg.sigma,
        "mode": args.mode,
        "format": args.format,
    }
    if args.format == "csv":
        write_noise_csv(cfg, args.out)
    else:
        summary["sidecar"] = write_noise_f64(cfg, args.out, factorization_path=args.blt)
    print(json.dumps(summary))
    return 0


def _cmd_verify(args) -> int:
    if args.steps > _VERIFY_CAP:
        raise ValueError(f"--steps is capped at {_VERIFY_CAP} for dense verification")
    fact = load_factorization(args.blt)
    n, m = args.steps, args.dim
    streamed = {}
    for kind in (PER_STEP, PREFIX):
        cfg = NoiseStreamConfig(fact, n, m, args.seed, 1.0, kind)
        streamed[kind] = np.vstack(list(noise_stream(cfg)))
    sigma = NoiseStreamConfig(fact, n, m, args.seed, 1.0, PER_STEP).sigma
    bitgen = np.random.Philox(key=int(args.seed))
    from scipy.special import ndtri

    z = ndtri(_uniform_chunk(bitgen, n * m)).reshape(n, m) * sigma
    r = blt_coeffs(fact.rational(), n).coeffs
    dense_per = ltt_apply_dense(r, z)
    dense_prefix = np.cumsum(dense_per, axis=0)
    dev = max(
        float(np.max(np.abs(streamed[PER_STEP] - dense_per))),
        float(np.max(np.abs(streamed[PREFIX] - dense_prefix))),
    )
    ok = dev <= args.tol
    print(
        json.dumps(
            {
                "n": n,
                "m": m,
                "seed": args.seed,
                "sigma": sigma,
                "max_abs_deviation": dev,
                "tol": args.tol,
                "status": "ok" if ok else "mismatch",
            }
        )
    )
    return 0 if ok else 3


def _cmd_compare(args) -> int:
    methods = args.methods
    for meth in methods:
        if meth not in ("ra", "opt", "degree1"):
            raise ValueError(f"unknown method {meth!r}")
    ns = args.n_grid
    tasks = []  # (method, degree, n, thunk)
    for meth in methods:
        if meth == "ra":
            for d in args.degrees:
                if d < 3:
                    print(f"compare: skipping ra degree {d} (needs >= 3)", file=sys.stderr)
                    continue
                fact = ra_blt_build(d, max(ns))
                for n in ns:
                    tasks.append((meth, d, n, lambda f=fact, n=n: max_err(f, n)))
        elif meth == "opt":
            for d in args.degrees:
                for n in ns:
                    tasks.append(
                        (
                            meth,
                            d,
                            n,
                            lambda d=d, n=n: max_err(
                                optimize_blt(OptConfig(degree=d, n=n)).factorization, n
                            ),
                        )
                    )
        else:
            for n in ns:
                tasks.append((meth, 1, n, lambda n=n: max_err(degree1_closed_form(n), n)))
    workers = _num_threads()
    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda t: t[3](), tasks))
    else:
        reports = [t[3]() for t in tasks]
    lines = ["method,degree," + MECH_CSV_HEADER]
    for (meth, d, n, _), rep in zip(tasks, reports):
        b = rep.bounds
        lines.append(
            f"{meth},{d},{n},{b['opt_lt_toe']:.12g},{b['mathias_ub']:.12g},"
            f"{b['matousek_lb']:.12g},{b['bintree']:.12g},{rep.max_err:.12g},"
            f"{rep.max_err / b['opt_lt_toe']:.12g}"
        )
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def _cmd_recursive(args) -> int:
    fact = load_factorization(args.base)
    levels = args.levels
    if levels < 1:
        raise ValueError("--levels must be >= 1")
    n1 = fact.n
    sens1 = sensitivity_of(fact, n1)
    rn1 = rownorm_of(fact, n1)
    sens, rn_bound = recursive_norms(sens1, rn1, levels)
    n_total = n1**levels
    n_prime = n1 * (n1**levels - 1) // (n1 - 1) if n1 > 1 else levels
    out = {
        "base": args.base,
        "n1": n1,
        "levels": levels,
        "n": n_total,
        "n_prime": n_prime,
        "sensitivity": float(sens),
        "rownorm_bound": float(rn_bound),
        "max_err_bound": float(sens * rn_bound),
    }
    code = 0
    # the stacked C factor has n_prime rows, which is what the dense cap binds
    if max(n_total, n_prime) <= _RECURSIVE_DENSE_CAP:
        r = blt_coeffs(fact.rational(), n1).coeffs
        B = B1 = ltt_dense(np.cumsum(r))
        C = C1 = ltt_dense(series_reciprocal(r))
        for _ in range(levels - 1):
            B = comb_dense(B1, B)
            C = comc_dense(C1, C)
        k = min(args.steps_check, n_total)
        prod = B @ C
        dev = float(np.max(np.abs(prod[:k, :k] - np.tril(np.ones((k, k))))))
        out["checked_steps"] = k
        out["max_abs_deviation"] = dev
        out["status"] = "ok" if dev <= 1e-8 else "mismatch"
        if dev > 1e-8:
            code = 3
    else:
        out["status"] = "unchecked (dense size cap)"
    print(json.dumps(out, indent=2))
    return code


def _build_parser() -> _Parser:
    parser = _Parser(prog="blt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="CSV table of reference bounds over an n grid")
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--log-grid", type=int, default=0, help="number of geometric grid points (default: every n)")
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("build", help="construct a factorization and write JSON")
    p.add_argument("--method", choices=("ra", "degree1"), required=True)
    p.add_argument("--degree", type=int)
    p.add_argument("--steps", type=int, default=1024)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("optimize", help="numerically minimize MaxErr for fixed n")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--seed", type=int, default=0, help="reserved; optimization is deterministic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("eval", help="MaxErr report for a stored factorization")
    p.add_argument("--blt", required=True)
    p.add_argument("--steps", type=int)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("noisegen", help="generate the correlated noise stream")
    p.add_argument("--blt", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zeta", type=float, default=1.0)
    p.add_argument("--mode", choices=("per-step", "prefix"), default="per-step")
    p.add_argument("--format", choices=("csv", "f64"), default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_noisegen)

    p = sub.add_parser("verify", help="streaming vs dense comparison (exit 3 on mismatch)")
    p.add_argument("--blt", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("compare", help="ratio-to-optimal curves as CSV")
    p.add_argument("--degrees", type=_int_list, required=True)
    p.add_argument("--methods", type=_str_list, required=True)
    p.add_argument("--n-grid", type=_int_list, required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("recursive", help="recursive-composition norms and validity check")
    p.add_argument("--base", required=True)
    p.add_argument("--levels", type=int, required=True)
    p.add_argument("--steps-check", type=int, default=64)
    p.set_defaults(func=_cmd_recursive)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
