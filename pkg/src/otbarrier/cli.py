"""Command-line front end.

    otbarrier solve --method {lp,entropic,barrier-sinkhorn,ipm} --in FILE ...
    otbarrier validate --in FILE
    otbarrier generate --kind classical --dims 3,4 --seed 1 [--out FILE]
    otbarrier bench --sizes 4,6,8 --repeats 3 --out bench.csv

Exit codes: 0 success, 2 not certified, 3 input error, 4 assertion failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import classical as cl
from . import instances
from . import quantum as qu
from .barriers import make_problem
from .errors import BoundViolation, InputError, OTError
from .ipm import TRACE_FIELDS, IPMConfig, follow_path, path_point
from .validate import run_checks

log = logging.getLogger("otbarrier")

EXIT_OK = 0
EXIT_NOT_CERTIFIED = 2
EXIT_INPUT = 3
EXIT_ASSERT = 4

METHODS = ("lp", "entropic", "barrier-sinkhorn", "ipm")


def _ints(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text}") from exc


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _write_trace(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _marginal_residuals(inst, V) -> list:
    return [float(np.max(np.abs(cl.marginal(V, i) - p))) for i, p in enumerate(inst.P.p)]


def _start_summary(inst) -> dict:
    P = make_problem(inst)
    return {"radius": P.region.radius, "start_slack_min": P.slack_min(P.region.center),
            "start_norm": float(np.linalg.norm(P.region.center))}


def _solve(args) -> int:
    inst = instances.load_instance(args.inp)
    method = args.method
    delta = args.delta
    eps = args.epsilon
    quantum = isinstance(inst, qu.QuantumInstance)
    report = {"method": method, "kind": "quantum" if quantum else "classical",
              "instance": inst.name, "dims": list(inst.dims),
              "parameters": {"delta": delta, "epsilon": eps, "mode": args.mode}}
    trace_header, trace_rows = None, []
    t0 = time.perf_counter()

    if method != "ipm" and quantum:
        red = qu.diagonal_reduction(inst)
        if red is None:
            raise InputError(f"method {method} needs a classical or diagonal quantum instance")
        inst = red
        report["parameters"]["diagonal_reduction"] = True

    if method == "lp":
        tau, V = cl.lp_reference(inst)
        res = _marginal_residuals(inst, V)
        report.update(value=tau, gap=0.0, residuals=res, iterations=None,
                      flop_estimate=None, certified=max(res) <= 1e-8 * (1 + inst.common_mass))
    elif method == "entropic":
        if eps is None:
            eps = cl.entropic_eps(delta, inst.dims)
            report["parameters"]["epsilon"] = eps
            report["parameters"]["epsilon_rule"] = "delta / log(prod n_i)"
        er = cl.entropic_sinkhorn(inst, eps)
        transport = float(np.sum(inst.C * er.U))
        gap = transport - er.tau_eps
        report.update(value=er.tau_eps, transport_cost=transport, gap=gap,
                      residuals=_marginal_residuals(inst, er.U), iterations=er.iterations,
                      flop_estimate=None, certified=gap <= delta)
    elif method == "barrier-sinkhorn":
        if eps is None:
            raise InputError("barrier-sinkhorn needs --epsilon")
        bs = cl.barrier_sinkhorn(inst, eps, tol=args.tol)
        trace_header = ("sweep", "phi", "residual")
        trace_rows = bs.trace
        report.update(value=bs.tau_beta, dual_value=bs.phi, gap=bs.tau_beta - bs.phi,
                      residuals=[bs.residual], iterations=bs.sweeps, flop_estimate=None,
                      certified=bs.converged)
        report["parameters"].update(_start_summary(inst))
    else:
        cfg = IPMConfig(delta=delta, mode=args.mode)
        problem = make_problem(inst)
        trace_header = TRACE_FIELDS
        if eps is not None:
            z, phi, rep = path_point(problem, eps, cfg)
            rec = problem.recover(z, eps)
            report.update(value=phi, dual_value=rep.value, gap=rec.primal_value - rep.value,
                          residuals=rec.residuals, iterations=rep.newton_steps,
                          flop_estimate=rep.flop_estimate,
                          certified=rec.max_residual <= 1e-6 * (1 + problem.mass))
        else:
            rep = follow_path(problem, cfg)
            c = rep.certificate
            report.update(value=rep.value, primal_value=c.primal_value, gap=c.gap,
                          residuals=c.primal_residuals, iterations=rep.newton_steps,
                          flop_estimate=rep.flop_estimate, certified=rep.certified)
            report["parameters"]["final_eps"] = c.eps
        report["outer_iterations"] = rep.outer_iterations
        report["parameters"]["growth"] = cfg.growth_for(problem.theta_bound)
        report["parameters"]["theta_bound"] = problem.theta_bound
        report["parameters"].update(_start_summary(inst))
        trace_rows = rep.trace

    report["wall_time"] = time.perf_counter() - t0
    if args.trace and trace_header is not None:
        _write_trace(args.trace, trace_header, trace_rows)
    text = json.dumps(_jsonable(report), indent=1, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(f"{method}: value={report['value']!r} gap={report['gap']!r} "
          f"certified={report['certified']}")
    return EXIT_OK if report["certified"] else EXIT_NOT_CERTIFIED


def _validate(args) -> int:
    inst = instances.load_instance(args.inp)
    results = run_checks(inst, seed=args.seed)
    ok = True
    for name, passed, detail in results:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if ok else EXIT_ASSERT


def _generate(args) -> int:
    data = instances.generate(args.kind, args.dims, seed=args.seed,
                              conditioning=args.conditioning, diagonal=args.diagonal)
    text = instances.dumps(data)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


BENCH_FIELDS = ("kind", "n", "repeat", "seed", "mode", "newton_steps", "outer",
                "flops", "flops_per_step", "wall_time", "value", "gap", "certified")


def _bench_one(kind, n, rep, mode, delta):
    seed = 1000 * n + rep
    dims = (n, n)
    inst = instances.generate_instance(kind, dims, seed=seed)
    problem = make_problem(inst)
    t0 = time.perf_counter()
    r = follow_path(problem, IPMConfig(delta=delta, mode=mode))
    wall = time.perf_counter() - t0
    per_step = float(np.median(r.newton_flops)) if r.newton_flops else math.nan
    return (kind, n, rep, seed, mode, r.newton_steps, r.outer_iterations, r.flop_estimate,
            per_step, wall, r.value, r.certificate.gap, r.certified)


def _bench(args) -> int:
    threads = int(os.environ.get("OT_BARRIER_THREADS", "0") or 0)
    jobs = [(args.kind, n, k, args.mode, args.delta)
            for n in args.sizes for k in range(args.repeats)]
    if threads > 0:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda j: _bench_one(*j), jobs))
    else:
        rows = [_bench_one(*j) for j in jobs]
    _write_trace(args.out, BENCH_FIELDS, rows)
    for row in rows:
        print(f"n={row[1]} repeat={row[2]} newton={row[5]} wall={row[9]:.3f}s")
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_NOT_CERTIFIED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="otbarrier",
                                 description="Barrier and entropic optimal transport solvers")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--delta", type=float, default=1e-6)
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--mode", choices=("short", "long"), default="long")
    s.add_argument("--tol", type=float, default=1e-9,
                   help="marginal tolerance for barrier-sinkhorn")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--trace", default=None, help="CSV trace path")
    s.add_argument("--out", default=None, help="JSON report path")
    s.set_defaults(func=_solve)

    v = sub.add_parser("validate", help="run oracle and invariant checks")
    v.add_argument("--in", dest="inp", required=True)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=_validate)

    g = sub.add_parser("generate", help="write a seeded random instance")
    g.add_argument("--kind", choices=instances.KINDS, default="classical")
    g.add_argument("--dims", type=_ints, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--conditioning", type=float, default=0.1)
    g.add_argument("--diagonal", action="store_true")
    g.add_argument("--out", default=None)
    g.set_defaults(func=_generate)

    b = sub.add_parser("bench", help="time IPM solves over sizes")
    b.add_argument("--sizes", type=_ints, required=True)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--kind", choices=instances.KINDS, default="classical")
    b.add_argument("--mode", choices=("short", "long"), default="short")
    b.add_argument("--delta", type=float, default=1e-6)
    b.add_argument("--out", required=True)
    b.set_defaults(func=_bench)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (BoundViolation, AssertionError) as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except OTError as exc:
        print(f"not certified: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NOT_CERTIFIED


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
