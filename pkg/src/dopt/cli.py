"""``dopt`` command line: local search, bounds, exact solves and verification.

Exit codes: 0 ok, 1 verification failure, 2 bad input or capacity,
3 infeasible budget (s < m), 4 search stopped without proof.
Reports are JSON with 17-digit floats and no timings, so a fixed seed gives
identical bytes whatever ``--threads`` is.
"""
from __future__ import annotations

import argparse
import os
import sys
from math import comb
from pathlib import Path

import numpy as np

from . import reference
from .bnb import BnbOptions, solve_exact
from .infomat import RankDeficientError
from .instance import CapacityError, InstanceError, ModelSpec, make_model_spec, parse_spec
from .localsearch import EPS_IMP, InfeasibleError, SearchOptions, design_info, local_search
from .oracle import price
from .relax import EPS_KW, RelaxOptions, natural_bound_rowgen
from .serialize import (certificate_from_dict, certificate_to_dict, design_from_dict, design_to_dict,
                        dumps, loads)

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_UNPROVEN = 0, 1, 2, 3, 4

# instances checked by ``dopt verify`` with no arguments: (kind, F, L, s)
DEFAULT_SUITE = [
    ("linear", 1, 2, 3),
    ("linear", 2, 2, 4),
    ("linear", 2, 3, 5),
    ("linear", 3, 2, 6),
    ("quadratic", 1, 3, 4),
    ("quadratic", 2, 3, 7),
]
# multisets enumerated by the brute-force optimum inside ``verify``
VERIFY_OPTIMUM_CAP = 200_000


class UsageError(Exception):
    pass


def default_threads() -> int:
    env = os.environ.get("DOPT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"DOPT_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _add_instance_flags(p, budget_required=True):
    p.add_argument("--model", choices=("linear", "quadratic"))
    p.add_argument("--factors", type=int)
    p.add_argument("--levels", type=int, help="default 2 for linear, 3 for quadratic")
    p.add_argument("--instance", help='text form, e.g. "kind=linear factors=3 levels=2"')
    p.add_argument("--budget", type=int, required=budget_required)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--threads", type=int, default=None, help="default: $DOPT_THREADS or all cores")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dopt", description="D-optimal designs on implicit response-surface instances.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("local-search", help="exchange local search")
    _add_instance_flags(p)
    p.add_argument("--eps-imp", type=float, default=EPS_IMP)
    p.add_argument("--restarts", type=int, default=0)
    p.add_argument("--max-iterations", type=int, default=None)

    p = sub.add_parser("bound", help="row-generated relaxation bound with a full-scope certificate")
    _add_instance_flags(p)
    p.add_argument("--rounds", type=int, default=200)
    p.add_argument("--topk", type=int, default=5)
    p.add_argument("--eps-kw", type=float, default=EPS_KW)

    p = sub.add_parser("solve", help="exact branch-and-bound")
    _add_instance_flags(p)
    p.add_argument("--node-cap", type=int, default=10000)
    p.add_argument("--time-cap", type=float, default=None, help="seconds; makes the run timing dependent")
    p.add_argument("--rounds", type=int, default=200)
    p.add_argument("--topk", type=int, default=5)
    p.add_argument("--eps-kw", type=float, default=1e-9)

    p = sub.add_parser("verify", help="cross-check fast paths against brute force, or check artifacts")
    _add_instance_flags(p, budget_required=False)
    p.add_argument("--certificate", help="certificate JSON (a bound report is accepted too)")
    p.add_argument("--design", help="design JSON (a local-search or solve report is accepted too)")
    return parser


def _spec(args):
    if args.instance:
        if args.model or args.factors is not None:
            raise UsageError("give either --instance or --model/--factors, not both")
        return parse_spec(args.instance)
    if not args.model or args.factors is None:
        raise UsageError("instance needs --model and --factors (or --instance)")
    levels = args.levels if args.levels is not None else (2 if args.model == "linear" else 3)
    return make_model_spec(args.model, args.factors, levels)


def _budget(spec, s):
    if s is None:
        raise UsageError("--budget is required")
    if s < spec.m:
        raise InfeasibleError(f"budget s={s} is smaller than m={spec.m}")
    return s


def _threads(args):
    t = args.threads if args.threads is not None else default_threads()
    if t < 1:
        raise UsageError("--threads must be >= 1")
    return t


def _emit(args, report) -> None:
    text = dumps(report) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _model(spec):
    d = spec.to_dict()
    if d["n"] is None:
        d["n"] = str(spec.row_count_exact)
    return d


def cmd_local_search(args) -> int:
    spec = _spec(args)
    s = _budget(spec, args.budget)
    opts = SearchOptions(max_iterations=args.max_iterations, eps_imp=args.eps_imp, threads=_threads(args),
                         seed=args.seed, restarts=args.restarts)
    design, trace = local_search(spec, s, opts)
    ldet = design_info(design).ldet()
    _emit(args, {
        "command": "local-search",
        "model": _model(spec),
        "budget": s,
        "seed": args.seed,
        "ldet": ldet,
        "design": design_to_dict(design, ldet),
        "trace": {
            "initial_ldet": trace.initial_ldet,
            "moves": len(trace.iterations),
            "ldet_path": [v for v, _ in trace.iterations],
            "skipped_singular": trace.skipped_singular,
            "restart_ldets": trace.restart_ldets,
        },
    })
    return EXIT_OK


def cmd_bound(args) -> int:
    spec = _spec(args)
    s = _budget(spec, args.budget)
    if args.rounds < 0 or args.topk < 1:
        raise UsageError("--rounds must be >= 0 and --topk >= 1")
    opts = RelaxOptions(eps_kw=args.eps_kw, rounds=args.rounds, topk=args.topk, threads=_threads(args))
    rep = natural_bound_rowgen(spec, s, opts)
    weights = rep.solution.weight_map(rep.pool)
    _emit(args, {
        "command": "bound",
        "model": _model(spec),
        "budget": s,
        "bound": rep.bound,
        "relax_value": rep.relax_value,
        "kw_gap": rep.kw_gap,
        "rounds": rep.rounds,
        "pool_size": rep.pool_size_final,
        "capped": rep.capped,
        "converged": rep.converged,
        "relaxed_support": [{"levels": list(p), "weight": w} for p, w in weights.items()],
        "certificate": certificate_to_dict(rep.certificate, spec),
    })
    return EXIT_OK


def cmd_solve(args) -> int:
    spec = _spec(args)
    s = _budget(spec, args.budget)
    opts = BnbOptions(node_cap=args.node_cap, time_cap=args.time_cap, eps_kw=args.eps_kw, topk=args.topk,
                      rounds=args.rounds, threads=_threads(args))
    design, proof = solve_exact(spec, s, opts)
    ldet = proof["optimal_ldet"]
    _emit(args, {
        "command": "solve",
        "model": _model(spec),
        "budget": s,
        "ldet": ldet,
        "design": design_to_dict(design, ldet),
        "proof": {
            "proven": proof["proven"],
            "final_gap": proof["final_gap"],
            "nodes_explored": proof["nodes_explored"],
            "root_bound": proof["root_bound"],
            "incumbents": proof["incumbents"],
        },
    })
    return EXIT_OK if proof["proven"] else EXIT_UNPROVEN


# ---- verify -------------------------------------------------------------

def _verify_certificate(path):
    data = loads(Path(path).read_text(encoding="utf-8"))
    if "certificate" in data:
        data = data["certificate"]
    cert, spec = certificate_from_dict(data)
    problems = reference.check_certificate(spec, cert.theta, cert.tau, cert.s, cert.upper_bound)
    return [f"certificate: {p}" for p in problems], f"certificate for {spec}"


def _verify_design(path):
    data = loads(Path(path).read_text(encoding="utf-8"))
    if "design" in data:
        data = data["design"]
    design = design_from_dict(data)
    problems = []
    try:
        info = design_info(design)
    except RankDeficientError:
        return ["design: information matrix is singular"], f"design for {design.spec}"
    stated = data.get("ldet")
    if stated is not None:
        _, rows, mults = design.rows_and_mults()
        sign, fresh = np.linalg.slogdet((rows * mults[:, None]).T @ rows)
        if sign <= 0 or abs(fresh - stated) > 1e-9 * max(1.0, abs(fresh)):
            problems.append(f"design: stated ldet {stated:.17g} != recomputed {fresh:.17g}")
        if abs(info.ldet() - fresh) > 1e-9 * max(1.0, abs(fresh)):
            problems.append(f"design: factor ldet {info.ldet():.17g} != dense {fresh:.17g}")
    return problems, f"design for {design.spec}"


def check_instance(spec, s, threads=1, seed=0, pricing_trials=20):
    """Cross-check every fast path on one small instance; returns a list of problems."""
    n = spec.row_count
    if n is None or n > reference.RELAX_CAP:
        raise CapacityError(f"capacity: n={spec.row_count_exact} exceeds the reference cap {reference.RELAX_CAP}")
    problems = []
    rng = np.random.default_rng(seed)
    m = spec.m
    for t in range(pricing_trials):
        G = rng.standard_normal((m, m))
        Q = G @ G.T
        fast = price(spec, Q, threads=threads)
        ref = reference.brute_force_price(spec, Q)
        if fast.best_point != ref.best_point:
            problems.append(f"pricing trial {t}: point {fast.best_point} != reference {ref.best_point}")
        if abs(fast.best_value - ref.best_value) > 1e-9 * max(1.0, abs(ref.best_value)):
            problems.append(f"pricing trial {t}: value {fast.best_value:.17g} != reference {ref.best_value:.17g}")

    design, _ = local_search(spec, s, SearchOptions(threads=threads, seed=seed))
    ls_val = design_info(design).ldet()
    if not reference.single_exchange_optimal(design):
        problems.append("local search: an improving single exchange exists")

    rep = natural_bound_rowgen(spec, s, RelaxOptions(threads=threads))
    cert = rep.certificate
    problems += [f"bound certificate: {p}" for p in
                 reference.check_certificate(spec, cert.theta, cert.tau, cert.s, cert.upper_bound)]
    _, dense_val, _ = reference.dense_relaxation(spec, s)
    if abs(rep.bound - dense_val) > 1e-5:
        problems.append(f"bound {rep.bound:.17g} differs from dense relaxation {dense_val:.17g}")
    if ls_val > rep.bound + 1e-6:
        problems.append(f"local search ldet {ls_val:.17g} exceeds bound {rep.bound:.17g}")

    if comb(n + s - 1, s) <= VERIFY_OPTIMUM_CAP:
        _, exact_val = solve_exact(spec, s, BnbOptions(threads=threads))
        exact_val = exact_val["optimal_ldet"]
        _, brute_val = reference.brute_force_optimum(spec, s)
        if abs(exact_val - brute_val) > 1e-9 * max(1.0, abs(brute_val)):
            problems.append(f"exact ldet {exact_val:.17g} != brute force {brute_val:.17g}")
        if exact_val < ls_val - 1e-6 or exact_val > rep.bound + 1e-6:
            problems.append("duality sandwich violated: local <= exact <= bound does not hold")
    return problems


def cmd_verify(args) -> int:
    threads = _threads(args)
    checks = []  # (label, problems)
    if args.certificate:
        probs, label = _verify_certificate(args.certificate)
        checks.append((label, probs))
    if args.design:
        probs, label = _verify_design(args.design)
        checks.append((label, probs))
    if args.instance or args.model:
        spec = _spec(args)
        s = args.budget if args.budget is not None else spec.m + 2
        _budget(spec, s)
        checks.append((f"{spec} s={s}", check_instance(spec, s, threads, args.seed)))
    if not checks:
        for kind, F, L, s in DEFAULT_SUITE:
            spec = ModelSpec(kind, F, L)
            checks.append((f"{spec} s={s}", check_instance(spec, s, threads, args.seed)))
    failed = False
    for label, probs in checks:
        if probs:
            failed = True
            print(f"FAIL {label}")
            for p in probs:
                print(f"  {p}")
        else:
            print(f"ok   {label}")
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {
    "local-search": cmd_local_search,
    "bound": cmd_bound,
    "solve": cmd_solve,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except InfeasibleError as exc:
        print(f"dopt: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CapacityError as exc:
        msg = str(exc)
        print(f"dopt: {msg if msg.startswith('capacity') else 'capacity: ' + msg}", file=sys.stderr)
        return EXIT_INPUT
    except (InstanceError, UsageError, KeyError, ValueError, OSError) as exc:
        print(f"dopt: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
