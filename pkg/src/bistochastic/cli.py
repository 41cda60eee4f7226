"""Command-line entry point: ``bistochastic {genmat,protect,ledger,simulate-table1,verify}``.

Exit codes: 0 success, 1 validation error, 2 guarantee target missed, 3 oracle failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import oracle
from .config import load_plan
from .errors import BistochasticError, InsufficientPeriodsError
from .ledger import Convention, ReleaseLedger
from .matrices import (
    FILE_TOL,
    build_matrix,
    entropy_rate,
    format_matrix,
    spec_from_dict,
    validate,
)
from .panel import ledger_path, protect_period
from .table1 import format_table1, round_half_up, running_mean_trajectory, simulate_table1

EXIT_OK, EXIT_INVALID, EXIT_TARGET, EXIT_ORACLE = 0, 1, 2, 3
ORACLE_TOL = 1e-9
MC_SIGMA = 4.0


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def cmd_genmat(args) -> int:
    d = {"type": args.type}
    for key in ("n", "epsilon", "beta", "path"):
        if getattr(args, key) is not None:
            d[key] = getattr(args, key)
    if args.partition is not None:
        d["partition"] = [int(x) for x in _floats(args.partition)]
    P = build_matrix(spec_from_dict(d))
    rep = entropy_rate(P, tol=FILE_TOL if args.type == "custom" else 1e-9)
    text = format_matrix(P)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"n={rep.n} bits={rep.bits:.15g} max_bits={rep.max_bits:.15g} beta={rep.beta:.15g}")
    return EXIT_OK


def cmd_protect(args) -> int:
    plan = load_plan(args.config)
    periods = [args.period] if args.period is not None else [p.t for p in plan.periods]
    for t in periods:
        result = protect_period(plan, t, out_dir=args.out, seed=args.seed, revise=args.revise)
        print(result.summary())
    return EXIT_OK


def _report_ledger(name: str, ledger: ReleaseLedger, targets, beta_L, convention, next_target, n_next) -> bool:
    print(f"== {name} (version {ledger.version}, {len(ledger)} releases)")
    for r in ledger.records:
        active = "" if r.active_count is None else f" active={r.active_count}"
        print(f"  t={r.t} n_t={r.n_t} bits={r.bits_t:.6f} beta_t={r.beta_t:.6f}{active}")
    for c in Convention:
        try:
            g = ledger.trajectory_guarantee(c)
            print(f"  beta_L[{c.value}] = {g.beta_L:.6f} ({g.total_bits:.6f} / {g.max_bits:.6f} bits)")
        except InsufficientPeriodsError as exc:
            print(f"  beta_L[{c.value}] = InsufficientPeriods: {exc}")
    ident = ledger.check_block_identity()
    print(f"  T*H(blockdiag) identity: holds={ident.holds} lhs={ident.lhs_bits:.6f} rhs={ident.rhs_bits:.6f}"
          + (" (sizes differ)" if ident.size_mismatch else ""))

    ok = True
    if targets is not None or beta_L is not None:
        if targets is None:
            targets = [0.0] * len(ledger)
        elif len(targets) == 1 and len(ledger) > 1:
            targets = targets * len(ledger)
        v = ledger.verdict(targets[: len(ledger)], beta_L, convention)
        print(f"  verdict[{convention.value}]: {'PASS' if v.passed else 'FAIL'}")
        for f in v.failures:
            print(f"    - {f}")
        if v.note:
            print(f"    ({v.note})")
        ok = v.passed
    if next_target is not None:
        req = ledger.required_next_entropy(next_target, n_next, Convention.FROM_FIRST)
        if req.feasible:
            print(f"  next release (n={n_next}) needs >= {req.bits:.6f} bits (beta >= {req.beta:.6f}) for beta_L >= {next_target}")
        else:
            print(f"  next release (n={n_next}) cannot reach beta_L >= {next_target}: needs {req.needed_bits:.6f} > {req.max_bits:.6f} bits")
    return ok


def cmd_ledger(args) -> int:
    convention = Convention.parse(args.convention) if args.convention else Convention.FROM_SECOND
    targets = _floats(args.targets) if args.targets else None
    beta_L = args.beta_l
    ledgers = []
    if args.ledger:
        ledgers.append((Path(args.ledger).stem, ReleaseLedger.load(args.ledger)))
    elif args.config:
        plan = load_plan(args.config)
        out_dir = Path(args.out) if args.out else (plan.output_dir if plan.output_dir.is_absolute() else plan.base_dir / plan.output_dir)
        if targets is None and plan.targets.per_period:
            targets = list(plan.targets.per_period)
        if beta_L is None:
            beta_L = plan.targets.beta_L
        if not args.convention:
            convention = plan.targets.convention
        for unit in plan.units():
            path = ledger_path(out_dir, unit.name)
            ledgers.append((unit.name, ReleaseLedger.load(path) if path.exists() else ReleaseLedger()))
    else:
        print("ledger: pass --ledger FILE or --config PLAN", file=sys.stderr)
        return EXIT_INVALID
    ok = True
    for name, led in ledgers:
        ok &= _report_ledger(name, led, targets, beta_L, convention, args.next_target, args.n_next)
    return EXIT_OK if ok else EXIT_TARGET


def cmd_simulate_table1(args) -> int:
    schedule = _floats(args.schedule)
    print(format_table1(simulate_table1(schedule, args.n)))
    if args.cross_section:
        pct = _floats(args.cross_section)
        traj = running_mean_trajectory(pct)
        print("running-mean trajectory from given cross-section percentages:")
        for T, (c, tr) in enumerate(zip(pct, traj), start=1):
            shown = "" if tr is None else f"{round_half_up(tr)}% ({tr:.4f})"
            print(f"  T={T} cross={c:g}% traj={shown}")
    return EXIT_OK


def run_oracle_suite(seed: int, trials: int) -> tuple[list[str], bool]:
    """Run both closed-form suites and the Monte Carlo transition check."""
    lines, ok = [], True
    t2 = oracle.block_diagonal_trials(trials, seed=seed)
    worst2 = max(c.delta for c in t2)
    ok &= worst2 < ORACLE_TOL
    lines.append(f"block-diagonal entropy (weighted mean): {trials} trials, max delta {worst2:.3e}")
    t3 = oracle.kronecker_chain_trials(trials, seed=seed + 1)
    worst3 = max(c.delta for c in t3)
    ok &= worst3 < ORACLE_TOL
    lines.append(f"Kronecker entropy (sum of rates): {trials} trials, max delta {worst3:.3e}")
    rng = np.random.default_rng(seed + 2)
    for label, P in (
        ("identity(3)", np.eye(3)),
        ("perfect secrecy(4)", np.full((4, 4), 0.25)),
        ("[[0.9,0.1],[0.1,0.9]]", np.array([[0.9, 0.1], [0.1, 0.9]])),
        ("random(5)", oracle.random_bistochastic(5, rng)),
    ):
        mc = oracle.mc_transition_check(P, 100_000 // P.shape[0], seed)
        ok &= mc.max_sigma < MC_SIGMA
        lines.append(f"transition frequencies {label}: worst deviation {mc.max_sigma:.3f} sigma")
    return lines, ok


def cmd_verify(args) -> int:
    if args.matrix:
        for path in args.matrix:
            try:
                text = Path(path).read_text(encoding="utf-8").split("\n", 1)[1]
                A = np.array([[float(x) for x in ln.split()] for ln in text.splitlines() if ln.strip()])
                v = validate(A, FILE_TOL)
            except (IndexError, ValueError, BistochasticError) as exc:
                print(f"{path}: unreadable matrix: {exc}")
                return EXIT_INVALID
            if not v.is_bistochastic:
                print(f"{path}: validation failure: {v.kind.value}, {v.reason}, magnitude {v.magnitude:.3g}")
                return EXIT_INVALID
            print(f"{path}: bistochastic")
    lines, ok = run_oracle_suite(args.seed, args.trials)
    print("\n".join(lines))
    print("oracle: PASS" if ok else "oracle: FAIL")
    return EXIT_OK if ok else EXIT_ORACLE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bistochastic", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("genmat", help="generate a bistochastic matrix file")
    g.add_argument("--type", required=True,
                   choices=["perfect_secrecy", "dp_circulant", "k_anon_blocks", "entropy_target", "identity", "custom"])
    g.add_argument("--n", type=int)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--partition", help="comma-separated block sizes")
    g.add_argument("--path", help="matrix file (custom)")
    g.add_argument("--out", help="output file (default: stdout)")
    g.set_defaults(func=cmd_genmat)

    pr = sub.add_parser("protect", help="anonymize one period (or all) of a release plan")
    pr.add_argument("--config", required=True)
    pr.add_argument("--period", type=int)
    pr.add_argument("--seed", type=int, help="override the plan's master seed")
    pr.add_argument("--out", help="output directory (default: plan output_dir)")
    pr.add_argument("--revise", action="store_true", help="replace an already recorded period")
    pr.set_defaults(func=cmd_protect)

    lg = sub.add_parser("ledger", help="report guarantees and verdicts for ledgers")
    lg.add_argument("--ledger")
    lg.add_argument("--config")
    lg.add_argument("--out", help="ledger directory when using --config")
    lg.add_argument("--seed", type=int, help="accepted for uniformity; unused")
    lg.add_argument("--targets", help="comma-separated per-period beta targets")
    lg.add_argument("--beta-l", type=float, dest="beta_l")
    lg.add_argument("--convention", choices=["t1", "t2"])
    lg.add_argument("--next-target", type=float, help="beta_L target for the next release")
    lg.add_argument("--n-next", type=int, default=2)
    lg.set_defaults(func=cmd_ledger)

    s = sub.add_parser("simulate-table1", help="cross-section vs trajectory percentages for an epsilon schedule")
    s.add_argument("--schedule", required=True, help="comma-separated epsilons, one per period")
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--cross-section", help="comma-separated cross-section percentages to average")
    s.add_argument("--config", help="unused")
    s.add_argument("--seed", type=int, help="unused")
    s.set_defaults(func=cmd_simulate_table1)

    v = sub.add_parser("verify", help="run the brute-force oracle suites")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--matrix", action="append", help="also validate this matrix file")
    v.add_argument("--config", help="unused")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (BistochasticError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
