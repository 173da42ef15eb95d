"""Command-line interface.

Subcommands: ``gen`` (seeded instance files), ``pims solve`` (exact-measurement
selection), ``pems solve`` (budgeted random-measurement selection), ``oracle``
(brute-force solvers and audits), and ``sweep`` (the replicated budget-sweep
experiment, with figures rendered next to the CSV). All outputs are CSV with a
``# schema-version: 1`` header. Exit codes: 0 success, 2 validation error,
3 brute-force guard refusal.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiments, oracle, pems, pims
from .bayes import build_grid, compute_Fp, compute_H_atoms
from .dynamics import Theta
from .errors import InfeasibleError, SearchSpaceError, ValidationError
from .network import load_instance
from .pems import Selection

SCHEMA_LINE = "# schema-version: 1"


def _default_grid_points() -> int:
    return int(os.environ.get("EPISELECT_GRID_POINTS", "33"))


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _selection_str(mu: Selection) -> str:
    return "|".join(
        f"{m.kind}:{m.node}:{m.time}={c}" for m, c in mu.sorted_items()
    )


def _strategy_str(strategy: pims.ExactStrategy) -> str:
    ids = sorted(strategy.selected, key=lambda m: m.sort_key())
    return "|".join(f"{m.kind}:{m.node}:{m.time}" for m in ids)


def _parse_budgets(text: str) -> tuple[float, ...]:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ValidationError(f"bad budget sweep {text!r}, expected lo:hi:step") from exc
    if step <= 0 or hi < lo:
        raise ValidationError(f"bad budget sweep {text!r}")
    budgets = []
    b = lo
    while b <= hi + 1e-9:
        budgets.append(round(b, 12))
        b += step
    return tuple(budgets)


def _cmd_gen(args) -> int:
    instance = experiments.generate_instance(args.seed, args.template)
    meta = experiments.generation_metadata(args.seed, args.template)
    pems.save_pems_instance(args.out, instance, extra=meta)
    print(f"wrote {args.out}")
    if args.pims_costs:
        t1, t2 = (int(v) for v in args.pims_window.split(":"))
        cost_x, cost_r = experiments.generate_pims_costs(args.seed, instance.network.n, t1, t2)
        payload = pims.costs_payload(t1, t2, cost_x, cost_r)
        payload["rng"] = meta["rng"]
        Path(args.pims_costs).write_text(json.dumps(payload, indent=1) + "\n")
        print(f"wrote {args.pims_costs}")
    return 0


def _cmd_pims_solve(args) -> int:
    network, init, _ = load_instance(args.instance)
    t1, t2, cost_x, cost_r = pims.load_costs(args.costs)
    instance = pims.make_instance(network, init, t1, t2, cost_x, cost_r)
    strategy = pims.algorithm1(instance)
    lines = [SCHEMA_LINE, "kind,node,time,cost"]
    for m in sorted(strategy.selected, key=lambda m: m.sort_key()):
        lines.append(f"{m.kind},{m.node},{m.time},{instance.cost_of(m)!r}")
    lines.append(f"# cost: {pims.strategy_cost(instance, strategy.selected)!r}")
    lines.append(f"# bound_numerator: {pims.proposition_numerator(instance)!r}")
    eq1, eq2 = strategy.chosen_pair
    lines.append(f"# pair: x@(k={eq1.time},i={eq1.node}) r@(k={eq2.time},i={eq2.node})")
    if args.theta_true:
        try:
            beta, delta = (float(v) for v in args.theta_true.split(","))
        except ValueError as exc:
            raise ValidationError(f"bad --theta-true {args.theta_true!r}, expected b,d") from exc
        result = pims.identify_theta(instance, strategy, Theta(beta, delta))
        lines.append(f"# rank: {result.rank}")
        if result.ok:
            lines.append(f"# beta_hat: {result.theta.beta!r}")
            lines.append(f"# delta_hat: {result.theta.delta!r}")
        else:
            lines.append("# identification: failed")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _pems_context(args):
    instance = pems.load_pems_instance(args.instance)
    grid = build_grid(instance.prior_beta, instance.prior_delta, args.grid_points)
    Fp = compute_Fp(instance.prior_beta, instance.prior_delta, grid)
    atoms = compute_H_atoms(instance, grid)
    return instance, grid, Fp, atoms


def _cmd_pems_solve(args) -> int:
    instance, _, Fp, atoms = _pems_context(args)
    if args.budget_sweep:
        budgets = _parse_budgets(args.budget_sweep)
    elif args.budget is not None:
        budgets = (args.budget,)
    else:
        budgets = (instance.budget,)
    lines = [SCHEMA_LINE]
    if args.seed is not None:
        lines.append(f"# seed: {args.seed}")
    lines.append("B,greedy_value,opt_value,gamma1_lb,gamma2_hat,guarantee_fraction")
    for B in budgets:
        trace, _ = pems.greedy(instance, atoms, Fp, args.objective, budget=B)
        try:
            opt = repr(oracle.brute_force_pems(instance, atoms, Fp, args.objective, budget=B).value)
        except SearchSpaceError:
            opt = ""
        g1 = g2 = frac = ""
        if args.bounds:
            if args.objective == pems.OBJECTIVE_A:
                g1v = pems.gamma1_lower_bound(Fp, atoms, trace).value
                g2v = pems.gamma2_hat(Fp, atoms, trace)
                g1, g2 = repr(g1v), repr(g2v)
                frac = repr(pems.guarantee("a", g1v, g2v, B, 1.0, 1.0, 0.0)[0])
            else:
                frac = repr(pems.guarantee("d", 0.0, 0.0, B, 1.0, 1.0, 0.0)[0])
        lines.append(f"{B!r},{trace.final_value()!r},{opt},{g1},{g2},{frac}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _oracle_csv(report: oracle.OracleReport, optimizer: str) -> str:
    return "\n".join(
        [
            SCHEMA_LINE,
            "value,optimizer,space_size,seconds",
            f'{report.value!r},"{optimizer}",{report.space_size},{report.seconds!r}',
        ]
    ) + "\n"


def _cmd_oracle(args) -> int:
    if args.problem == "pims":
        network, init, _ = load_instance(args.instance)
        t1, t2, cost_x, cost_r = pims.load_costs(args.costs)
        instance = pims.make_instance(network, init, t1, t2, cost_x, cost_r)
        report = oracle.brute_force_pims_pairs(instance)
        _emit(_oracle_csv(report, _strategy_str(report.optimizer)), args.out)
        return 0

    instance, grid, Fp, atoms = _pems_context(args)
    budget = instance.budget if args.budget is None else args.budget
    if args.problem == "pems":
        report = oracle.brute_force_pems(instance, atoms, Fp, args.objective, budget=budget)
        _emit(_oracle_csv(report, _selection_str(report.optimizer)), args.out)
        return 0
    trace, _ = pems.greedy(instance, atoms, Fp, args.objective, budget=budget)
    if args.problem == "gamma1":
        import time

        start = time.perf_counter()
        value = oracle.exhaustive_gamma1(
            lambda Y: pems.objective(instance, atoms, Fp, Y, args.objective), trace
        )
        size = 1 << sum(g.cap for g in trace.groups)
        report = oracle.OracleReport(value, None, size, size, time.perf_counter() - start)
        _emit(_oracle_csv(report, ""), args.out)
        return 0
    if args.problem == "audit":
        import time

        start = time.perf_counter()
        ground = [
            pems.GroundElement(g.measurement, copy, g.cost)
            for g in trace.groups
            for copy in range(1, g.cap + 1)
        ]
        ok, counterexample = oracle.submodularity_audit(
            lambda Y: pems.objective(instance, atoms, Fp, Y, args.objective),
            ground,
            tol=args.tol,
        )
        size = 1 << len(ground)
        desc = ""
        if not ok:
            A, B, y = counterexample
            desc = (
                "A=" + ";".join(e.measurement.label() for e in A)
                + " B=" + ";".join(e.measurement.label() for e in B)
                + " y=" + y.measurement.label()
            )
        report = oracle.OracleReport(float(ok), None, size, size, time.perf_counter() - start)
        _emit(_oracle_csv(report, desc), args.out)
        return 0
    raise ValidationError(f"unknown oracle problem {args.problem!r}")


def _cmd_sweep(args) -> int:
    budgets = _parse_budgets(args.budgets) if args.budgets else None
    spec = experiments.ExperimentSpec(
        template=args.template,
        instance_path=args.instance,
        mode=args.mode,
        objective=args.objective,
        budgets=budgets,
        replications=args.replications,
        seed=args.seed,
        grid_points=args.grid_points,
        workers=args.workers,
    )
    written = experiments.sweep_and_write(spec, args.out, plot=args.plot)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="episelect",
        description="Measurement selection for networked SIR rate identification and estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a seeded instance file")
    p_gen.add_argument("--template", choices=experiments.TEMPLATES, default="paper_small")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--pims-costs", default=None, help="also write an exact-measurement cost file")
    p_gen.add_argument("--pims-window", default="3:5", help="t1:t2 window for --pims-costs")
    p_gen.set_defaults(func=_cmd_gen)

    p_pims = sub.add_parser("pims", help="exact-measurement selection")
    pims_sub = p_pims.add_subparsers(dest="subcommand", required=True)
    p_pims_solve = pims_sub.add_parser("solve")
    p_pims_solve.add_argument("--instance", required=True)
    p_pims_solve.add_argument("--costs", required=True)
    p_pims_solve.add_argument("--theta-true", default=None, help="comma-separated true rates b,d")
    p_pims_solve.add_argument("--out", default=None)
    p_pims_solve.set_defaults(func=_cmd_pims_solve)

    p_pems = sub.add_parser("pems", help="budgeted random-measurement selection")
    pems_sub = p_pems.add_subparsers(dest="subcommand", required=True)
    p_pems_solve = pems_sub.add_parser("solve")
    p_pems_solve.add_argument("--instance", required=True)
    p_pems_solve.add_argument("--objective", choices=("a", "d"), required=True)
    p_pems_solve.add_argument("--budget", type=float, default=None)
    p_pems_solve.add_argument("--budget-sweep", default=None, help="lo:hi:step")
    p_pems_solve.add_argument("--bounds", action="store_true", help="compute ratio bounds and the guarantee")
    p_pems_solve.add_argument("--seed", type=int, default=None)
    p_pems_solve.add_argument("--grid-points", type=int, default=_default_grid_points())
    p_pems_solve.add_argument("--out", default=None)
    p_pems_solve.set_defaults(func=_cmd_pems_solve)

    p_oracle = sub.add_parser("oracle", help="brute-force solvers and audits")
    p_oracle.add_argument("problem", choices=("pems", "pims", "gamma1", "audit"))
    p_oracle.add_argument("--instance", required=True)
    p_oracle.add_argument("--costs", default=None, help="cost file (pims only)")
    p_oracle.add_argument("--objective", choices=("a", "d"), default="a")
    p_oracle.add_argument("--budget", type=float, default=None)
    p_oracle.add_argument("--grid-points", type=int, default=_default_grid_points())
    p_oracle.add_argument("--tol", type=float, default=1e-9)
    p_oracle.add_argument("--out", default=None)
    p_oracle.set_defaults(func=_cmd_oracle)

    p_sweep = sub.add_parser("sweep", help="replicated budget-sweep experiment")
    p_sweep.add_argument("--template", choices=experiments.TEMPLATES, default="paper_small")
    p_sweep.add_argument("--instance", default=None)
    p_sweep.add_argument("--mode", choices=("pems", "pims"), default="pems")
    p_sweep.add_argument("--objective", choices=("a", "d"), default="d")
    p_sweep.add_argument("--budgets", default=None, help="lo:hi:step (default: instance-derived)")
    p_sweep.add_argument("--replications", type=int, default=1)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--grid-points", type=int, default=_default_grid_points())
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    p_sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SearchSpaceError as exc:
        print(f"guard refused: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
