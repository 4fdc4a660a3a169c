"""Command-line interface: evaluate / design / simulate.

Exit codes are fixed for scripting:

* 0 success
* 2 topology disconnected
* 3 assumption or schema violation (bad file, non-uniform damping,
  missing degree-one reference, invalid problem)
* 4 no feasible topology within budget
* 5 numerical failure (integration divergence, LP breakdown)

Costs are printed with nine decimal places; trajectory CSV values carry nine
significant digits.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib.metadata import version as _pkg_version

import numpy as np

from . import dynamics, formulation, netgraph, solver
from .formulation import AUGMENT, RADIAL, AssumptionError, InfeasibleBoundsError
from .network import InvalidNetworkError, PowerNetwork, load_network

EXIT_OK = 0
EXIT_DISCONNECTED = 2
EXIT_ASSUMPTION = 3
EXIT_INFEASIBLE = 4
EXIT_NUMERIC = 5


def _tool_version() -> str:
    try:
        return f"gridtopo {_pkg_version('gridtopo')}"
    except Exception:
        return "gridtopo (uninstalled)"


def _fmt(x: float) -> str:
    return f"{x:.9f}"


def _load(path: str) -> PowerNetwork:
    return load_network(path)


def _spec_for(net: PowerNetwork, metric_flag: str | None) -> dynamics.CoherenceSpec:
    if metric_flag:
        return dynamics.preset_spec(metric_flag, net)
    return dynamics.spec_from_metric(net.metric, net)


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def cmd_evaluate(args: argparse.Namespace) -> int:
    net = _load(args.network)
    spec = _spec_for(net, args.metric)
    params = dynamics.MachineParams.from_network(net)
    existing = net.existing_lines
    if not netgraph.is_connected(existing, net.n_buses):
        print("error: existing topology is disconnected", file=sys.stderr)
        return EXIT_DISCONNECTED
    lap = netgraph.build_laplacian(existing, net.n_buses, net.reference)
    closed = dynamics.h2_squared_closed_form(spec, lap, params)
    print(f"topology term: {_fmt(closed.topology_term)}")
    print(f"h2 squared: {_fmt(closed.cost)}")
    if args.check_gramian:
        ss = dynamics.assemble_state_space(lap, params, spec)
        gram_value = dynamics.h2_squared_gramian(ss)
        rel = abs(gram_value - closed.cost) / max(1.0, abs(closed.cost))
        print(f"gramian h2 squared: {_fmt(gram_value)} (relative difference {rel:.3g})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# design
# ---------------------------------------------------------------------------


def _build_problem(net: PowerNetwork, args: argparse.Namespace) -> formulation.DesignProblem:
    spec = _spec_for(net, args.metric)
    params = dynamics.MachineParams.from_network(net)
    n = net.n_buses
    if args.mode == AUGMENT:
        if args.budget is None:
            raise AssumptionError("augment mode requires --budget (lines to add)")
        total = len(net.existing_lines) + args.budget
    else:
        total = n - 1 if args.budget is None else args.budget
    try:
        return formulation.DesignProblem(
            n_buses=n,
            reference=net.reference,
            lines=net.lines,
            budget=total,
            mode=args.mode,
            spec=spec,
            params=params,
        )
    except ValueError as exc:
        raise AssumptionError(str(exc)) from exc


def cmd_design(args: argparse.Namespace) -> int:
    net = _load(args.network)
    problem = _build_problem(net, args)

    tighten = None
    if args.bounds == "loose":
        bounds = formulation.loose_bounds(problem)
    elif problem.mode == AUGMENT:
        bounds = formulation.bounds_augment(problem)
    else:
        bounds = formulation.bounds_radial(problem)
    if args.tighten == "on" and args.bounds == "auto" and problem.mode == RADIAL:
        report = netgraph.enumerate_critical_edges(problem.graph)
        tighten = formulation.tighten_bounds(problem, bounds, report)
        bounds = tighten.bounds

    model = formulation.build_milp(problem, bounds, tighten)
    if args.export_model:
        with open(args.export_model, "w") as fh:
            fh.write(formulation.export_lp_format(model))
        print(f"model exported to {args.export_model}")

    if args.solver == "brute":
        sol = solver.brute_force_design(problem)
    else:
        sol = solver.branch_and_bound(model, problem)

    print(f"selected edges: {list(sol.selected_edges)}")
    print(f"objective (topology term): {_fmt(sol.objective)}")
    if sol.h2_squared is not None:
        print(f"h2 squared: {_fmt(sol.h2_squared)}")
    st = sol.stats
    print(
        f"nodes explored: {st.nodes_explored}, lp solves: {st.lp_solves}, "
        f"gap: {st.final_gap:.3g}, proved optimal: {st.proved_optimal}"
    )

    if args.out:
        doc = {
            "schema": 1,
            "tool": _tool_version(),
            "problem": {
                "network": args.network,
                "mode": problem.mode,
                "budget_total": problem.budget,
                "reference": problem.reference,
                "metric": args.metric or net.metric or {"preset": "coherence"},
                "n_buses": problem.n_buses,
            },
            "bounds": {
                "kind": bounds.kind,
                "tightened": tighten is not None,
                "fixed_lines": list(model.fixed_edges),
                "pair_constraints": [list(p) for p in model.pair_constraints],
                "lower": bounds.lower.tolist(),
                "upper": bounds.upper.tolist(),
            },
            "solution": {
                "edges": [list(e) for e in sol.selected_edges],
                "z": list(sol.z),
                "objective": sol.objective,
                "h2_squared": sol.h2_squared,
            },
            "stats": st.as_dict(),
        }
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        print(f"result written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    net = _load(args.network)
    spec = _spec_for(net, args.metric)
    params = dynamics.MachineParams.from_network(net)
    existing = net.existing_lines
    if not netgraph.is_connected(existing, net.n_buses):
        print("error: existing topology is disconnected", file=sys.stderr)
        return EXIT_DISCONNECTED
    lap = netgraph.build_laplacian(existing, net.n_buses, net.reference)
    ss = dynamics.assemble_state_space(lap, params, spec)
    traj = dynamics.simulate_impulse(ss, args.impulse_bus, horizon=args.horizon, dt=args.dt)
    print(f"output energy: {_fmt(traj.total_energy)}")
    if traj.tail_energy_fraction >= 1e-3:
        print(
            f"warning: last 10% of the horizon contributes "
            f"{traj.tail_energy_fraction:.2%} of the energy; extend --horizon",
            file=sys.stderr,
        )
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(traj.to_csv())
        print(f"trajectory written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridtopo",
        description="H2-coherence evaluation and topology design for power grids",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="solver progress log")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="coherence metric of the energized topology")
    p_eval.add_argument("network")
    p_eval.add_argument("--metric", choices=dynamics.PRESETS)
    p_eval.add_argument("--check-gramian", action="store_true")
    p_eval.set_defaults(func=cmd_evaluate)

    p_design = sub.add_parser("design", help="optimal line selection within a budget")
    p_design.add_argument("network")
    p_design.add_argument("--mode", choices=(AUGMENT, RADIAL), required=True)
    p_design.add_argument(
        "--budget",
        type=int,
        help="augment: lines to add; radial: total lines (defaults to spanning size)",
    )
    p_design.add_argument("--metric", choices=dynamics.PRESETS)
    p_design.add_argument("--bounds", choices=("auto", "loose"), default="auto")
    p_design.add_argument("--tighten", choices=("on", "off"), default="on")
    p_design.add_argument("--solver", choices=("bnb", "brute"), default="bnb")
    p_design.add_argument("--out", help="result JSON path")
    p_design.add_argument("--export-model", help="write the model in LP text format")
    p_design.set_defaults(func=cmd_design)

    p_sim = sub.add_parser("simulate", help="impulse response of the energized topology")
    p_sim.add_argument("network")
    p_sim.add_argument("--impulse-bus", type=int, required=True)
    p_sim.add_argument("--horizon", type=float, default=400.0)
    p_sim.add_argument("--dt", type=float, default=0.01)
    p_sim.add_argument("--metric", choices=dynamics.PRESETS)
    p_sim.add_argument("--out", help="trajectory CSV path")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidNetworkError, AssumptionError, dynamics.NonUniformDampingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (netgraph.GraphError, solver.DisconnectedTopologyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DISCONNECTED
    except (solver.InfeasibleDesignError, InfeasibleBoundsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (dynamics.NumericalInstabilityError, solver.SolverNumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION


if __name__ == "__main__":
    sys.exit(main())
