import logging
import os.path as osp
from argparse import Namespace

import numpy as np
from colorama import Fore
from colorama import Style as CRStyle
from rich.console import Console
from rich.table import Table

from .. import FIXTURES_DIR, const
from ..costs import constant_speed_residual, evaluate_all
from ..dynamics import AdmissiblePair, eliminate_drift, propagate, propagate_real
from ..errors import InvalidControl, NoConvergence, QOCError
from ..optimizer import SolveOptions, SolveResult, classify_extremal, pmp_residual, solve_reduced
from ..resonance import classify_resonance, counterexample_pair, resonance_transform
from ..system import (
    BoundarySpec,
    LevelSystem,
    connected_components,
    control_count_report,
    is_controllable,
    is_transitive,
    lie_rank_oracle,
    validate_system,
)
from ..utility.data_utils import (
    cost_table,
    load_boundary,
    load_control,
    load_cost_file,
    load_request,
    load_system,
    parse_psi0,
    populations_frame,
    save_control,
    save_frame,
    save_json,
    save_trajectory,
)
from ..verification import VerifyContext, run_verify

logger = logging.getLogger(__name__)


def _status(passed: bool) -> str:
    return (Fore.GREEN + "PASS" if passed else Fore.RED + "FAIL") + CRStyle.RESET_ALL


class PipelineCLI:
    """Runs one subcommand, writes its files under --out and maps errors to exit codes."""

    def __init__(self, args: Namespace):
        self.args = args
        self.console = Console(quiet=args.quiet)

    def path(self, name: str) -> str:
        return osp.join(self.args.out, name)

    def launch(self) -> int:
        handler = getattr(self, "cmd_" + self.args.command.replace("-", "_"))
        try:
            handler()
        except QOCError as e:
            self.console.print(Fore.RED + f"Error: {e}" + CRStyle.RESET_ALL)
            logger.error(str(e))
            return e.exit_code
        return const.EXIT_OK

    def _load_pair(self, sys: LevelSystem, control_path: str, psi0_text: str) -> AdmissiblePair:
        control = load_control(control_path, sys.n)
        control.check_against(sys)
        psi0 = parse_psi0(psi0_text, sys.n, real=control.flavor == "U")
        trajectory = propagate(control, psi0, sys)
        trajectory.check_norm()
        return AdmissiblePair(trajectory, control, sys)

    def cmd_simulate(self):
        args = self.args
        sys = load_system(args.system)
        pair = self._load_pair(sys, args.control, args.psi0)
        traj = pair.trajectory
        save_trajectory(traj, self.path("trajectory.csv"))
        save_frame(populations_frame(traj), self.path("populations.csv"))
        summary = {
            "flavor": const.FLAVORS[pair.control.flavor],
            "T": pair.grid.T,
            "N": pair.grid.N,
            "norm_drift": traj.norm_drift(),
            "initial_populations": traj.populations()[0],
            "final_populations": traj.populations()[-1],
            "costs": evaluate_all(pair.control, sys),
        }
        save_json(summary, self.path("summary.json"))
        self.console.print(f"Simulated {pair.grid.N} steps on [0, {pair.grid.T:g}], "
                           f"norm drift {summary['norm_drift']:.2e}", style="bold green")

    def cmd_eliminate_drift(self):
        args = self.args
        sys = load_system(args.system)
        V = load_control(args.control, sys.n)
        if V.flavor != "V":
            raise InvalidControl(f"eliminate-drift expects a hermitian-V control, got {const.FLAVORS[V.flavor]}")
        H = eliminate_drift(sys, V, args.refine)
        save_control(H, self.path("control_H.json"))
        self.console.print(f"Wrote the skew-H control on {H.grid.N} steps", style="bold green")

    def cmd_resonate(self):
        args = self.args
        sys = load_system(args.system)
        pair = self._load_pair(sys, args.control, args.psi0)
        before_verdict = classify_resonance(pair, args.epsilon, args.tol)
        resonant = resonance_transform(pair, args.epsilon, args.tol)
        after_verdict = classify_resonance(resonant, args.epsilon, args.tol)

        save_control(resonant.control, self.path("control_resonant.json"))
        save_trajectory(resonant.trajectory, self.path("trajectory_resonant.csv"))
        table = cost_table(evaluate_all(pair.control, sys), evaluate_all(resonant.control, sys))
        save_frame(table, self.path("costs.csv"))
        save_json({"before": before_verdict.to_dict(), "after": after_verdict.to_dict()}, self.path("verdict.json"))

        rich_table = Table(title="Costs before and after the resonance transform")
        for column in ("kind", "before", "after"):
            rich_table.add_column(column)
        for row in table.itertuples(index=False):
            rich_table.add_row(row.kind, f"{row.before:.10g}", f"{row.after:.10g}")
        self.console.print(rich_table)
        self.console.print(f"Verdict: {before_verdict.status} -> {after_verdict.status}")

    def cmd_check(self):
        sys = load_system(self.args.system)
        report = validate_system(sys)
        out = {"validation": report.to_dict(), "n": sys.n, "isotropic": sys.is_isotropic(),
               "control_count": control_count_report(sys)}
        if report.ok:
            components = connected_components(sys)
            out["components"] = [sorted(j + 1 for j in c) for c in components]
            out["controllable"] = is_controllable(sys)
            if sys.n <= const.LIE_MAX_LEVELS:
                out["lie_rank"] = lie_rank_oracle(sys)
                out["transitive"] = is_transitive(sys)
        save_json(out, self.path("check.json"))
        self.console.print(f"validation {_status(report.ok)}")
        if report.ok:
            self.console.print(f"controllable {_status(out['controllable'])}")
        for line in report.violations:
            self.console.print(f"  {line}", style="red")

    def _write_solution(self, sys: LevelSystem, cost, source: BoundarySpec, target: BoundarySpec,
                        result: SolveResult):
        pair = result.pair
        save_control(pair.control, self.path("control.json"))
        save_trajectory(pair.trajectory, self.path("trajectory.csv"))
        cost.save_config(self.path("cost.json"))
        out = result.to_dict()
        if result.lift is not None:
            save_frame(result.lift.to_frame(pair.grid.nodes), self.path("lift.csv"))
            out["pmp_residual"] = pmp_residual(pair, result.lift, source, target).to_dict()
        out["classification"] = [r.to_dict() for r in classify_extremal(pair, cost, self.args.epsilon, sys)]
        out["resonance"] = classify_resonance(pair, self.args.epsilon, self.args.tol).to_dict()
        if cost.type_name == "energy":
            out["constant_speed_residual"] = constant_speed_residual(cost, pair.control, sys)
        out["costs"] = evaluate_all(pair.control, sys)
        save_json(out, self.path("solution.json"))
        return out

    def cmd_solve(self):
        args = self.args
        sys = load_system(args.system)
        cost = load_cost_file(args.cost)
        request = load_request(args.request)
        source = load_boundary(request.source)
        target = load_boundary(request.target)
        opts = SolveOptions.from_config(request, seed=args.seed, restarts=args.restarts, progress=not args.quiet)
        try:
            result = solve_reduced(sys, cost, source, target, opts)
        except NoConvergence as e:
            if e.best is not None:
                self._write_solution(sys, cost, source, target, e.best)
                self.console.print("Wrote the best iterate", style="yellow")
            raise
        out = self._write_solution(sys, cost, source, target, result)
        self.console.print(f"{cost.type_name} = {result.cost_value:.12g} "
                           f"(violation {result.violation:.2e}, restart {result.restart})", style="bold green")
        if result.minimal_time is not None:
            self.console.print(f"minimal time = {result.minimal_time:.10g}")
        if "pmp_residual" in out:
            self.console.print(f"PMP residuals {_status(out['pmp_residual']['passed'])}")

    def cmd_classify(self):
        args = self.args
        sys = load_system(args.system)
        control = load_control(args.control, sys.n).as_real()
        control.check_against(sys)
        rho0 = parse_psi0(args.psi0, sys.n, real=True)
        pair = AdmissiblePair(propagate_real(control, rho0), control, sys)
        cost = load_cost_file(args.cost)
        reports = classify_extremal(pair, cost, args.epsilon, sys)
        save_json({"epsilon": args.epsilon, "windows": [r.to_dict() for r in reports]},
                  self.path("classification.json"))
        table = Table(title="Clean windows")
        for column in ("window", "classes", "rank", "verdict"):
            table.add_column(column)
        for r in reports:
            t1, t2 = r.partition.times
            classes = " ".join("{" + ",".join(str(j + 1) for j in c) + "}" for c in r.partition.classes)
            table.add_row(f"[{t1:.6g}, {t2:.6g}]", classes, f"{r.rank}/{r.dimension}", r.verdict)
        self.console.print(table)

    def cmd_demo_counterexample(self):
        pair_a, pair_b = counterexample_pair()
        out = {}
        for name, pair in (("A", pair_a), ("B", pair_b)):
            save_control(pair.control, self.path(f"pair_{name}_control.json"))
            save_trajectory(pair.trajectory, self.path(f"pair_{name}_trajectory.csv"))
            t = pair.grid.nodes
            expected = np.column_stack([np.cos(t), np.sin(t), np.zeros_like(t), np.zeros_like(t)])
            out[f"pair_{name}"] = {
                "path_deviation": float(np.max(np.abs(pair.trajectory.states - expected))),
                "verdict": classify_resonance(pair, self.args.epsilon, self.args.tol).to_dict(),
                "costs": evaluate_all(pair.control, pair.system),
            }
        save_json(out, self.path("counterexample.json"))
        for name in ("A", "B"):
            self.console.print(f"pair {name}: {out[f'pair_{name}']['verdict']['status']}")

    def cmd_verify(self):
        args = self.args
        ctx = VerifyContext(fixtures=args.fixtures or FIXTURES_DIR, seed=args.seed, scale=args.scale,
                            progress=not args.quiet)
        results = run_verify(args.filter, ctx)
        save_json({"passed": all(r.passed for r in results), "criteria": [r.to_dict() for r in results]},
                  self.path("verify.json"))
        table = Table(title="Verify")
        for column in ("criterion", "group", "result", "seconds"):
            table.add_column(column)
        for r in results:
            table.add_row(r.id, r.group, "[green]pass[/]" if r.passed else "[red]fail[/]", f"{r.seconds:.1f}")
        self.console.print(table)


def run_pipeline(args: Namespace) -> int:
    return PipelineCLI(args).launch()
