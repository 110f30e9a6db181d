"""Command-line harness: single episodes, convergence sweeps, CSV output.

Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import statistics
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from . import scenarios
from .planner import EpisodeLog, run_episode
from .scenarios import ConfigError, ScenarioConfig
from .search import DecoupledSearch, plan_return
from .world import lane_index

TRAJECTORY_HEADER = [
    "epoch",
    "time_s",
    "agent",
    "x_m",
    "y_m",
    "v_mps",
    "lane",
    "primitive",
    "macro",
]
CONVERGENCE_HEADER = [
    "scenario",
    "algorithm",
    "iterations",
    "depth",
    "seed",
    "return_undiscounted",
]

ALGORITHMS = ("flat", "hierarchical", "hierarchical+dk")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def write_trajectory_csv(log: EpisodeLog, path: Path, dense: bool = False):
    lane_width = log.config.road.lane_width
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for rec in log.epochs:
            for veh in rec.world.vehicles:
                i = veh.id
                w.writerow(
                    [
                        rec.epoch,
                        _fmt(rec.world.time),
                        i,
                        _fmt(veh.x),
                        _fmt(veh.y),
                        _fmt(veh.v),
                        veh.lane,
                        rec.actions[i].symbol,
                        rec.macros[i] or "",
                    ]
                )
            if dense:
                for seg in rec.segments:
                    for t, x, y, v in seg.poses[1:-1]:
                        w.writerow(
                            [
                                rec.epoch,
                                _fmt(t),
                                seg.agent,
                                _fmt(x),
                                _fmt(y),
                                _fmt(v),
                                lane_index(y, lane_width),
                                rec.actions[seg.agent].symbol,
                                rec.macros[seg.agent] or "",
                            ]
                        )
        final = log.final_world
        for veh in final.vehicles:
            w.writerow(
                [
                    final.epoch,
                    _fmt(final.time),
                    veh.id,
                    _fmt(veh.x),
                    _fmt(veh.y),
                    _fmt(veh.v),
                    veh.lane,
                    "",
                    "",
                ]
            )


def write_plans_txt(log: EpisodeLog, path: Path):
    with path.open("w") as fh:
        for rec in log.epochs:
            for agent in sorted(rec.plans):
                macro = rec.macros[agent] or "-"
                fh.write(f"epoch {rec.epoch} agent {agent} [{macro}] {rec.plans[agent]}\n")
        fh.write(f"terminal: {log.terminal_cause}\n")


def _load_config(args) -> ScenarioConfig:
    if args.config:
        config = scenarios.parse(Path(args.config).read_text())
    elif args.scenario:
        config = scenarios.builtin(args.scenario, red_speed=args.red_speed)
    else:
        raise UsageError("one of --scenario or --config is required")
    if args.config and args.red_speed is not None:
        vehicles = tuple(
            replace(
                v,
                v0=(-1 if v.v0 < 0 else 1) * args.red_speed,
                v_des=(-1 if v.v_des < 0 else 1) * args.red_speed,
            )
            if v.controller == "constant"
            else v
            for v in config.vehicles
        )
        config = replace(config, vehicles=vehicles)
    overrides = {}
    for name, key in (
        ("iterations", "iterations"),
        ("depth", "max_depth"),
        ("epsilon", "epsilon"),
        ("mode", "mode"),
    ):
        val = getattr(args, name)
        if val is not None:
            overrides[key] = val
    if args.flat:
        overrides["flat"] = True
    if args.domain_knowledge:
        overrides["domain_knowledge"] = True
    if overrides:
        config = scenarios.with_overrides(config, **overrides)
    if getattr(args, "cooperation", None) is not None:
        lam = args.cooperation
        config = replace(
            config,
            vehicles=tuple(replace(v, cooperation=lam) for v in config.vehicles),
        )
    if getattr(args, "max_epochs", None) is not None:
        config = replace(config, max_epochs=args.max_epochs)
    return scenarios.validate(config)


def cmd_run(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = run_episode(config, seed=args.seed)
    write_trajectory_csv(log, out / "trajectory.csv", dense=args.dense)
    write_plans_txt(log, out / "plans.txt")
    for rec in log.epochs:
        for agent in sorted(rec.plans):
            macro = rec.macros[agent] or "-"
            print(f"epoch {rec.epoch} agent {agent} [{macro}] {rec.plans[agent]}")
    print(f"terminal: {log.terminal_cause} after {len(log.epochs)} epochs")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    scenario: str = "double_merge"
    algorithms: tuple[str, ...] = ALGORITHMS
    iteration_grid: tuple[int, ...] = (10, 32, 100, 316, 1000, 2000)
    depth_grid: tuple[int, ...] = (5, 10, 20)
    runs: int = 30
    base_seed: int = 0

    def __post_init__(self):
        if not self.iteration_grid or not self.depth_grid:
            raise ValueError("grids must be non-empty")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {alg!r}")


def _cell_seed(spec: SweepSpec, alg: str, iters: int, depth: int, run: int) -> int:
    return (
        spec.base_seed * 7_919
        + ALGORITHMS.index(alg) * 1_000_003
        + iters * 101
        + depth * 13_007
        + run
    ) & 0x7FFFFFFF


def sweep_cell(
    spec: SweepSpec, alg: str, iters: int, depth: int, run: int
) -> float:
    """Undiscounted cumulated cooperative reward of vehicle 0's principal
    plan at the first planning step."""
    config = scenarios.builtin(spec.scenario)
    config = scenarios.with_overrides(
        config,
        iterations=iters,
        max_depth=depth,
        flat=(alg == "flat"),
        domain_knowledge=(alg == "hierarchical+dk"),
        seed=_cell_seed(spec, alg, iters, depth, run),
    )
    wparams = config.world_params()
    desires = config.desires()
    modeled = tuple(v.controller == "mcts" for v in config.vehicles)
    search = DecoupledSearch(
        config.initial_world(),
        desires,
        modeled,
        wparams,
        config.search,
        ego=0,
        weights=config.weights,
        macro_params=config.macro_params,
    )
    search.run()
    joints = search.principal_joints()
    return plan_return(
        config.initial_world(), joints, desires, wparams, config.weights, ego=0
    )


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[list]:
    """Data rows plus aggregate rows (mean and quartiles per cell)."""
    cells = [
        (alg, iters, depth, run)
        for alg in spec.algorithms
        for iters in spec.iteration_grid
        for depth in spec.depth_grid
        for run in range(spec.runs)
    ]
    if jobs > 1:
        import multiprocessing as mp

        with mp.Pool(jobs) as pool:
            values = pool.starmap(
                sweep_cell, [(spec, *cell) for cell in cells], chunksize=1
            )
    else:
        values = [sweep_cell(spec, *cell) for cell in cells]
    rows = []
    by_cell: dict[tuple, list[float]] = {}
    for (alg, iters, depth, run), val in zip(cells, values):
        rows.append([spec.scenario, alg, iters, depth, run, _fmt(val)])
        by_cell.setdefault((alg, iters, depth), []).append(val)
    for (alg, iters, depth), vals in by_cell.items():
        mean = statistics.fmean(vals)
        if len(vals) >= 2:
            q25, _q50, q75 = statistics.quantiles(vals, n=4, method="inclusive")
        else:
            q25 = q75 = vals[0]
        rows.append([spec.scenario, alg, iters, depth, "mean", _fmt(mean)])
        rows.append([spec.scenario, alg, iters, depth, "q25", _fmt(q25)])
        rows.append([spec.scenario, alg, iters, depth, "q75", _fmt(q75)])
    return rows


def write_convergence_csv(rows: list[list], path: Path):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CONVERGENCE_HEADER)
        w.writerows(rows)


def cmd_sweep(args) -> int:
    spec = SweepSpec(
        scenario=args.scenario or "double_merge",
        algorithms=tuple(args.algorithms.split(",")),
        iteration_grid=tuple(int(x) for x in args.iteration_grid.split(",")),
        depth_grid=tuple(int(x) for x in args.depth_grid.split(",")),
        runs=args.runs,
        base_seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_sweep(spec, jobs=args.jobs)
    write_convergence_csv(rows, out / "convergence.csv")
    print(f"wrote {len(rows)} rows to {out / 'convergence.csv'}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="coopdrive", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one episode")
    run_p.add_argument("--scenario", choices=scenarios.BUILTIN_NAMES)
    run_p.add_argument("--config", help="JSON scenario config file")
    run_p.add_argument("--iterations", type=int)
    run_p.add_argument("--depth", type=int)
    run_p.add_argument("--lambda", dest="cooperation", type=float)
    run_p.add_argument("--epsilon", type=float)
    run_p.add_argument("--mode", choices=("polling", "hierarchical"))
    run_p.add_argument("--flat", action="store_true")
    run_p.add_argument("--domain-knowledge", action="store_true")
    run_p.add_argument("--red-speed", type=float)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--max-epochs", type=int)
    run_p.add_argument("--out", default="out")
    run_p.add_argument("--dense", action="store_true")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="convergence sweep")
    sweep_p.add_argument("--scenario", choices=scenarios.BUILTIN_NAMES)
    sweep_p.add_argument("--algorithms", default=",".join(ALGORITHMS))
    sweep_p.add_argument("--iteration-grid", default="10,32,100,316,1000,2000")
    sweep_p.add_argument("--depth-grid", default="5,10,20")
    sweep_p.add_argument("--runs", type=int, default=30)
    sweep_p.add_argument("--seed", type=int, default=0)
    sweep_p.add_argument("--jobs", type=int, default=1)
    sweep_p.add_argument("--out", default="out")
    sweep_p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
