"""Render trajectory maps and convergence curves from coopdrive CSVs.

The functions consume only the documented CSV schemas (the planner's external
interface); they never import the planner itself.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

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

DEFAULT_LANE_WIDTH = 3.5


class SchemaError(ValueError):
    """The CSV does not match the documented schema."""


def _read_rows(path: Path, header: list[str]) -> list[dict]:
    if not path.exists():
        raise SchemaError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {header}")
        if got != header:
            raise SchemaError(f"{path}: header {got} does not match schema {header}")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields")
            rows.append(dict(zip(header, raw)))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _to_float(row: dict, key: str, path: Path) -> float:
    try:
        return float(row[key])
    except ValueError:
        raise SchemaError(f"{path}: non-numeric {key} value {row[key]!r}")


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryData:
    agents: dict[int, list[tuple[float, float, float]]]  # id -> (t, x, y)
    lanes: set[int]
    lane_width: float


def read_trajectories(path: Path) -> TrajectoryData:
    rows = _read_rows(path, TRAJECTORY_HEADER)
    agents: dict[int, list[tuple[float, float, float]]] = {}
    lanes: set[int] = set()
    widths = []
    for row in rows:
        try:
            agent = int(row["agent"])
            lane = int(row["lane"])
        except ValueError:
            raise SchemaError(f"{path}: non-integer agent/lane in {row}")
        t = _to_float(row, "time_s", path)
        x = _to_float(row, "x_m", path)
        y = _to_float(row, "y_m", path)
        agents.setdefault(agent, []).append((t, x, y))
        lanes.add(lane)
        if lane > 0 and y > 0:
            widths.append(y / lane)
    for pts in agents.values():
        pts.sort()
    lane_width = (
        sorted(widths)[len(widths) // 2] if widths else DEFAULT_LANE_WIDTH
    )
    return TrajectoryData(agents, lanes, lane_width)


def plot_trajectories(csv_path: str | Path, out_path: str | Path) -> int:
    """One x-y path per agent, color-mapped by time, lane boundaries drawn.
    Returns the number of agent paths rendered."""
    data = read_trajectories(Path(csv_path))
    fig, ax = plt.subplots(figsize=(10, 3.2))
    t_all = [t for pts in data.agents.values() for t, _x, _y in pts]
    t_min, t_max = min(t_all), max(t_all)
    norm = plt.Normalize(t_min, t_max if t_max > t_min else t_min + 1.0)
    cmap = plt.get_cmap("viridis")
    for agent, pts in sorted(data.agents.items()):
        xs = [x for _t, x, _y in pts]
        ys = [y for _t, _x, y in pts]
        ts = [t for t, _x, _y in pts]
        ax.plot(xs, ys, color="0.8", linewidth=0.8, zorder=1)
        ax.scatter(xs, ys, c=ts, cmap=cmap, norm=norm, s=18, zorder=2, label=f"agent {agent}")
        ax.annotate(f"{agent}", (xs[0], ys[0]), fontsize=8, xytext=(2, 4), textcoords="offset points")
    lw = data.lane_width
    lo, hi = min(data.lanes), max(data.lanes)
    for edge in range(lo, hi + 2):
        ax.axhline((edge - 0.5) * lw, color="k", linewidth=0.6, linestyle="--", zorder=0)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_ylim((lo - 0.7) * lw, (hi + 0.7) * lw)
    fig.colorbar(plt.cm.ScalarMappable(norm=norm, cmap=cmap), ax=ax, label="time [s]")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return len(data.agents)


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceData:
    # (algorithm, depth) -> iterations -> {"mean": m, "q25": a, "q75": b}
    cells: dict[tuple[str, int], dict[int, dict[str, float]]]


def read_convergence(path: Path) -> ConvergenceData:
    rows = _read_rows(path, CONVERGENCE_HEADER)
    samples: dict[tuple[str, int, int], list[float]] = {}
    stats: dict[tuple[str, int, int], dict[str, float]] = {}
    for row in rows:
        try:
            iters = int(row["iterations"])
            depth = int(row["depth"])
        except ValueError:
            raise SchemaError(f"{path}: non-integer iterations/depth in {row}")
        value = _to_float(row, "return_undiscounted", path)
        key = (row["algorithm"], depth, iters)
        seed = row["seed"]
        if seed in ("mean", "q25", "q75"):
            stats.setdefault(key, {})[seed] = value
        else:
            samples.setdefault(key, []).append(value)
    cells: dict[tuple[str, int], dict[int, dict[str, float]]] = {}
    keys = set(samples) | set(stats)
    for alg, depth, iters in keys:
        entry = stats.get((alg, depth, iters), {})
        if not {"mean", "q25", "q75"} <= set(entry):
            vals = sorted(samples.get((alg, depth, iters), []))
            if not vals:
                raise SchemaError(f"{path}: cell {(alg, depth, iters)} has no values")
            entry = {
                "mean": sum(vals) / len(vals),
                "q25": vals[len(vals) // 4],
                "q75": vals[(3 * len(vals)) // 4 if len(vals) > 1 else 0],
            }
        cells.setdefault((alg, depth), {})[iters] = entry
    return ConvergenceData(cells)


def plot_convergence(csv_path: str | Path, out_path: str | Path) -> int:
    """Mean return vs iterations (log axis), one line per (algorithm, depth),
    quartile error bars; one panel per algorithm. Returns the line count."""
    data = read_convergence(Path(csv_path))
    algorithms = sorted({alg for alg, _d in data.cells})
    fig, axes = plt.subplots(
        1, len(algorithms), figsize=(4.2 * len(algorithms), 3.4), sharey=True, squeeze=False
    )
    lines = 0
    for ax, alg in zip(axes[0], algorithms):
        for (a, depth), series in sorted(data.cells.items()):
            if a != alg:
                continue
            iters = sorted(series)
            means = [series[i]["mean"] for i in iters]
            lo = [series[i]["mean"] - series[i]["q25"] for i in iters]
            hi = [series[i]["q75"] - series[i]["mean"] for i in iters]
            lo = [max(v, 0.0) for v in lo]
            hi = [max(v, 0.0) for v in hi]
            ax.errorbar(iters, means, yerr=[lo, hi], marker="o", capsize=3, label=f"depth {depth}")
            lines += 1
        ax.set_xscale("log")
        ax.set_title(alg)
        ax.set_xlabel("iterations")
        ax.legend(fontsize=8)
    axes[0][0].set_ylabel("return (undiscounted)")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return lines
