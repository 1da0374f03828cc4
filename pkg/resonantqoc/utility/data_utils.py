import json
import os
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from resonantqoc.config import Config, SolveConfig, read_json
from resonantqoc.costs import CostFunctional, load_cost
from resonantqoc.dynamics import ControlGrid, StateTrajectory, TimeGrid, unit_state
from resonantqoc.errors import ConfigError, InvalidState, MissingFileError
from resonantqoc.system import BoundarySpec, LevelSystem
from resonantqoc.utils import from_complex_entries

FLOAT_FORMAT = "%.17g"


def _to_builtin(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def save_json(obj, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, default=_to_builtin)


def save_frame(df: pd.DataFrame, path: str):
    """Write a CSV with every float in full double precision."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def load_frame(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise MissingFileError(path)
    try:
        return pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ConfigError(f"{path}: {e}", path=path) from e


def trajectory_frame(traj: StateTrajectory) -> pd.DataFrame:
    """Real trajectories get columns rho_j; complex ones re_j and im_j."""
    data = {"t": traj.grid.nodes}
    for j in range(traj.n):
        if traj.flavor == "real":
            data[f"rho_{j + 1}"] = traj.states[:, j]
        else:
            data[f"re_{j + 1}"] = traj.states[:, j].real
            data[f"im_{j + 1}"] = traj.states[:, j].imag
    return pd.DataFrame(data)


def populations_frame(traj: StateTrajectory) -> pd.DataFrame:
    data = {"t": traj.grid.nodes}
    populations = traj.populations()
    for j in range(traj.n):
        data[f"p_{j + 1}"] = populations[:, j]
    return pd.DataFrame(data)


def save_trajectory(traj: StateTrajectory, path: str):
    save_frame(trajectory_frame(traj), path)


def load_trajectory(path: str, grid: Optional[TimeGrid] = None) -> StateTrajectory:
    """`grid` pins the time grid, so the trajectory pairs with a control read from its own file."""
    df = load_frame(path)
    if "t" not in df.columns or len(df) < 2:
        raise ConfigError(f"{path}: a trajectory needs a t column and at least two rows")
    t = df["t"].to_numpy()
    grid = grid or TimeGrid(float(t[-1] - t[0]), len(df) - 1)
    real = [c for c in df.columns if c.startswith("rho_")]
    if real:
        return StateTrajectory(grid, df[real].to_numpy(), "real")
    n = len([c for c in df.columns if c.startswith("re_")])
    states = np.column_stack([df[f"re_{j}"].to_numpy() + 1j * df[f"im_{j}"].to_numpy() for j in range(1, n + 1)])
    return StateTrajectory(grid, states, "complex")


def save_control(control: ControlGrid, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    control.to_config().save(path)


def load_control(path: str, n: int) -> ControlGrid:
    return ControlGrid.from_config(read_json(path), n)


def load_system(path: str) -> LevelSystem:
    return LevelSystem.from_config(Config(read_json(path)))


def load_cost_file(path: str) -> CostFunctional:
    return load_cost(Config(read_json(path)))


def load_request(path: str) -> SolveConfig:
    return SolveConfig(read_json(path))


def load_boundary(config) -> BoundarySpec:
    return BoundarySpec.from_config(config)


def cost_table(before: dict, after: Optional[dict] = None) -> pd.DataFrame:
    """One row per cost kind; the after column is present when a transformed control is reported."""
    rows = []
    for kind, value in before.items():
        row = {"kind": kind, "before": value}
        if after is not None:
            row["after"] = after[kind]
        rows.append(row)
    return pd.DataFrame(rows)


def parse_psi0(text: str, n: int, real: bool = False) -> np.ndarray:
    """
    Parse an initial state: "e<k>" for the 1-based eigenstate k, or a JSON list of numbers or [re, im] pairs.
    """
    text = str(text).strip()
    if text.lower().startswith("e") and text[1:].isdigit():
        k = int(text[1:])
        if not 1 <= k <= n:
            raise InvalidState(f"Eigenstate e{k} is out of range for n = {n}")
        state = np.zeros(n, dtype=float if real else complex)
        state[k - 1] = 1.0
        return state
    try:
        entries = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"--psi0 must be e<k> or a JSON list, got {text!r} ({e.msg})")
    if not isinstance(entries, list):
        raise ConfigError(f"--psi0 must be e<k> or a JSON list, got {text!r}")
    state = from_complex_entries(entries)
    if real:
        if np.max(np.abs(state.imag), initial=0.0) > 0:
            raise InvalidState("The reduced problem needs a real initial state")
        state = state.real
    return unit_state(state, n, real=real)


def load_lift(path: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a lift.csv back as (times, covectors, per-step Hamiltonian)."""
    df = load_frame(path)
    columns = [c for c in df.columns if c.startswith("P_")]
    if "t" not in df.columns or not columns or "H" not in df.columns:
        raise ConfigError(f"{path}: a lift needs t, P_j and H columns")
    return df["t"].to_numpy(), df[columns].to_numpy(), df["H"].to_numpy()[:-1]


def load_report(path: str) -> dict:
    return read_json(path)
