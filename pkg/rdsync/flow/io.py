from __future__ import annotations

import csv
from pathlib import Path
from typing import Union

from rdsync.flow.cocycle import Trajectory


def write_trajectory_csv(traj: Trajectory, path: Union[str, Path]) -> Path:
    """Columns t, x1..xd; floats at full precision."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t"] + [f"x{i + 1}" for i in range(traj.dim)])
        for t, x in zip(traj.times, traj.states):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in x])
    return out
