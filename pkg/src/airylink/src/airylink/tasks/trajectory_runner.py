import csv
import io
import os
from typing import Tuple

import numpy as np
import structlog

from airylink.analytic import sample_trajectory
from airylink.config import Config
from airylink.design import default_context
from airylink.errors import DomainError
from airylink.field_io import format_float
from airylink.tasks.design_runner import resolve_beam

SLOG = structlog.get_logger(__name__)


def z_range(config: Config, solution) -> Tuple[float, float]:
    """Configured range, else the design's validity interval, else (0.05 D, D)."""
    traj = config.output.trajectory
    s = config.scenario
    default = (0.05 * s.link_distance, s.link_distance)
    if solution is not None and solution.validity() is not None:
        default = solution.validity()
    lo = traj.z_start if traj.z_start is not None else default[0]
    hi = traj.z_stop if traj.z_stop is not None else default[1]
    if not 0 < lo <= hi:
        raise DomainError(f"Trajectory range ({lo}, {hi}) must satisfy 0 < z_start <= z_stop")
    return lo, hi


def trajectory_csv(config: Config, source: str) -> str:
    """Rows of (lobe, z, x[, y]) with z measured from the Tx plane."""
    s = config.scenario
    beam = resolve_beam(config, source)
    ctx = default_context(s)
    traj = config.output.trajectory
    lo, hi = z_range(config, beam.solution)
    z = np.linspace(lo, hi, traj.samples) if traj.samples > 1 else np.array([lo])

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["lobe", "z", "x"] if beam.py is None else ["lobe", "z", "x", "y"])
    for lobe in traj.lobes:
        sampled = sample_trajectory(z, beam.px, ctx, lobe=lobe, py=beam.py)
        columns = [sampled.z, sampled.x] if sampled.y is None else [sampled.z, sampled.x, sampled.y]
        for values in zip(*columns):
            writer.writerow([lobe] + [format_float(v) for v in values])
    return buffer.getvalue()


def main_trajectory_runner(config: Config, source: str) -> str:
    text = trajectory_csv(config, source)
    os.makedirs(config.output.directory, exist_ok=True)
    path = os.path.join(config.output.directory, "trajectory.csv")
    with open(path, "w") as handle:
        handle.write(text)
    SLOG.info("Wrote trajectory", path=path)
    return text
