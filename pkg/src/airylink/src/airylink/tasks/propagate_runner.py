import os
from typing import List

import numpy as np
import structlog

from airylink.config import Config
from airylink.errors import ConfigurationError
from airylink.field_io import write_field_dump, write_intensity_csv
from airylink.numerics import ComplexField
from airylink.phase_synthesis import ula_weights, upa_weights
from airylink.propagation import inject_weights, peak_position, propagate_blocked
from airylink.scenario import ULA, build_grid, element_positions
from airylink.tasks.design_runner import resolve_beam

SLOG = structlog.get_logger(__name__)

DEFAULT_SLICES = 10


def slice_planes(config: Config) -> List[float]:
    """Configured z slices, or equally spaced planes up to and including the Rx plane."""
    s = config.scenario
    slices = sorted(config.output.slices)
    if not slices:
        return list(s.z_tx + s.link_distance * np.arange(1, DEFAULT_SLICES + 1) / DEFAULT_SLICES)
    if slices[0] <= s.z_tx:
        raise ConfigurationError(f"Output slices must lie beyond the Tx plane z={s.z_tx}")
    return slices


def source_field(config: Config, source: str) -> ComplexField:
    s = config.scenario
    beam = resolve_beam(config, source)
    if s.kind == ULA:
        weights = ula_weights(s.tx, beam.px, s.wavelength, beam.window)
    else:
        weights = upa_weights(s.tx, beam.px, beam.py, s.wavelength, beam.window)
    return inject_weights(build_grid(s), element_positions(s.tx), weights, z=s.z_tx)


def main_propagate_runner(config: Config, source: str) -> dict:
    """
    Propagate the configured beam through the scenario, dumping every requested slice.
    """
    s = config.scenario
    out_dir = config.output.directory
    os.makedirs(out_dir, exist_ok=True)

    current = source_field(config, source)
    fields, summary = [], []
    for index, z in enumerate(slice_planes(config)):
        if z > current.z:
            current = propagate_blocked(current, current.z, z, s, check_aliasing=index == 0)[-1]
        fields.append(current)
        entry = {"z": float(z), "peak": np.asarray(peak_position(current)).tolist()}
        if config.output.dump_fields:
            path = os.path.join(out_dir, "fields", f"slice-{index:03d}.field")
            write_field_dump(path, current, s.wavelength)
            entry["dump"] = path
        summary.append(entry)

    csv_path = os.path.join(out_dir, "intensity.csv")
    write_intensity_csv(csv_path, fields)
    SLOG.info("Wrote propagation output", slices=len(fields), csv=csv_path)
    return {"intensity_csv": csv_path, "slices": summary}
