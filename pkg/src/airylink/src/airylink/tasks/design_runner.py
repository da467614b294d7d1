import json
import os
from typing import NamedTuple, Optional

import structlog

from airylink.config import Config
from airylink.design import DesignSolution, default_context, design_scenario
from airylink.errors import ConfigurationError
from airylink.phase_synthesis import GAUSSIAN, RECT, AiryParams, ApertureWindow
from airylink.scenario import blockage_ratio

SLOG = structlog.get_logger(__name__)

FROM_DESIGN = "design"
FROM_PARAMS = "params"


class BeamSource(NamedTuple):
    """Phase parameters driving a run, and the design that produced them (if any)."""

    px: AiryParams
    py: Optional[AiryParams]
    window: ApertureWindow
    solution: Optional[DesignSolution] = None


def resolve_beam(config: Config, source: str) -> BeamSource:
    s = config.scenario
    if source == FROM_DESIGN:
        solution = design_scenario(s, config.design)
        return BeamSource(solution.px, solution.py, ApertureWindow(RECT), solution)
    if source == FROM_PARAMS:
        if config.params is None:
            raise ConfigurationError("--from-params needs a 'params' section in the config")
        p = config.params
        window = ApertureWindow.gaussian_for(s.tx) if p.window == GAUSSIAN else ApertureWindow()
        return BeamSource(p.px, p.py, window)
    raise ConfigurationError(f"Unknown beam source {source!r}")


def main_design_runner(config: Config) -> dict:
    """Design the beam for the configured scenario and write design.json."""
    s = config.scenario
    solution = design_scenario(s, config.design)
    payload = solution.to_dict()
    payload["R_bl"] = blockage_ratio(s) if len(s.blockages) == 1 else None
    payload["context"] = dict(default_context(s)._asdict())

    os.makedirs(config.output.directory, exist_ok=True)
    path = os.path.join(config.output.directory, "design.json")
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
    SLOG.info("Wrote design", path=path, mode=solution.mode)
    return payload
