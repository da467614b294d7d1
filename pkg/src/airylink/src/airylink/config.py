"""
Config file loading and validation.

A config is a JSON document (YAML is accepted too) with the sections below. Every section
is checked against a fixed key set before anything is computed.
"""
import json
import math
import os
from typing import Any, Dict, NamedTuple, Optional, Tuple

import scipy.constants
import structlog
import yaml

from airylink.design import DesignSettings
from airylink.errors import ConfigurationError, InputError
from airylink.evaluation import EvalSettings, GridSpec, SweepFamily
from airylink.phase_synthesis import GAUSSIAN, RECT, AiryParams
from airylink.scenario import (
    ABOVE,
    BELOW,
    ArraySpec,
    BlockageSpec,
    PropagationSettings,
    Scenario,
    ULA,
    UPA,
    edge_for_ratio_ula,
)

SLOG = structlog.get_logger(__name__)

DEFAULT_FREQUENCY_HZ = 140e9
DEFAULT_OUTPUT_DIRECTORY = "airylink-out"
YAML_SUFFIXES = (".yml", ".yaml")

_SECTIONS = {"scenario", "propagation", "design", "eval", "output", "params", "sweep"}
_SCENARIO_KEYS = {"frequency_hz", "wavelength", "link_distance", "tx", "rx", "blockages"}
_ARRAY_KEYS = {"kind", "count", "counts", "pitch", "pitch_wl", "center"}
_BLOCKAGE_KEYS = {
    "z_b",
    "edge",
    "ratio",
    "side",
    "x_min",
    "x_max",
    "y_min",
    "y_max",
    "attenuation",
}
_PROPAGATION_KEYS = set(PropagationSettings._fields)
_DESIGN_KEYS = set(DesignSettings._fields)
_EVAL_KEYS = {"rho", "schemes", "b_grid", "f_grid", "theta_grid", "b_min_abs", "cache"}
_GRID_KEYS = {"start", "stop", "step"}
_OUTPUT_KEYS = {"directory", "dump_fields", "slices", "trajectory"}
_TRAJECTORY_KEYS = {"z_start", "z_stop", "samples", "lobes"}
_PARAMS_KEYS = {"x", "y", "window"}
_AIRY_KEYS = {"B", "F", "theta"}
_SWEEP_KEYS = {"z_b", "edges", "ratios", "side", "y_edge", "attenuation"}


class TrajectoryOutput(NamedTuple):
    z_start: Optional[float] = None
    z_stop: Optional[float] = None
    samples: int = 200
    lobes: Tuple[int, ...] = (0, 1, 2)


class OutputSettings(NamedTuple):
    directory: str = DEFAULT_OUTPUT_DIRECTORY
    dump_fields: bool = True
    slices: Tuple[float, ...] = ()
    trajectory: TrajectoryOutput = TrajectoryOutput()


class ExplicitParams(NamedTuple):
    """Phase parameters given directly in the config instead of designed."""

    px: AiryParams
    py: Optional[AiryParams] = None
    window: str = RECT


class Config(NamedTuple):
    scenario: Scenario
    design: DesignSettings = DesignSettings()
    eval: EvalSettings = EvalSettings()
    output: OutputSettings = OutputSettings()
    params: Optional[ExplicitParams] = None
    sweep: Optional[SweepFamily] = None

    def with_output_directory(self, directory: Optional[str]) -> "Config":
        if not directory:
            return self
        return self._replace(output=self.output._replace(directory=directory))


def _check_keys(section: Any, allowed: set, path: str) -> Dict[str, Any]:
    if not isinstance(section, dict):
        raise ConfigurationError(f"Config section '{path}' must be a mapping, got {section!r}")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigurationError(f"Unknown key(s) {unknown} in config section '{path}'")
    return section


def _require(section: Dict[str, Any], key: str, path: str) -> Any:
    if key not in section:
        raise ConfigurationError(f"Missing required config key '{path}.{key}'")
    return section[key]


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool):
        raise ConfigurationError(f"Config value '{path}' must be a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"Config value '{path}' must be a number, got {value!r}")


def _numbers(values: Any, path: str) -> Tuple[float, ...]:
    if not isinstance(values, (list, tuple)):
        raise ConfigurationError(f"Config value '{path}' must be a list, got {values!r}")
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(values))


def _wavelength(section: Dict[str, Any]) -> float:
    if "wavelength" in section and "frequency_hz" in section:
        raise ConfigurationError("Give either scenario.wavelength or scenario.frequency_hz")
    if "wavelength" in section:
        return _number(section["wavelength"], "scenario.wavelength")
    frequency = _number(section.get("frequency_hz", DEFAULT_FREQUENCY_HZ), "scenario.frequency_hz")
    if not frequency > 0:
        raise ConfigurationError(f"scenario.frequency_hz must be positive, got {frequency}")
    return scipy.constants.c / frequency


def _center(value: Any, z: float, path: str) -> Tuple[float, float, float]:
    coords = _numbers(value, path)
    if len(coords) == 2:
        return coords[0], coords[1], z
    if len(coords) == 3:
        return coords
    raise ConfigurationError(f"Config value '{path}' must hold 2 or 3 coordinates")


def _array(section: Any, path: str, wavelength: float, z: float, default_kind: str) -> ArraySpec:
    section = _check_keys(section, _ARRAY_KEYS, path)
    kind = section.get("kind", default_kind)
    if kind not in (ULA, UPA):
        raise ConfigurationError(f"'{path}.kind' must be {ULA} or {UPA}, got {kind!r}")
    if "pitch" in section and "pitch_wl" in section:
        raise ConfigurationError(f"Give either '{path}.pitch' or '{path}.pitch_wl'")
    if "pitch" in section:
        pitch = _number(section["pitch"], f"{path}.pitch")
    else:
        pitch = _number(section.get("pitch_wl", 0.5), f"{path}.pitch_wl") * wavelength
    center = _center(section.get("center", [0.0, 0.0]), z, f"{path}.center")
    if kind == ULA:
        count = int(_number(_require(section, "count", path), f"{path}.count"))
        return ArraySpec.ula(count, pitch, center)
    counts = section.get("counts")
    if counts is None:
        count = int(_number(_require(section, "count", path), f"{path}.count"))
        counts = [count, count]
    nx, ny = (int(c) for c in _numbers(counts, f"{path}.counts"))
    return ArraySpec.upa(nx, ny, pitch, center)


def _bound(section: Dict[str, Any], key: str, default: float, path: str) -> float:
    value = section.get(key)
    return default if value is None else _number(value, f"{path}.{key}")


def _blockage(section: Any, path: str, partial: Scenario) -> BlockageSpec:
    section = _check_keys(section, _BLOCKAGE_KEYS, path)
    z_b = _number(_require(section, "z_b", path), f"{path}.z_b")
    attenuation = _number(section.get("attenuation", 0.0), f"{path}.attenuation")
    side = section.get("side", BELOW)
    if side not in (BELOW, ABOVE):
        raise ConfigurationError(f"'{path}.side' must be {BELOW!r} or {ABOVE!r}, got {side!r}")
    if "edge" in section or "ratio" in section:
        if "edge" in section and "ratio" in section:
            raise ConfigurationError(f"Give either '{path}.edge' or '{path}.ratio'")
        if "edge" in section:
            edge = _number(section["edge"], f"{path}.edge")
        else:
            ratio = _number(section["ratio"], f"{path}.ratio")
            edge = edge_for_ratio_ula(partial, z_b, ratio, side)
        b = BlockageSpec.half_plane(z_b, edge, side, attenuation)
        # A UPA half-plane may still be limited in y.
        return b._replace(
            y_min=_bound(section, "y_min", -math.inf, path),
            y_max=_bound(section, "y_max", math.inf, path),
        )
    return BlockageSpec.rectangle(
        z_b,
        x_min=_bound(section, "x_min", -math.inf, path),
        x_max=_bound(section, "x_max", math.inf, path),
        y_min=_bound(section, "y_min", -math.inf, path),
        y_max=_bound(section, "y_max", math.inf, path),
        attenuation=attenuation,
    )


def _propagation(section: Any) -> PropagationSettings:
    section = _check_keys(section, _PROPAGATION_KEYS, "propagation")
    values = dict(section)
    for key in ("dz", "pitch", "span"):
        if values.get(key) is not None:
            values[key] = _number(values[key], f"propagation.{key}")
    if "padding" in values:
        values["padding"] = int(_number(values["padding"], "propagation.padding"))
    if "bandlimit" in values and not isinstance(values["bandlimit"], bool):
        raise ConfigurationError("propagation.bandlimit must be true or false")
    settings = PropagationSettings(**values)
    settings.validate()
    return settings


def _scenario(section: Any, propagation: PropagationSettings) -> Scenario:
    section = _check_keys(section, _SCENARIO_KEYS, "scenario")
    wavelength = _wavelength(section)
    distance = _number(_require(section, "link_distance", "scenario"), "scenario.link_distance")
    tx_section = _require(section, "tx", "scenario")
    kind = tx_section.get("kind", ULA) if isinstance(tx_section, dict) else ULA
    tx = _array(tx_section, "scenario.tx", wavelength, 0.0, kind)
    rx_section = _require(section, "rx", "scenario")
    rx = _array(rx_section, "scenario.rx", wavelength, tx.center[2] + distance, tx.kind)
    partial = Scenario(
        tx=tx, rx=rx, link_distance=distance, wavelength=wavelength, propagation=propagation
    )
    blockages = section.get("blockages", [])
    if not isinstance(blockages, list):
        raise ConfigurationError("scenario.blockages must be a list")
    s = partial.with_blockages(
        [_blockage(b, f"scenario.blockages[{i}]", partial) for i, b in enumerate(blockages)]
    )
    s.validate()
    return s


def _design(section: Any) -> DesignSettings:
    section = _check_keys(section, _DESIGN_KEYS, "design")
    values = {k: _number(v, f"design.{k}") for k, v in section.items() if k != "mode"}
    mode = section.get("mode", "auto")
    if mode not in ("auto", "mode1", "mode2"):
        raise ConfigurationError(f"design.mode must be auto, mode1 or mode2, got {mode!r}")
    return DesignSettings(mode=mode, **values)


def _grid(section: Any, path: str) -> GridSpec:
    section = _check_keys(section, _GRID_KEYS, path)
    return GridSpec(
        start=_number(_require(section, "start", path), f"{path}.start"),
        stop=_number(_require(section, "stop", path), f"{path}.stop"),
        step=_number(_require(section, "step", path), f"{path}.step"),
    )


def _eval(section: Any, output_directory: str) -> EvalSettings:
    section = _check_keys(section, _EVAL_KEYS, "eval")
    values = {}
    if "rho" in section:
        values["rho"] = _number(section["rho"], "eval.rho")
    if "schemes" in section:
        schemes = section["schemes"]
        if not isinstance(schemes, list) or not all(isinstance(x, str) for x in schemes):
            raise ConfigurationError("eval.schemes must be a list of scheme names")
        values["schemes"] = tuple(schemes)
    for key in ("b_grid", "f_grid", "theta_grid"):
        if key in section:
            values[key] = _grid(section[key], f"eval.{key}")
    if "b_min_abs" in section:
        values["b_min_abs"] = _number(section["b_min_abs"], "eval.b_min_abs")
    cache = section.get("cache", True)
    if isinstance(cache, bool):
        values["cache_dir"] = os.path.join(output_directory, "channels") if cache else None
    elif isinstance(cache, str):
        values["cache_dir"] = cache
    else:
        raise ConfigurationError("eval.cache must be true, false or a directory path")
    settings = EvalSettings(**values)
    settings.link_budget.validate()
    if settings.schemes is not None:
        settings.schemes_for(ULA)
    return settings


def _output(section: Any) -> OutputSettings:
    section = _check_keys(section, _OUTPUT_KEYS, "output")
    trajectory = _check_keys(section.get("trajectory", {}), _TRAJECTORY_KEYS, "output.trajectory")
    lobes = tuple(int(v) for v in _numbers(trajectory.get("lobes", [0, 1, 2]), "lobes"))
    if any(lobe not in (0, 1, 2) for lobe in lobes):
        raise ConfigurationError(f"output.trajectory.lobes must be drawn from 0, 1, 2: {lobes}")
    samples = int(_number(trajectory.get("samples", 200), "output.trajectory.samples"))
    if samples < 1:
        raise ConfigurationError(f"output.trajectory.samples must be >= 1, got {samples}")
    bounds = {
        key: _number(trajectory[key], f"output.trajectory.{key}")
        for key in ("z_start", "z_stop")
        if trajectory.get(key) is not None
    }
    return OutputSettings(
        directory=str(section.get("directory", DEFAULT_OUTPUT_DIRECTORY)),
        dump_fields=bool(section.get("dump_fields", True)),
        slices=_numbers(section.get("slices", []), "output.slices"),
        trajectory=TrajectoryOutput(samples=samples, lobes=lobes, **bounds),
    )


def _airy(section: Any, path: str) -> AiryParams:
    section = _check_keys(section, _AIRY_KEYS, path)
    params = AiryParams(
        B=_number(section.get("B", 0.0), f"{path}.B"),
        F=_number(section.get("F", math.inf), f"{path}.F"),
        theta=_number(section.get("theta", 0.0), f"{path}.theta"),
    )
    params.validate()
    return params


def _params(section: Any, kind: str) -> ExplicitParams:
    section = _check_keys(section, _PARAMS_KEYS, "params")
    px = _airy(_require(section, "x", "params"), "params.x")
    py = None
    if kind == UPA:
        py = _airy(section.get("y", {}), "params.y")
    elif "y" in section:
        raise ConfigurationError("params.y is only meaningful for UPA scenarios")
    window = section.get("window", RECT)
    if window not in (RECT, GAUSSIAN):
        raise ConfigurationError(f"params.window must be {RECT!r} or {GAUSSIAN!r}")
    return ExplicitParams(px=px, py=py, window=window)


def _sweep(section: Any, s: Scenario) -> SweepFamily:
    section = _check_keys(section, _SWEEP_KEYS, "sweep")
    z_b = section.get("z_b")
    if z_b is None:
        # One screen plane by default: the configured one, else mid-link.
        z_b = [s.blockages[0].z_b] if s.blockages else [s.z_tx + 0.5 * s.link_distance]
    elif not isinstance(z_b, list):
        z_b = [z_b]
    side = section.get("side", BELOW)
    if side not in (BELOW, ABOVE):
        raise ConfigurationError(f"sweep.side must be {BELOW!r} or {ABOVE!r}, got {side!r}")
    family = SweepFamily(
        z_b=_numbers(z_b, "sweep.z_b"),
        edges=_numbers(section.get("edges", []), "sweep.edges"),
        ratios=_numbers(section.get("ratios", []), "sweep.ratios"),
        side=side,
        y_edge=_bound(section, "y_edge", math.inf, "sweep"),
        attenuation=_number(section.get("attenuation", 0.0), "sweep.attenuation"),
    )
    family.validate()
    return family


def parse_config(document: Any) -> Config:
    """Validate a decoded config document and build the typed config."""
    document = _check_keys(document, _SECTIONS, "<root>")
    propagation = _propagation(document.get("propagation", {}))
    scenario = _scenario(_require(document, "scenario", "<root>"), propagation)
    output = _output(document.get("output", {}))
    config = Config(
        scenario=scenario,
        design=_design(document.get("design", {})),
        eval=_eval(document.get("eval", {}), output.directory),
        output=output,
        params=_params(document["params"], scenario.kind) if "params" in document else None,
        sweep=_sweep(document["sweep"], scenario) if "sweep" in document else None,
    )
    SLOG.debug("Parsed config", kind=scenario.kind, blockages=len(scenario.blockages))
    return config


def read_document(path: str) -> Any:
    """
    Parse a JSON config, or a YAML one when `path` ends in .yml or .yaml.
    """
    if not os.path.exists(path):
        raise ConfigurationError(f"Config file {path} not found.")
    with open(path) as handle:
        text = handle.read()
    if os.path.splitext(path)[1].lower() in YAML_SUFFIXES:
        try:
            return yaml.safe_load(text)
        except yaml.YAMLError as err:
            mark = getattr(err, "problem_mark", None)
            where = "" if mark is None else f": line {mark.line + 1} column {mark.column + 1}"
            raise ConfigurationError(f"Could not parse config {path}{where}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigurationError(
            f"Could not parse config {path}: line {err.lineno} column {err.colno}: {err.msg}"
        )


def load_config(path: str, output_directory: Optional[str] = None) -> Config:
    """
    :param output_directory: overrides `output.directory` (the CLI's --out flag).
    """
    document = read_document(path)
    if output_directory and isinstance(document, dict):
        output = dict(document.get("output") or {})
        output["directory"] = output_directory
        document = dict(document, output=output)
    try:
        return parse_config(document)
    except InputError:
        raise
    except (TypeError, ValueError, AttributeError) as err:
        raise ConfigurationError(f"Invalid config {path}: {err}")
