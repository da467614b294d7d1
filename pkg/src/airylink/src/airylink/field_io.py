"""
Field dump files and intensity CSVs.

A dump is one UTF-8 JSON header line terminated by a newline, followed by the samples as
little-endian float64 pairs (re, im) in row-major order. For 2D fields the row index is x.
"""
import csv
import json
import os
from typing import Iterable, Tuple

import numpy as np
import structlog

from airylink.errors import ConfigurationError
from airylink.numerics import ComplexField, Grid1D, Grid2D

SLOG = structlog.get_logger(__name__)

_SAMPLE_DTYPE = np.dtype("<c16")


def format_float(value) -> str:
    """17 significant digits: enough for an exact float64 roundtrip."""
    return "%.17g" % float(value)


def dump_header(field: ComplexField, wavelength: float) -> dict:
    header = field.grid.to_dict()
    header["z"] = field.z
    header["wavelength"] = wavelength
    return header


def write_field_dump(path: str, field: ComplexField, wavelength: float) -> None:
    header = json.dumps(dump_header(field, wavelength), sort_keys=True)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(header.encode("utf-8") + b"\n")
        handle.write(np.ascontiguousarray(field.values, dtype=_SAMPLE_DTYPE).tobytes())
    SLOG.debug("Wrote field dump", path=path, z=field.z)


def read_field_dump(path: str) -> Tuple[ComplexField, float]:
    """:return: the field and the wavelength recorded in its header."""
    with open(path, "rb") as handle:
        header = json.loads(handle.readline().decode("utf-8"))
        payload = handle.read()
    dims = header["dims"]
    if len(dims) == 1:
        grid = Grid1D(n=dims[0], dx=header["pitches"][0], origin=header["origin"][0])
    elif len(dims) == 2:
        grid = Grid2D(
            nx=dims[0],
            ny=dims[1],
            dx=header["pitches"][0],
            dy=header["pitches"][1],
            origin_x=header["origin"][0],
            origin_y=header["origin"][1],
        )
    else:
        raise ConfigurationError(f"Field dump {path} has unsupported dims {dims}")
    values = np.frombuffer(payload, dtype=_SAMPLE_DTYPE)
    if values.size != grid.size:
        raise ConfigurationError(
            f"Field dump {path} holds {values.size} samples, header expects {grid.size}"
        )
    field = ComplexField(grid=grid, z=header["z"], values=values.reshape(grid.shape).copy())
    return field, header["wavelength"]


def write_intensity_csv(path: str, fields: Iterable[ComplexField]) -> None:
    """One row per sample per slice: x[, y], z, intensity."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        header_written = False
        for field in fields:
            intensity = field.intensity()
            if isinstance(field.grid, Grid1D):
                if not header_written:
                    writer.writerow(["x", "z", "intensity"])
                for x, value in zip(field.grid.coordinates(), intensity):
                    writer.writerow([format_float(x), format_float(field.z), format_float(value)])
            else:
                if not header_written:
                    writer.writerow(["x", "y", "z", "intensity"])
                xs, ys = field.grid.coordinates()
                for i, x in enumerate(xs):
                    for j, y in enumerate(ys):
                        writer.writerow(
                            [
                                format_float(x),
                                format_float(y),
                                format_float(field.z),
                                format_float(intensity[i, j]),
                            ]
                        )
            header_written = True
