"""
Angular spectrum propagation of sampled fields through free space and thin screens.

The transverse grid is periodic: the zero-padding factor is applied when the scenario
grid is built (`scenario.build_grid`), so every FFT here is a plain circular transform
and transfer functions compose exactly.
"""
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft
import structlog

from airylink.errors import ConfigurationError, RangeError
from airylink.numerics import ComplexField, Grid, Grid1D, Grid2D
from airylink.scenario import (
    PropagationSettings,
    Scenario,
    ULA,
    active_blockages,
    obstacle_mask,
)

SLOG = structlog.get_logger(__name__)

__all__ = [
    "PropagationSettings",
    "transfer_function",
    "bandlimit_filter",
    "propagate_free",
    "propagate_blocked",
    "field_at_points",
    "inject_weights",
    "peak_position",
    "track_peak",
]

ALIASING_BAND = 0.1
ALIASING_THRESHOLD = 0.01


def transfer_function(fx, fy, dz: float, wavelength: float, evanescent: str = "zero"):
    """
    Free-space transfer function exp(j 2π dz/λ sqrt(1 - λ²(fx² + fy²))).

    Evanescent components are zeroed (`zero`) or decay as exp(-2π dz/λ sqrt(λ²f² - 1))
    (`decay`).
    """
    fx = np.asarray(fx, dtype=float)
    fy = np.asarray(fy, dtype=float)
    arg = 1.0 - wavelength ** 2 * (fx ** 2 + fy ** 2)
    propagating = arg >= 0
    root = np.sqrt(np.abs(arg))
    phase_factor = 2.0 * math.pi * dz / wavelength
    h = np.where(propagating, np.exp(1j * phase_factor * root), 0.0 + 0.0j)
    if evanescent == "decay":
        h = np.where(propagating, h, np.exp(-phase_factor * root))
    elif evanescent != "zero":
        raise ConfigurationError(f"Unknown evanescent policy {evanescent!r}")
    return h


def bandlimit_filter(grid: Grid, distance: float, wavelength: float) -> np.ndarray:
    """
    Band limit for a sampled transfer function over `distance`: frequencies above
    1 / (λ sqrt((2 d / W)² + 1)) per axis (W the window width) are dropped.
    """
    fx, fy = _frequency_mesh(grid)
    widths = (grid.width,) if isinstance(grid, Grid1D) else grid.width
    keep = np.ones(fx.shape, dtype=bool)
    for f, width in zip((fx, fy), widths):
        limit = 1.0 / math.sqrt((2.0 * abs(distance) / width) ** 2 + 1.0) / wavelength
        keep &= np.abs(f) <= limit
    return keep


def _frequency_mesh(grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(grid, Grid1D):
        fx = grid.frequencies()
        return fx, np.zeros_like(fx)
    fx, fy = grid.frequencies()
    return np.meshgrid(fx, fy, indexing="ij")


def _outer_band_fraction(spectrum: np.ndarray, grid: Grid) -> float:
    total = float(np.sum(np.abs(spectrum) ** 2))
    if total == 0.0:
        return 0.0
    fx, fy = _frequency_mesh(grid)
    if isinstance(grid, Grid1D):
        nyquist = (0.5 / grid.dx, math.inf)
    else:
        nyquist = (0.5 / grid.dx, 0.5 / grid.dy)
    outer = (np.abs(fx) > (1.0 - ALIASING_BAND) * nyquist[0]) | (
        np.abs(fy) > (1.0 - ALIASING_BAND) * nyquist[1]
    )
    return float(np.sum(np.abs(spectrum[outer]) ** 2)) / total


def _check_aliasing(spectrum: np.ndarray, grid: Grid) -> None:
    fraction = _outer_band_fraction(spectrum, grid)
    if fraction > ALIASING_THRESHOLD:
        SLOG.warning(
            "Field power near the band edge; the grid may alias",
            outer_band_fraction=round(fraction, 4),
            threshold=ALIASING_THRESHOLD,
        )


class _Propagator:
    """Transfer-function cache for one grid, wavelength and spectral policy."""

    def __init__(
        self,
        grid: Grid,
        wavelength: float,
        evanescent: str,
        keep: Optional[np.ndarray] = None,
    ):
        self.grid = grid
        self.wavelength = wavelength
        self.evanescent = evanescent
        self.keep = keep
        self._fx, self._fy = _frequency_mesh(grid)

    def spectrum_step(self, spectrum: np.ndarray, distance: float) -> np.ndarray:
        h = transfer_function(self._fx, self._fy, distance, self.wavelength, self.evanescent)
        if self.keep is not None:
            h = np.where(self.keep, h, 0.0)
        return spectrum * h

    def step(self, values: np.ndarray, distance: float) -> np.ndarray:
        spectrum = scipy.fft.fftn(values, norm="ortho")
        return scipy.fft.ifftn(self.spectrum_step(spectrum, distance), norm="ortho")


def propagate_free(
    field: ComplexField,
    dz: float,
    wavelength: float,
    evanescent: str = "zero",
    bandlimit: bool = False,
    check_aliasing: bool = True,
) -> ComplexField:
    """
    Propagate `field` by dz through free space.

    :param bandlimit: drop frequencies the sampled transfer function cannot represent over dz.
    :return: field at z + dz on the same grid.
    """
    if check_aliasing:
        _check_aliasing(scipy.fft.fftn(field.values, norm="ortho"), field.grid)
    keep = bandlimit_filter(field.grid, dz, wavelength) if bandlimit else None
    propagator = _Propagator(field.grid, wavelength, evanescent, keep)
    return field.with_values(propagator.step(field.values, dz), z=field.z + dz)


def _check_grid_against(field: ComplexField, s: Scenario) -> None:
    settings = s.propagation
    expected = Grid1D if s.kind == ULA else Grid2D
    if not isinstance(field.grid, expected):
        raise ConfigurationError(
            f"{s.kind} scenario needs a {expected.__name__}, field has {type(field.grid).__name__}"
        )
    max_pitch = settings.pitch if settings.pitch is not None else s.wavelength / 2.0
    pitches = (field.grid.dx,) if expected is Grid1D else (field.grid.dx, field.grid.dy)
    if any(p > max_pitch * (1.0 + 1e-9) for p in pitches):
        raise ConfigurationError(
            f"Grid pitch {max(pitches)} exceeds the configured maximum {max_pitch}"
        )


def step_planes(z_start: float, z_end: float, dz: float) -> np.ndarray:
    """Step end positions: the interval is cut into ceil((z_end - z_start)/dz) equal steps."""
    count = max(1, int(math.ceil((z_end - z_start) / dz - 1e-9)))
    planes = z_start + (z_end - z_start) * np.arange(1, count + 1) / count
    planes[-1] = z_end
    return planes


def propagate_blocked(
    field: ComplexField,
    z_start: float,
    z_end: float,
    s: Scenario,
    record: bool = False,
    check_aliasing: bool = True,
) -> List[ComplexField]:
    """
    Iterate mask ∘ propagate_free from z_start to z_end.

    Screens are applied once, after the step whose interval (z - dz, z] holds their plane.
    Free-space stretches between screens are merged into a single transfer-function
    multiply unless `record` asks for every step.

    :return: the field after every step when `record`, else a one-element list.
    """
    if not z_end > z_start:
        raise ConfigurationError(f"z_end={z_end} must exceed z_start={z_start}")
    _check_grid_against(field, s)
    settings = s.propagation
    planes = step_planes(z_start, z_end, settings.dz)
    step = planes[0] - z_start

    keep = None
    if settings.bandlimit:
        keep = bandlimit_filter(field.grid, z_end - z_start, s.wavelength)
    propagator = _Propagator(field.grid, s.wavelength, settings.evanescent, keep)

    spectrum = scipy.fft.fftn(field.values, norm="ortho")
    if check_aliasing:
        _check_aliasing(spectrum, field.grid)

    results = []
    values = field.values
    z_now = z_start
    previous = z_start
    for z_step in planes:
        screens = active_blockages(s, z_step, z_step - previous)
        previous = z_step
        if not (record or screens or z_step == planes[-1]):
            continue
        spectrum = propagator.spectrum_step(spectrum, z_step - z_now)
        values = scipy.fft.ifftn(spectrum, norm="ortho")
        z_now = z_step
        if screens:
            SLOG.debug("Applying screen", z=z_step, screens=len(screens))
            values = values * obstacle_mask(screens, field.grid)
            spectrum = scipy.fft.fftn(values, norm="ortho")
        if record:
            results.append(field.with_values(values, z=z_step))
    SLOG.debug("Propagated", z_start=z_start, z_end=z_end, steps=len(planes), step=step)
    if not record:
        results.append(field.with_values(values, z=z_end))
    return results


def _fractional_index(coords: np.ndarray, pitch: float, points: np.ndarray, axis: str):
    lo, hi = coords[0], coords[-1]
    tolerance = 1e-9 * pitch
    if np.any(points < lo - tolerance) or np.any(points > hi + tolerance):
        raise RangeError(f"Sample point along {axis} lies outside the grid span [{lo}, {hi}]")
    position = np.clip((points - lo) / pitch, 0.0, len(coords) - 1)
    base = np.minimum(np.floor(position).astype(int), len(coords) - 2)
    return base, position - base


def field_at_points(field: ComplexField, points) -> np.ndarray:
    """
    Linear (1D) or bilinear (2D) interpolation of the complex samples.

    :param points: x values for a 1D field, an (N, 2) array of (x, y) for a 2D field.
    """
    points = np.asarray(points, dtype=float)
    if isinstance(field.grid, Grid1D):
        i, t = _fractional_index(field.grid.coordinates(), field.grid.dx, points, "x")
        v = field.values
        return (1.0 - t) * v[i] + t * v[i + 1]
    xs, ys = field.grid.coordinates()
    i, tx = _fractional_index(xs, field.grid.dx, points[:, 0], "x")
    j, ty = _fractional_index(ys, field.grid.dy, points[:, 1], "y")
    v = field.values
    return (
        (1 - tx) * (1 - ty) * v[i, j]
        + tx * (1 - ty) * v[i + 1, j]
        + (1 - tx) * ty * v[i, j + 1]
        + tx * ty * v[i + 1, j + 1]
    )


def inject_weights(
    grid: Grid, positions: np.ndarray, weights: Sequence[complex], z: float = 0.0
) -> ComplexField:
    """
    Place element weights on their nearest grid cell; elements sharing a cell accumulate.

    :param positions: (N, 3) element coordinates from `scenario.element_positions`.
    """
    positions = np.asarray(positions, dtype=float)
    weights = np.asarray(weights, dtype=np.complex128)
    values = np.zeros(grid.shape, dtype=np.complex128)
    if isinstance(grid, Grid1D):
        idx = np.rint((positions[:, 0] - grid.origin) / grid.dx).astype(int)
        if np.any(idx < 0) or np.any(idx >= grid.n):
            raise RangeError("Array element falls outside the simulation grid")
        np.add.at(values, idx, weights)
    else:
        ix = np.rint((positions[:, 0] - grid.origin_x) / grid.dx).astype(int)
        iy = np.rint((positions[:, 1] - grid.origin_y) / grid.dy).astype(int)
        if np.any((ix < 0) | (ix >= grid.nx) | (iy < 0) | (iy >= grid.ny)):
            raise RangeError("Array element falls outside the simulation grid")
        np.add.at(values, (ix, iy), weights)
    return ComplexField(grid=grid, z=z, values=values)


def _parabolic_offset(left: float, center: float, right: float) -> float:
    denominator = left - 2.0 * center + right
    if denominator == 0.0:
        return 0.0
    return 0.5 * (left - right) / denominator


def peak_position(field: ComplexField, bounds: Optional[Sequence[Tuple[float, float]]] = None):
    """
    Transverse position of the intensity maximum with parabolic sub-cell refinement.

    :param bounds: optional search window, ((x_lo, x_hi),) or ((x_lo, x_hi), (y_lo, y_hi)).
    :return: x for a 1D field, (x, y) for a 2D field.
    """
    intensity = field.intensity()
    if isinstance(field.grid, Grid1D):
        xs = field.grid.coordinates()
        if bounds is not None:
            intensity = np.where((xs >= bounds[0][0]) & (xs <= bounds[0][1]), intensity, -1.0)
        i = int(np.argmax(intensity))
        if 0 < i < len(xs) - 1 and intensity[i - 1] >= 0 and intensity[i + 1] >= 0:
            return xs[i] + field.grid.dx * _parabolic_offset(*intensity[i - 1 : i + 2])
        return xs[i]
    xs, ys = field.grid.coordinates()
    if bounds is not None:
        inside = np.outer(
            (xs >= bounds[0][0]) & (xs <= bounds[0][1]), (ys >= bounds[1][0]) & (ys <= bounds[1][1])
        )
        intensity = np.where(inside, intensity, -1.0)
    i, j = np.unravel_index(int(np.argmax(intensity)), intensity.shape)
    x, y = xs[i], ys[j]
    if 0 < i < len(xs) - 1 and min(intensity[i - 1, j], intensity[i + 1, j]) >= 0:
        x += field.grid.dx * _parabolic_offset(*intensity[i - 1 : i + 2, j])
    if 0 < j < len(ys) - 1 and min(intensity[i, j - 1], intensity[i, j + 1]) >= 0:
        y += field.grid.dy * _parabolic_offset(*intensity[i, j - 1 : j + 2])
    return x, y


def track_peak(
    field: ComplexField,
    z_values: Sequence[float],
    s: Scenario,
    window: Optional[Callable] = None,
) -> List:
    """
    Peak positions of `field` propagated through `s` to each of the increasing `z_values`.

    :param window: optional callable z -> bounds passed to `peak_position`.
    """
    peaks = []
    current = field
    for index, z in enumerate(z_values):
        if z > current.z:
            current = propagate_blocked(current, current.z, z, s, check_aliasing=index == 0)[-1]
        elif z < current.z:
            raise ConfigurationError("track_peak needs increasing z values")
        peaks.append(peak_position(current, None if window is None else window(z)))
    return peaks
