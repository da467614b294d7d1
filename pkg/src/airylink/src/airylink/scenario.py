"""
Transceiver geometry, obstacles, the line-of-sight tunnel and blockage ratios.

Coordinates: the link axis is +z, the Tx array sits in the plane z = tx.center[2] and the
Rx array in the plane z = tx.center[2] + link_distance. ULA links live in the x-z plane.
"""
import hashlib
import json
import math
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import structlog

from airylink.errors import ConfigurationError, GeometryError
from airylink.numerics import Grid, Grid1D, Grid2D

SLOG = structlog.get_logger(__name__)

ULA = "ULA"
UPA = "UPA"

BELOW = "below"
ABOVE = "above"


class ArraySpec(NamedTuple):
    kind: str
    counts: Tuple[int, ...]
    pitch: float
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    @classmethod
    def ula(cls, count: int, pitch: float, center=(0.0, 0.0, 0.0)) -> "ArraySpec":
        return cls(kind=ULA, counts=(int(count),), pitch=float(pitch), center=tuple(center))

    @classmethod
    def upa(cls, nx: int, ny: int, pitch: float, center=(0.0, 0.0, 0.0)) -> "ArraySpec":
        return cls(kind=UPA, counts=(int(nx), int(ny)), pitch=float(pitch), center=tuple(center))

    def validate(self) -> None:
        if self.kind not in (ULA, UPA):
            raise ConfigurationError(f"Unknown array kind {self.kind!r}")
        expected = 1 if self.kind == ULA else 2
        if len(self.counts) != expected or any(n < 1 for n in self.counts):
            raise ConfigurationError(f"{self.kind} needs {expected} element count(s) >= 1")
        if not self.pitch > 0:
            raise ConfigurationError(f"Array pitch must be positive, got {self.pitch}")

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def span_x(self) -> float:
        return (self.counts[0] - 1) * self.pitch

    @property
    def span_y(self) -> float:
        return 0.0 if self.kind == ULA else (self.counts[1] - 1) * self.pitch

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "counts": list(self.counts),
            "pitch": self.pitch,
            "center": list(self.center),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArraySpec":
        return cls(
            kind=d["kind"],
            counts=tuple(int(n) for n in d["counts"]),
            pitch=float(d["pitch"]),
            center=tuple(float(c) for c in d.get("center", (0.0, 0.0, 0.0))),
        )


def _offsets(count: int, pitch: float) -> np.ndarray:
    return (np.arange(count) - (count - 1) / 2.0) * pitch


def element_positions(array: ArraySpec) -> np.ndarray:
    """
    Element coordinates, shape (N, 3), centered on `array.center`.

    UPA elements are ordered x-major: index = ix * Ny + iy.
    """
    array.validate()
    cx, cy, cz = array.center
    if array.kind == ULA:
        xs = cx + _offsets(array.counts[0], array.pitch)
        ys = np.full_like(xs, cy)
    else:
        gx, gy = np.meshgrid(
            _offsets(array.counts[0], array.pitch),
            _offsets(array.counts[1], array.pitch),
            indexing="ij",
        )
        xs = cx + gx.ravel()
        ys = cy + gy.ravel()
    return np.column_stack([xs, ys, np.full_like(xs, cz)])


class BlockageSpec(NamedTuple):
    """
    Thin screen at z_b occupying the rectangle [x_min, x_max] x [y_min, y_max].

    Open sides are +/-inf; a ULA obstacle is a half-plane in x with an infinite y extent.
    `attenuation` is the amplitude factor applied inside the screen.
    """

    z_b: float
    x_min: float = -math.inf
    x_max: float = math.inf
    y_min: float = -math.inf
    y_max: float = math.inf
    attenuation: float = 0.0

    @classmethod
    def half_plane(
        cls, z_b: float, edge: float, side: str = BELOW, attenuation: float = 0.0
    ) -> "BlockageSpec":
        if side == BELOW:
            return cls(z_b=z_b, x_max=edge, attenuation=attenuation)
        if side == ABOVE:
            return cls(z_b=z_b, x_min=edge, attenuation=attenuation)
        raise ConfigurationError(f"Blockage side must be {BELOW!r} or {ABOVE!r}, got {side!r}")

    @classmethod
    def rectangle(
        cls,
        z_b: float,
        x_min: float = -math.inf,
        x_max: float = math.inf,
        y_min: float = -math.inf,
        y_max: float = math.inf,
        attenuation: float = 0.0,
    ) -> "BlockageSpec":
        return cls(z_b, x_min, x_max, y_min, y_max, attenuation)

    @property
    def side(self) -> str:
        return BELOW if math.isinf(self.x_min) else ABOVE

    @property
    def edge(self) -> float:
        return self.x_max if self.side == BELOW else self.x_min

    def validate(self) -> None:
        if not 0.0 <= self.attenuation < 1.0:
            raise ConfigurationError(f"Attenuation must lie in [0, 1), got {self.attenuation}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ConfigurationError(f"Blockage rectangle is inverted: {self}")

    def contains(self, x, y=0.0):
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)

    def to_dict(self) -> dict:
        return dict(self._asdict())


class PropagationSettings(NamedTuple):
    """
    Step length, transverse sampling and spectral policy for ASM runs.

    `pitch` and `span` of None are derived from the scenario (see `build_grid`).
    """

    dz: float = 5e-3
    pitch: Optional[float] = None
    span: Optional[float] = None
    padding: int = 2
    evanescent: str = "zero"
    bandlimit: bool = True

    def validate(self) -> None:
        if not self.dz > 0:
            raise ConfigurationError(f"Propagation step must be positive, got {self.dz}")
        if int(self.padding) != self.padding or self.padding < 1:
            raise ConfigurationError(f"Padding factor must be an integer >= 1, got {self.padding}")
        if self.evanescent not in ("zero", "decay"):
            raise ConfigurationError(f"Unknown evanescent policy {self.evanescent!r}")
        if self.pitch is not None and not self.pitch > 0:
            raise ConfigurationError(f"Grid pitch must be positive, got {self.pitch}")


class Scenario(NamedTuple):
    tx: ArraySpec
    rx: ArraySpec
    link_distance: float
    wavelength: float
    blockages: Tuple[BlockageSpec, ...] = ()
    propagation: PropagationSettings = PropagationSettings()

    @property
    def kind(self) -> str:
        return self.tx.kind

    @property
    def z_tx(self) -> float:
        return self.tx.center[2]

    @property
    def z_rx(self) -> float:
        return self.tx.center[2] + self.link_distance

    def validate(self) -> None:
        self.tx.validate()
        self.rx.validate()
        self.propagation.validate()
        if self.tx.kind != self.rx.kind:
            raise ConfigurationError("Tx and Rx must both be ULA or both be UPA")
        if not self.link_distance > 0:
            raise GeometryError(f"Link distance must be positive, got {self.link_distance}")
        if not self.wavelength > 0:
            raise ConfigurationError(f"Wavelength must be positive, got {self.wavelength}")
        if not math.isclose(self.rx.center[2], self.z_rx, rel_tol=0, abs_tol=1e-12):
            raise GeometryError(
                f"Rx plane z={self.rx.center[2]} does not match Tx z + link distance {self.z_rx}"
            )
        for b in self.blockages:
            b.validate()

    def with_blockages(self, blockages: Sequence[BlockageSpec]) -> "Scenario":
        return self._replace(blockages=tuple(blockages))

    def unblocked(self) -> "Scenario":
        return self._replace(blockages=())

    def to_dict(self) -> dict:
        return {
            "tx": self.tx.to_dict(),
            "rx": self.rx.to_dict(),
            "link_distance": self.link_distance,
            "wavelength": self.wavelength,
            "blockages": [b.to_dict() for b in self.blockages],
            "propagation": dict(self.propagation._asdict()),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            tx=ArraySpec.from_dict(d["tx"]),
            rx=ArraySpec.from_dict(d["rx"]),
            link_distance=float(d["link_distance"]),
            wavelength=float(d["wavelength"]),
            blockages=tuple(BlockageSpec(**b) for b in d.get("blockages", [])),
            propagation=PropagationSettings(**d.get("propagation", {})),
        )


def scenario_hash(s: Scenario, *extra) -> str:
    payload = json.dumps([s.to_dict(), list(extra)], sort_keys=True, default=repr)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _single_blockage(s: Scenario) -> BlockageSpec:
    if len(s.blockages) != 1:
        raise GeometryError(f"Expected exactly one blockage, scenario has {len(s.blockages)}")
    b = s.blockages[0]
    if not s.z_tx < b.z_b < s.z_rx:
        raise GeometryError(
            f"Blockage plane z_b={b.z_b} lies outside the link (0, {s.link_distance})"
        )
    return b


def _interpolate(tx_value: float, rx_value: float, s: Scenario, z: float) -> float:
    t = (z - s.z_tx) / s.link_distance
    return tx_value + (rx_value - tx_value) * t


def los_tunnel_bounds(s: Scenario, z: float) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """
    Cross-section of the convex hull of both apertures at z: ((x_lo, x_hi), (y_lo, y_hi)).
    """
    bounds = []
    for axis, span_attr in ((0, "span_x"), (1, "span_y")):
        tx_half = getattr(s.tx, span_attr) / 2.0
        rx_half = getattr(s.rx, span_attr) / 2.0
        lo = _interpolate(s.tx.center[axis] - tx_half, s.rx.center[axis] - rx_half, s, z)
        hi = _interpolate(s.tx.center[axis] + tx_half, s.rx.center[axis] + rx_half, s, z)
        bounds.append((lo, hi))
    return bounds[0], bounds[1]


def _overlap_fraction(lo: float, hi: float, o_lo: float, o_hi: float) -> float:
    if hi <= lo:
        # Degenerate tunnel: the cross-section is a point.
        return 1.0 if o_lo <= lo <= o_hi else 0.0
    covered = min(hi, o_hi) - max(lo, o_lo)
    return min(max(covered / (hi - lo), 0.0), 1.0)


def blockage_ratio_ula(s: Scenario) -> float:
    if s.kind != ULA:
        raise ConfigurationError("blockage_ratio_ula needs a ULA scenario")
    b = _single_blockage(s)
    (lo, hi), _ = los_tunnel_bounds(s, b.z_b)
    return _overlap_fraction(lo, hi, b.x_min, b.x_max)


def blockage_ratio_upa(s: Scenario) -> float:
    if s.kind != UPA:
        raise ConfigurationError("blockage_ratio_upa needs a UPA scenario")
    b = _single_blockage(s)
    (x_lo, x_hi), (y_lo, y_hi) = los_tunnel_bounds(s, b.z_b)
    # The tunnel section and the screen are both axis-aligned rectangles.
    return _overlap_fraction(x_lo, x_hi, b.x_min, b.x_max) * _overlap_fraction(
        y_lo, y_hi, b.y_min, b.y_max
    )


def blockage_ratio(s: Scenario) -> float:
    return blockage_ratio_ula(s) if s.kind == ULA else blockage_ratio_upa(s)


def edge_for_ratio_ula(s: Scenario, z_b: float, ratio: float, side: str = BELOW) -> float:
    """Edge coordinate of a half-plane screen at z_b occluding `ratio` of the ULA tunnel."""
    if not 0.0 <= ratio <= 1.0:
        raise GeometryError(f"Blockage ratio must lie in [0, 1], got {ratio}")
    (lo, hi), _ = los_tunnel_bounds(s, z_b)
    if side == BELOW:
        return lo + ratio * (hi - lo)
    return hi - ratio * (hi - lo)


def active_blockages(s: Scenario, z: float, dz: float) -> List[BlockageSpec]:
    """Screens whose plane is crossed by the step (z - dz, z]."""
    return [b for b in s.blockages if z - dz < b.z_b <= z]


def obstacle_mask(blockages: Sequence[BlockageSpec], grid: Grid) -> np.ndarray:
    """Amplitude mask for screens sharing one plane; cell centers decide containment."""
    mask = np.ones(grid.shape)
    for b in blockages:
        if isinstance(grid, Grid1D):
            inside = b.contains(grid.coordinates())
        else:
            xs, ys = grid.coordinates()
            gx, gy = np.meshgrid(xs, ys, indexing="ij")
            inside = b.contains(gx, gy)
        mask = np.where(inside, np.minimum(mask, b.attenuation), mask)
    return mask


def blockage_mask(s: Scenario, z: float, grid: Grid, dz: Optional[float] = None) -> np.ndarray:
    """
    Mask applied after the propagation step ending at z.

    Screens are infinitely thin: only those with z - dz < z_b <= z contribute.
    """
    step = s.propagation.dz if dz is None else dz
    return obstacle_mask(active_blockages(s, z, step), grid)


def aligned_pitch(array_pitch: float, max_pitch: float) -> Tuple[float, int]:
    """Largest grid pitch <= max_pitch dividing the array pitch: (pitch, subdivisions)."""
    subdivisions = max(1, int(math.ceil(array_pitch / max_pitch - 1e-9)))
    return array_pitch / subdivisions, subdivisions


def _axis_grid(
    s: Scenario, count: int, array_pitch: float, span_needed: float
) -> Tuple[int, float, float]:
    settings = s.propagation
    max_pitch = settings.pitch if settings.pitch is not None else s.wavelength / 2.0
    dx, subdivisions = aligned_pitch(array_pitch, max_pitch)
    n = 2
    while n * dx < settings.padding * span_needed:
        n *= 2
    # Tx elements sit on nodes: shift by half a cell when their offsets are half-integer.
    shift = 0.5 * dx if ((count - 1) * subdivisions) % 2 == 1 else 0.0
    origin = -(n // 2) * dx + shift
    return n, dx, origin


def required_span(s: Scenario, axis: int) -> float:
    """Transverse window (before padding) that a run over this link needs on one axis."""
    span_attr = "span_x" if axis == 0 else "span_y"
    apertures = max(getattr(s.tx, span_attr), getattr(s.rx, span_attr))
    offset = abs(s.rx.center[axis] - s.tx.center[axis])
    derived = 2.0 * (apertures + offset) + s.link_distance / 8.0
    if s.propagation.span is None:
        return derived
    if s.propagation.span < apertures + offset:
        raise ConfigurationError(
            f"Grid span {s.propagation.span} does not cover the apertures ({apertures + offset})"
        )
    return s.propagation.span


def build_grid(s: Scenario) -> Grid:
    """
    Transverse simulation grid for the scenario.

    The pitch divides the Tx pitch and does not exceed λ/2 (or the configured pitch); the
    window is a power of two covering `padding` times the required span.
    """
    s.validate()
    nx, dx, ox = _axis_grid(s, s.tx.counts[0], s.tx.pitch, required_span(s, 0))
    if s.kind == ULA:
        grid = Grid1D(n=nx, dx=dx, origin=ox + s.tx.center[0])
    else:
        ny, dy, oy = _axis_grid(s, s.tx.counts[1], s.tx.pitch, required_span(s, 1))
        grid = Grid2D(
            nx=nx, ny=ny, dx=dx, dy=dy, origin_x=ox + s.tx.center[0], origin_y=oy + s.tx.center[1]
        )
    SLOG.debug("Built scenario grid", grid=grid.to_dict())
    return grid
