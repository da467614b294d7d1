"""
Grids, sampled complex fields, the DFT contract and Airy-function evaluation.

Everything in here is a pure function of its inputs; grids and fields are frozen.
"""
from dataclasses import dataclass, field, replace
from typing import List, Tuple, Union

import numpy as np
import scipy.fft
import scipy.optimize
import scipy.special
import structlog

from airylink.errors import ConfigurationError, DomainError, NumericalError

SLOG = structlog.get_logger(__name__)

ArrayLike = Union[float, complex, np.ndarray]

# First three local maxima of |Ai| on the real axis, frozen at four significant digits.
AIRY_PEAK = -1.0188
AIRY_LOBE_1 = -3.248
AIRY_LOBE_2 = -4.820
AIRY_ABS_PEAKS = (AIRY_PEAK, AIRY_LOBE_1, AIRY_LOBE_2)

AIRY_DOMAIN_RADIUS = 40.0


def is_power_of_two(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


def _check_size(name: str, n: int) -> None:
    if not isinstance(n, (int, np.integer)) or not is_power_of_two(int(n)):
        raise ConfigurationError(f"Grid size {name}={n} must be a power of two >= 2")


def _check_pitch(name: str, d: float) -> None:
    if not (np.isfinite(d) and d > 0):
        raise ConfigurationError(f"Grid pitch {name}={d} must be positive and finite")


@dataclass(frozen=True)
class Grid1D:
    n: int
    dx: float
    origin: float

    def __post_init__(self):
        _check_size("n", self.n)
        _check_pitch("dx", self.dx)

    @classmethod
    def centered(cls, n: int, dx: float) -> "Grid1D":
        """Grid whose sample n//2 sits exactly at x = 0."""
        return cls(n=n, dx=dx, origin=-(n // 2) * dx)

    @property
    def shape(self) -> Tuple[int]:
        return (self.n,)

    @property
    def size(self) -> int:
        return self.n

    @property
    def width(self) -> float:
        return self.n * self.dx

    def coordinates(self) -> np.ndarray:
        return self.origin + np.arange(self.n) * self.dx

    def frequencies(self) -> np.ndarray:
        return scipy.fft.fftfreq(self.n, d=self.dx)

    def to_dict(self) -> dict:
        return {"dims": [self.n], "pitches": [self.dx], "origin": [self.origin]}


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    dx: float
    dy: float
    origin_x: float
    origin_y: float

    def __post_init__(self):
        _check_size("nx", self.nx)
        _check_size("ny", self.ny)
        _check_pitch("dx", self.dx)
        _check_pitch("dy", self.dy)

    @classmethod
    def centered(cls, nx: int, ny: int, dx: float, dy: float) -> "Grid2D":
        return cls(
            nx=nx, ny=ny, dx=dx, dy=dy, origin_x=-(nx // 2) * dx, origin_y=-(ny // 2) * dy
        )

    @property
    def shape(self) -> Tuple[int, int]:
        # Values are indexed [ix, iy].
        return (self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def width(self) -> Tuple[float, float]:
        return (self.nx * self.dx, self.ny * self.dy)

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        return (
            self.origin_x + np.arange(self.nx) * self.dx,
            self.origin_y + np.arange(self.ny) * self.dy,
        )

    def frequencies(self) -> Tuple[np.ndarray, np.ndarray]:
        return scipy.fft.fftfreq(self.nx, d=self.dx), scipy.fft.fftfreq(self.ny, d=self.dy)

    def to_dict(self) -> dict:
        return {
            "dims": [self.nx, self.ny],
            "pitches": [self.dx, self.dy],
            "origin": [self.origin_x, self.origin_y],
        }


Grid = Union[Grid1D, Grid2D]


@dataclass(frozen=True, eq=False)
class ComplexField:
    """
    Complex scalar field sampled on `grid` at axial position `z`.

    `domain` is "space" for samples over transverse coordinates and "frequency" for the
    output of `dft_forward` (same grid, wraparound frequency ordering).
    """

    grid: Grid
    z: float
    values: np.ndarray
    domain: str = field(default="space")

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            raise ConfigurationError(
                f"Field has shape {values.shape} but its grid expects {self.grid.shape}"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid, z: float = 0.0) -> "ComplexField":
        return cls(grid=grid, z=z, values=np.zeros(grid.shape, dtype=np.complex128))

    def with_values(self, values: np.ndarray, z: float = None) -> "ComplexField":
        return replace(self, values=values, z=self.z if z is None else z)

    def power(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))

    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def dft_forward(f: ComplexField) -> ComplexField:
    """
    Unitary DFT (norm="ortho"): Parseval holds with scale 1 and the frequency of bin k is
    `grid.frequencies()[k]`.
    """
    if f.domain != "space":
        raise ConfigurationError("dft_forward expects a spatial-domain field")
    _check_transform_size(f.grid)
    return replace(f, values=scipy.fft.fftn(f.values, norm="ortho"), domain="frequency")


def dft_inverse(f: ComplexField) -> ComplexField:
    if f.domain != "frequency":
        raise ConfigurationError("dft_inverse expects a frequency-domain field")
    _check_transform_size(f.grid)
    return replace(f, values=scipy.fft.ifftn(f.values, norm="ortho"), domain="space")


def _check_transform_size(grid: Grid) -> None:
    for n in grid.shape:
        if not is_power_of_two(n):
            raise ConfigurationError(f"DFT length {n} is not a power of two")


def _check_airy_domain(z: ArrayLike) -> np.ndarray:
    arr = np.asarray(z)
    if not np.all(np.isfinite(arr)):
        raise DomainError("Airy argument is not finite")
    if np.any(np.abs(arr) > AIRY_DOMAIN_RADIUS):
        worst = arr.flat[int(np.argmax(np.abs(arr)))]
        raise DomainError(
            f"Airy argument {worst} lies outside the evaluation domain |z| <= {AIRY_DOMAIN_RADIUS}"
        )
    return arr


def _airy_component(z: ArrayLike, index: int) -> ArrayLike:
    arr = _check_airy_domain(z)
    out = np.asarray(scipy.special.airy(arr)[index], dtype=np.complex128)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"Airy evaluation produced a non-finite value for argument {z}")
    if out.ndim == 0:
        return complex(out)
    return out


def airy_ai(z: ArrayLike) -> ArrayLike:
    """
    Ai(z) for real or complex arguments with |z| <= 40.

    :param z: scalar or array argument.
    :return: complex value(s); real arguments give a zero imaginary part.
    """
    return _airy_component(z, 0)


def airy_ai_prime(z: ArrayLike) -> ArrayLike:
    return _airy_component(z, 1)


def airy_ai_abs_peak_constants() -> Tuple[float, float, float]:
    return AIRY_ABS_PEAKS


def locate_abs_peaks(count: int = 3, step: float = 0.05) -> List[float]:
    """
    Local maxima of |Ai| on the negative real axis, nearest to the origin first.

    These are the zeros of Ai'; brackets come from a sign scan, refinement from brentq.
    """

    def derivative(x: float) -> float:
        return float(scipy.special.airy(x)[1])

    peaks = []
    hi = 0.0
    f_hi = derivative(hi)
    while len(peaks) < count:
        lo = hi - step
        if lo < -AIRY_DOMAIN_RADIUS:
            raise DomainError(f"Only found {len(peaks)} Airy peaks inside the domain")
        f_lo = derivative(lo)
        if f_lo == 0.0:
            peaks.append(lo)
        elif np.sign(f_lo) != np.sign(f_hi):
            peaks.append(scipy.optimize.brentq(derivative, lo, hi, xtol=1e-14))
        hi, f_hi = lo, f_lo
    SLOG.debug("Located Airy peaks", peaks=peaks)
    return peaks
