import math
from typing import Callable, NamedTuple, Optional

import numpy as np
import structlog

from airylink.errors import ConfigurationError
from airylink.scenario import ArraySpec, ULA, element_positions

SLOG = structlog.get_logger(__name__)

RECT = "rect"
GAUSSIAN = "gaussian"


class AiryParams(NamedTuple):
    """
    Per-dimension aperture phase parameters.

    B is the curving coefficient (1/m), F the focal distance (m, inf for none) and theta
    the steering angle (rad). B = 0 is a focusing beam; B = 0 and F = inf a steering beam.
    """

    B: float
    F: float
    theta: float

    @property
    def inv_f(self) -> float:
        return 0.0 if math.isinf(self.F) else 1.0 / self.F

    def validate(self) -> None:
        if not math.isfinite(self.B):
            raise ConfigurationError(f"Curving coefficient must be finite, got {self.B}")
        if self.F == 0 or math.isnan(self.F):
            raise ConfigurationError(f"Focal distance must be non-zero, got {self.F}")
        if not abs(self.theta) < math.pi / 2:
            raise ConfigurationError(
                f"Steering angle must satisfy |theta| < pi/2, got {self.theta}"
            )

    def mirrored(self) -> "AiryParams":
        return AiryParams(B=-self.B, F=self.F, theta=-self.theta)

    def to_dict(self) -> dict:
        return {"B": self.B, "F": self.F, "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> "AiryParams":
        return cls(B=float(d["B"]), F=float(d["F"]), theta=float(d["theta"]))


class ApertureWindow(NamedTuple):
    kind: str = RECT
    w0: Optional[float] = None

    @classmethod
    def gaussian_for(cls, array: ArraySpec) -> "ApertureWindow":
        """Gaussian window with waist half the aperture span."""
        return cls(kind=GAUSSIAN, w0=max(array.span_x, array.pitch) / 2.0)

    def __call__(self, x0):
        if self.kind == RECT:
            return np.ones_like(np.asarray(x0, dtype=float))
        if self.kind == GAUSSIAN:
            if not (self.w0 and self.w0 > 0):
                raise ConfigurationError(f"Gaussian window needs w0 > 0, got {self.w0}")
            return np.exp(-((np.asarray(x0, dtype=float) / self.w0) ** 2))
        raise ConfigurationError(f"Unknown aperture window {self.kind!r}")


def airy_phase_1d(x0, p: AiryParams, wavelength: float):
    """
    Cubic + quadratic + linear aperture phase. Not wrapped.

    :param x0: aperture coordinate(s) relative to the array center.
    :return: phase in radians, same shape as x0.
    """
    x0 = np.asarray(x0, dtype=float)
    cubic = (2.0 * math.pi * p.B) ** 3 * x0 ** 3 / 3.0
    quadratic = (math.pi * p.inv_f / wavelength) * x0 ** 2
    linear = (2.0 * math.pi / wavelength) * math.sin(p.theta) * x0
    return cubic - quadratic - linear


def focusing_phase(x0, F: float, theta: float, wavelength: float):
    return airy_phase_1d(x0, AiryParams(B=0.0, F=F, theta=theta), wavelength)


def steering_phase(x0, theta: float, wavelength: float):
    return focusing_phase(x0, math.inf, theta, wavelength)


def upa_phase(x0, y0, px: AiryParams, py: AiryParams, wavelength: float):
    return airy_phase_1d(x0, px, wavelength) + airy_phase_1d(y0, py, wavelength)


def focusing_params(transverse: float, z: float) -> AiryParams:
    """Focus on the point at lateral offset `transverse` and axial distance z."""
    return AiryParams(B=0.0, F=z, theta=math.asin(-transverse / z))


def steering_params(transverse: float, z: float) -> AiryParams:
    """Far-field beam pointed along the direction of the given point."""
    return AiryParams(B=0.0, F=math.inf, theta=math.asin(-transverse / math.hypot(transverse, z)))


def element_weights(
    array: ArraySpec, phase: Callable, window: ApertureWindow = ApertureWindow()
) -> np.ndarray:
    """
    weight_n = window(x_n) * exp(j * phase(x_n)), aperture coordinates relative to the center.

    `phase` takes x0 for a ULA and (x0, y0) for a UPA; UPA windows are separable.
    """
    positions = element_positions(array)
    x0 = positions[:, 0] - array.center[0]
    if array.kind == ULA:
        return window(x0) * np.exp(1j * phase(x0))
    y0 = positions[:, 1] - array.center[1]
    return window(x0) * window(y0) * np.exp(1j * phase(x0, y0))


def ula_weights(
    array: ArraySpec, p: AiryParams, wavelength: float, window: ApertureWindow = ApertureWindow()
) -> np.ndarray:
    return element_weights(array, lambda x0: airy_phase_1d(x0, p, wavelength), window)


def upa_weights(
    array: ArraySpec,
    px: AiryParams,
    py: AiryParams,
    wavelength: float,
    window: ApertureWindow = ApertureWindow(),
) -> np.ndarray:
    return element_weights(array, lambda x0, y0: upa_phase(x0, y0, px, py, wavelength), window)
