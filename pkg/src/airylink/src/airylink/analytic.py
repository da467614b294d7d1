"""
Closed-form Airy fields, main/side-lobe trajectories and on-trajectory magnitudes.

The aperture field is exp(j phi(x0)) under a Gaussian window exp(-x0²/w0²). Absorbing the
window into the quadratic phase gives the complex focal term 1/F~ = 1/F - j S_I with
S_I = λ/(π w0²); the Fresnel integral then reduces to an Airy function of complex argument.

`fresnel_oracle` integrates the same Fresnel integral by brute force. It is slow and
exists to validate the closed forms.
"""
import cmath
import math
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.integrate
import structlog

from airylink.errors import DegenerateParameterError, DomainError, OracleError
from airylink.numerics import AIRY_ABS_PEAKS, AIRY_PEAK, airy_ai
from airylink.phase_synthesis import AiryParams, ApertureWindow, GAUSSIAN, airy_phase_1d

SLOG = structlog.get_logger(__name__)

C_AI = abs(airy_ai(AIRY_PEAK))

# Window truncation for the oracle: exp(-16) at the support edge.
ORACLE_SUPPORT_WAISTS = 4.0


class AnalyticContext(NamedTuple):
    wavelength: float
    w0: float
    w0_y: Optional[float] = None

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def s_i(self) -> float:
        return self.wavelength / (math.pi * self.w0 ** 2)

    def inv_f_tilde(self, F: float) -> complex:
        inv_f = 0.0 if math.isinf(F) else 1.0 / F
        return complex(inv_f, -self.s_i)

    def along(self, axis: str) -> "AnalyticContext":
        """1D context for the x or y dimension of a UPA."""
        if axis == "y" and self.w0_y is not None:
            return AnalyticContext(self.wavelength, self.w0_y)
        return AnalyticContext(self.wavelength, self.w0)


class FieldCoefficients(NamedTuple):
    A: float
    C1: np.ndarray
    C2: np.ndarray


class Trajectory(NamedTuple):
    lobe: int
    z: np.ndarray
    x: np.ndarray
    y: Optional[np.ndarray] = None


def field_coefficients(x, z, p: AiryParams, ctx: AnalyticContext) -> FieldCoefficients:
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    A = (2.0 * math.pi * p.B) ** 3
    C1 = -(2.0 * math.pi / ctx.wavelength) * (math.sin(p.theta) + x / z)
    C2 = (math.pi / ctx.wavelength) * (1.0 / z - ctx.inv_f_tilde(p.F))
    return FieldCoefficients(A=A, C1=C1, C2=C2)


def _airy_kernel(x, z, p: AiryParams, ctx: AnalyticContext) -> np.ndarray:
    """∫ window(x0) exp(j phi(x0)) exp(jk (x - x0)² / 2z) dx0 for B != 0."""
    coeffs = field_coefficients(x, z, p, ctx)
    A, C1, C2 = coeffs
    xi = (C1 - C2 ** 2 / A) / (2.0 * math.pi * p.B)
    phase = 2.0 * C2 ** 3 / (3.0 * A ** 2) - C1 * C2 / A
    quadratic = math.pi * np.asarray(x, dtype=float) ** 2 / (ctx.wavelength * np.asarray(z))
    return np.exp(1j * (quadratic + phase)) * airy_ai(xi) / abs(p.B)


def _gaussian_kernel(x, z, p: AiryParams, ctx: AnalyticContext) -> np.ndarray:
    """The B = 0 kernel: a diffracting, possibly focused and tilted Gaussian."""
    _, C1, C2 = field_coefficients(x, z, p, ctx)
    a = -1j * C2
    quadratic = math.pi * np.asarray(x, dtype=float) ** 2 / (ctx.wavelength * np.asarray(z))
    return np.sqrt(math.pi / a) * np.exp(1j * quadratic - 1j * C1 ** 2 / (4.0 * C2))


def kernel(x, z, p: AiryParams, ctx: AnalyticContext) -> np.ndarray:
    """Per-dimension factor Ψ of the separable field; B = 0 uses the Gaussian form."""
    if p.B == 0.0:
        return _gaussian_kernel(x, z, p, ctx)
    return _airy_kernel(x, z, p, ctx)


def _check_z(z) -> None:
    if np.any(np.asarray(z) <= 0):
        raise DomainError("Closed-form fields need z > 0")


def closed_form_field_ula(x, z, p: AiryParams, ctx: AnalyticContext):
    """
    Closed-form 1D Airy field e^{jkz}/(jλz) Ψ(x, z).

    :raises DegenerateParameterError: when B = 0 (use `gaussian_beam_field_1d`).
    """
    if p.B == 0.0:
        raise DegenerateParameterError("B = 0 has no Airy closed form; the beam is Gaussian")
    _check_z(z)
    z = np.asarray(z, dtype=float)
    return np.exp(1j * ctx.k * z) / (1j * ctx.wavelength * z) * _airy_kernel(x, z, p, ctx)


def closed_form_field_upa(x, y, z, px: AiryParams, py: AiryParams, ctx: AnalyticContext):
    """Separable UPA field (1/(jλz)) Ψx(x, z) Ψy(y, z) e^{jkz}; either B may be 0."""
    if px.B == 0.0 and py.B == 0.0:
        raise DegenerateParameterError("At least one dimension needs B != 0")
    _check_z(z)
    z = np.asarray(z, dtype=float)
    psi_x = kernel(x, z, px, ctx.along("x"))
    psi_y = kernel(y, z, py, ctx.along("y"))
    return np.exp(1j * ctx.k * z) / (1j * ctx.wavelength * z) * psi_x * psi_y


def gaussian_beam_field_1d(x, z, w0: float, wavelength: float):
    """Fresnel diffraction of exp(-x0²/w0²) with the same 1/(jλz) prefactor."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    k = 2.0 * math.pi / wavelength
    a = 1.0 / w0 ** 2 - 1j * k / (2.0 * z)
    b = -1j * k * x / z
    c = 1j * k * x ** 2 / (2.0 * z)
    prefactor = np.exp(1j * k * z) / (1j * wavelength * z)
    return prefactor * np.sqrt(math.pi / a) * np.exp(b ** 2 / (4 * a) + c)


class InitialField(NamedTuple):
    """Aperture field for the quadrature oracle: window(x0) exp(j phase(x0)) on `support`."""

    phase: Callable
    window: Callable
    support: Tuple[float, float]

    @classmethod
    def airy(cls, p: AiryParams, ctx: AnalyticContext) -> "InitialField":
        half = ORACLE_SUPPORT_WAISTS * ctx.w0
        return cls(
            phase=lambda x0: airy_phase_1d(x0, p, ctx.wavelength),
            window=ApertureWindow(kind=GAUSSIAN, w0=ctx.w0),
            support=(-half, half),
        )

    @classmethod
    def gaussian(cls, ctx: AnalyticContext) -> "InitialField":
        return cls.airy(AiryParams(B=0.0, F=math.inf, theta=0.0), ctx)

    def scaled(self, factor: complex) -> "InitialField":
        window = self.window
        return self._replace(window=lambda x0: factor * window(x0))


def _oscillation_breakpoints(total_phase: Callable, lo: float, hi: float) -> np.ndarray:
    """Split [lo, hi] so every piece spans a handful of oscillations of the integrand."""
    grid = np.linspace(lo, hi, 20001)
    variation = float(np.sum(np.abs(np.diff(total_phase(grid)))))
    pieces = max(8, int(math.ceil(variation / (2.0 * math.pi * 4.0))))
    return np.linspace(lo, hi, pieces + 1)[1:-1]


def fresnel_integral(x: float, z: float, initial: InitialField, wavelength: float) -> complex:
    """
    ∫ window(x0) exp(j phase(x0)) exp(jk (x - x0)² / 2z) dx0 over the support.

    :raises OracleError: when the adaptive quadrature does not converge.
    """
    k = 2.0 * math.pi / wavelength
    lo, hi = initial.support

    def total_phase(x0):
        return initial.phase(x0) + k * (x - x0) ** 2 / (2.0 * z)

    def integrand(x0):
        value = complex(initial.window(x0)) * cmath.exp(1j * float(total_phase(x0)))
        return np.array([value.real, value.imag])

    result, error, info = scipy.integrate.quad_vec(
        integrand,
        lo,
        hi,
        epsabs=1e-8,
        epsrel=1e-10,
        limit=20000,
        points=_oscillation_breakpoints(total_phase, lo, hi),
        full_output=True,
    )
    if not info.success:
        raise OracleError(f"Fresnel quadrature did not converge at x={x}, z={z}: {info.message}")
    return complex(result[0], result[1])


def fresnel_oracle(x: float, z: float, initial: InitialField, ctx: AnalyticContext) -> complex:
    """Brute-force Fresnel field e^{jkz}/(jλz) ∫ ... dx0 at one point."""
    prefactor = cmath.exp(1j * ctx.k * z) / (1j * ctx.wavelength * z)
    return prefactor * fresnel_integral(x, z, initial, ctx.wavelength)


def fresnel_oracle_upa(
    x: float,
    y: float,
    z: float,
    initial_x: InitialField,
    initial_y: InitialField,
    ctx: AnalyticContext,
) -> complex:
    """Separable 2D oracle: product of two 1D quadratures."""
    prefactor = cmath.exp(1j * ctx.k * z) / (1j * ctx.wavelength * z)
    return (
        prefactor
        * fresnel_integral(x, z, initial_x, ctx.wavelength)
        * fresnel_integral(y, z, initial_y, ctx.wavelength)
    )


def validity_interval(z_b: float, z_r: float) -> Tuple[float, float]:
    return 0.05 * z_r, z_r + 0.5 * (z_r - z_b)


def trajectory_ula(
    z,
    p: AiryParams,
    ctx: AnalyticContext,
    lobe: int = 0,
    validity: Optional[Tuple[float, float]] = None,
):
    """
    Transverse position of lobe `lobe` (0 main, 1-2 side) at distance z.

    B = 0 degenerates to the straight ray x = -sin(theta) z.

    :raises DomainError: for z outside `validity` (or z <= 0).
    """
    z = np.asarray(z, dtype=float)
    lo, hi = validity if validity is not None else (0.0, math.inf)
    if np.any(z <= 0) or np.any(z < lo) or np.any(z > hi):
        raise DomainError(f"Trajectory requested outside its validity interval ({lo}, {hi})")
    if not 0 <= lobe < len(AIRY_ABS_PEAKS):
        raise DomainError(f"Lobe index must be 0, 1 or 2, got {lobe}")
    straight = -math.sin(p.theta) * z
    if p.B == 0.0:
        return straight
    lam, B = ctx.wavelength, p.B
    s_r = 1.0 / z - p.inv_f
    bend = (s_r ** 2 - ctx.s_i ** 2) / (16.0 * lam * math.pi ** 2 * B ** 3) * z
    return -AIRY_ABS_PEAKS[lobe] * lam * z * B + straight - bend


def lobe_offset(B: float, ctx: AnalyticContext, z):
    """
    Distance between the main-lobe intensity peak and `trajectory_ula` at z.

    The window adds a linear slope of 1/(2π B w0)² per unit of Airy argument to ln|E|,
    which moves the peak by λz / (|ξ_peak| 4π² |B| w0²) toward the decaying side (toward
    the screen for a design). Straight beams (B = 0) have no offset.
    """
    z = np.asarray(z, dtype=float)
    if B == 0.0:
        return np.zeros_like(z)[()]
    return ctx.wavelength * z / (-AIRY_PEAK * 4.0 * math.pi ** 2 * abs(B) * ctx.w0 ** 2)


def trajectory_upa(
    z,
    px: AiryParams,
    py: AiryParams,
    ctx: AnalyticContext,
    lobe: int = 0,
    validity: Optional[Tuple[float, float]] = None,
):
    return (
        trajectory_ula(z, px, ctx.along("x"), lobe, validity),
        trajectory_ula(z, py, ctx.along("y"), lobe, validity),
    )


def sample_trajectory(
    z_values: Sequence[float],
    px: AiryParams,
    ctx: AnalyticContext,
    lobe: int = 0,
    py: Optional[AiryParams] = None,
    validity: Optional[Tuple[float, float]] = None,
) -> Trajectory:
    z = np.asarray(z_values, dtype=float)
    if z.size and (z[0] <= 0 or np.any(np.diff(z) <= 0)):
        raise DomainError("Trajectory samples need strictly increasing z > 0")
    if py is None:
        return Trajectory(lobe=lobe, z=z, x=trajectory_ula(z, px, ctx, lobe, validity))
    x, y = trajectory_upa(z, px, py, ctx, lobe, validity)
    return Trajectory(lobe=lobe, z=z, x=x, y=y)


def _dimension_factor(B: float, F: float, ctx: AnalyticContext, z, include_b2_term=True):
    """Magnitude of Ψ on its own main-lobe locus."""
    inv_f = 0.0 if math.isinf(F) else 1.0 / F
    z = np.asarray(z, dtype=float)
    r_c2 = (math.pi / ctx.wavelength) * (1.0 / z - inv_f)
    i_c2 = (math.pi / ctx.wavelength) * ctx.s_i
    if B == 0.0:
        return np.sqrt(math.pi / np.abs(r_c2 + 1j * i_c2))
    k2 = -AIRY_PEAK * i_c2 / (2.0 * math.pi) ** 2
    k6 = (r_c2 ** 2 * i_c2 + i_c2 ** 3 / 3.0) / (2.0 * math.pi) ** 6
    exponent = k6 / B ** 6
    if include_b2_term:
        exponent = exponent + k2 / B ** 2
    return C_AI / abs(B) * np.exp(-exponent)


def magnitude_on_trajectory(
    B: float, F: float, ctx: AnalyticContext, z_target, include_b2_term: bool = True
):
    """
    |E| on the main-lobe locus: C_Ai / (λ z |B|) exp(-(K2/B² + K6/B⁶)).

    :param include_b2_term: drop K2/B² to get the objective whose stationary point is the
        closed-form curving coefficient.
    """
    if B == 0.0:
        raise DegenerateParameterError("On-trajectory magnitude needs B != 0")
    z = np.asarray(z_target, dtype=float)
    return _dimension_factor(B, F, ctx, z, include_b2_term) / (ctx.wavelength * z)


def magnitude_upa(px: AiryParams, py: AiryParams, ctx: AnalyticContext, z):
    """Product of the per-dimension factors over the shared λz."""
    z = np.asarray(z, dtype=float)
    fx = _dimension_factor(px.B, px.F, ctx.along("x"), z)
    fy = _dimension_factor(py.B, py.F, ctx.along("y"), z)
    return fx * fy / (ctx.wavelength * z)
