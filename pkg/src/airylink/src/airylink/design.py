"""
Closed-form Airy beam design: from obstacle and receiver geometry to (B, F, theta).

A design pins the main-lobe trajectory to two anchors, a waypoint just past the obstacle
edge at z_b and a target at the receiver plane z_r. Both boundary conditions share the
steering term, which leaves a one-parameter family F(B); B is then the stationary point of
the on-trajectory log-magnitude with its quartic term dropped, a quadratic in T = B³.
"""
import math
from typing import NamedTuple, Optional, Tuple

import numpy as np
import structlog

from airylink.analytic import (
    AnalyticContext,
    C_AI,
    lobe_offset,
    trajectory_ula,
    validity_interval,
)
from airylink.errors import GeometryError, InfeasibleDesignError
from airylink.numerics import AIRY_PEAK
from airylink.phase_synthesis import AiryParams, focusing_params
from airylink.scenario import (
    ABOVE,
    BELOW,
    Scenario,
    ULA,
    UPA,
    blockage_ratio,
    build_grid,
)

SLOG = structlog.get_logger(__name__)

MODE_ULA = "ULA"
MODE_UPA_1 = "UPA-mode1"
MODE_UPA_2 = "UPA-mode2"
MODE_NO_BEND = "no-bend"

DEFAULT_MARGIN_WAVELENGTHS = 5.0


class Anchors(NamedTuple):
    """
    Waypoint (z_b, x_s[, y_s]) and target (z_r, x_c[, y_c]) relative to the Tx center.

    `bend` names the dimension the beam curves in (`x`, `y` or `none`).
    """

    z_b: float
    x_s: float
    z_r: float
    x_c: float
    margin: float
    y_s: Optional[float] = None
    y_c: Optional[float] = None
    bend: str = "x"

    def planar(self, axis: str) -> "Anchors":
        """The (z, transverse) anchors of one dimension, as a ULA problem."""
        if axis == "x":
            return Anchors(self.z_b, self.x_s, self.z_r, self.x_c, self.margin, bend="x")
        return Anchors(self.z_b, self.y_s, self.z_r, self.y_c, self.margin, bend="y")

    def mirrored(self) -> "Anchors":
        flip = lambda v: None if v is None else -v
        return self._replace(
            x_s=-self.x_s, x_c=-self.x_c, y_s=flip(self.y_s), y_c=flip(self.y_c)
        )

    def to_dict(self) -> dict:
        return dict(self._asdict())


class AirySolution(NamedTuple):
    params: AiryParams
    sigma: Optional[int]
    roots: Tuple[float, float]


class DesignSettings(NamedTuple):
    margin: Optional[float] = None
    margin_x: Optional[float] = None
    margin_y: Optional[float] = None
    mode: str = "auto"

    def margins(self, wavelength: float) -> Tuple[float, float]:
        base = self.margin if self.margin is not None else DEFAULT_MARGIN_WAVELENGTHS * wavelength
        return (
            self.margin_x if self.margin_x is not None else base,
            self.margin_y if self.margin_y is not None else base,
        )


class DesignSolution(NamedTuple):
    mode: str
    px: AiryParams
    py: Optional[AiryParams]
    anchors: Optional[Anchors]
    sigma: Tuple[Optional[int], Optional[int]]
    context: AnalyticContext

    def trajectory(self, z, lobe: int = 0):
        """Predicted main-lobe position(s) at z: x for ULA designs, (x, y) for UPA."""
        x = trajectory_ula(z, self.px, self.context.along("x"), lobe)
        if self.py is None:
            return x
        return x, trajectory_ula(z, self.py, self.context.along("y"), lobe)

    def validity(self) -> Optional[Tuple[float, float]]:
        if self.anchors is None:
            return None
        return validity_interval(self.anchors.z_b, self.anchors.z_r)

    def lobe_offsets(self, z: Optional[float] = None) -> Tuple[float, Optional[float]]:
        """Per-dimension `lobe_offset` at z (the waypoint plane by default)."""
        if z is None:
            z = self.anchors.z_b if self.anchors is not None else 0.0
        x = float(lobe_offset(self.px.B, self.context.along("x"), z))
        if self.py is None:
            return x, None
        return x, float(lobe_offset(self.py.B, self.context.along("y"), z))

    def to_dict(self) -> dict:
        py = self.py
        out = {
            "mode": self.mode,
            "Bx": self.px.B,
            "Fx": self.px.F,
            "thetax": self.px.theta,
            "By": None if py is None else py.B,
            "Fy": None if py is None else py.F,
            "thetay": None if py is None else py.theta,
            "sigma": list(self.sigma),
            "anchors": None if self.anchors is None else self.anchors.to_dict(),
        }
        if self.anchors is not None and self.mode != MODE_NO_BEND:
            out["boundary_residual"] = max(boundary_residuals(self))
            out["lobe_offset"] = list(self.lobe_offsets())
        return out


def default_context(s: Scenario) -> AnalyticContext:
    """Gaussian waist equal to half the Tx aperture span, per dimension."""
    w0 = max(s.tx.span_x, s.tx.pitch) / 2.0
    w0_y = max(s.tx.span_y, s.tx.pitch) / 2.0 if s.kind == UPA else None
    return AnalyticContext(wavelength=s.wavelength, w0=w0, w0_y=w0_y)


def _relative_rx(s: Scenario) -> Tuple[float, float, float]:
    return (
        s.rx.center[0] - s.tx.center[0],
        s.rx.center[1] - s.tx.center[1],
        s.link_distance,
    )


def _edge_slope(s: Scenario, side: str, axis: int) -> float:
    """Slope of the tunnel edge the beam should run parallel to after clearing the screen."""
    span = "span_x" if axis == 0 else "span_y"
    rx_offset = _relative_rx(s)[axis]
    half_diff = 0.5 * (getattr(s.rx, span) - getattr(s.tx, span))
    if side == BELOW:
        return (rx_offset + half_diff) / s.link_distance
    return (rx_offset - half_diff) / s.link_distance


def _check_inside_grid(s: Scenario, value: float, axis: int) -> None:
    grid = build_grid(s)
    if s.kind == ULA:
        half = grid.width / 2.0
    else:
        half = grid.width[axis] / 2.0
    if abs(value) > half:
        raise InfeasibleDesignError(
            f"Waypoint {value} lies outside the simulated window (+/-{half}); the screen"
            " leaves no room to bend around it"
        )


def anchors_ula(s: Scenario, margin: Optional[float] = None) -> Anchors:
    """
    Waypoint just past the screen edge and a target continuing parallel to the tunnel edge.
    """
    if s.kind != ULA:
        raise GeometryError("anchors_ula needs a ULA scenario")
    if len(s.blockages) != 1:
        raise GeometryError(f"ULA design handles exactly one screen, got {len(s.blockages)}")
    b = s.blockages[0]
    d_s = DEFAULT_MARGIN_WAVELENGTHS * s.wavelength if margin is None else margin
    z_b = b.z_b - s.z_tx
    z_r = s.link_distance
    if not 0.0 < z_b < z_r:
        raise GeometryError(f"Screen plane z_b={b.z_b} lies outside the link")
    edge = b.edge - s.tx.center[0]
    x_s = edge + d_s if b.side == BELOW else edge - d_s
    _check_inside_grid(s, x_s, 0)
    x_c = x_s + _edge_slope(s, b.side, 0) * (z_r - z_b)
    anchors = Anchors(z_b=z_b, x_s=x_s, z_r=z_r, x_c=x_c, margin=d_s)
    SLOG.debug("ULA anchors", **anchors.to_dict())
    return anchors


def fb_relation(a: Anchors, ctx: AnalyticContext) -> Tuple[float, float]:
    """(Q1, Q2) with 1/F = Q1 + Q2 B³ from eliminating the steering term."""
    delta = 1.0 / a.z_r - 1.0 / a.z_b
    if delta == 0.0:
        raise GeometryError("Waypoint and target planes coincide")
    slope_gap = a.x_c / a.z_r - a.x_s / a.z_b
    q1 = 0.5 * (1.0 / a.z_r + 1.0 / a.z_b)
    q2 = 8.0 * ctx.wavelength * math.pi ** 2 * slope_gap / delta
    return q1, q2


def required_deviation(a: Anchors) -> float:
    """Waypoint offset from the straight Tx-center to target line at z_b."""
    return a.x_s - a.x_c * a.z_b / a.z_r


def curving_roots(a: Anchors, ctx: AnalyticContext) -> Tuple[float, float]:
    """Both real roots T = B³ of the reduced stationarity condition (T+ > 0 > T-)."""
    lam, w0 = ctx.wavelength, ctx.w0
    delta = 1.0 / a.z_r - 1.0 / a.z_b
    if delta == 0.0:
        raise GeometryError("Waypoint and target planes coincide")
    slope_gap = a.x_c / a.z_r - a.x_s / a.z_b
    half_p1 = 3.0 * slope_gap / (16.0 * lam * math.pi ** 2 * w0 ** 2)
    radicand = (
        half_p1 ** 2
        + 2.0 / ((2.0 * math.pi) ** 6 * w0 ** 6)
        + 3.0 * delta ** 2 / (128.0 * lam ** 2 * math.pi ** 4 * w0 ** 2)
    )
    root = math.sqrt(radicand)
    return -half_p1 + root, -half_p1 - root


def solve_airy_ula(a: Anchors, ctx: AnalyticContext) -> AirySolution:
    """
    Closed-form (B, F, theta) whose main lobe passes both anchors.

    σ picks the root whose sign matches the required bending direction; zero deviation
    takes the positive root.

    :raises InfeasibleDesignError: when the steering angle would need |sin(theta)| > 1.
    """
    t_plus, t_minus = curving_roots(a, ctx)
    sigma = 1 if required_deviation(a) >= 0.0 else -1
    B = float(np.cbrt(t_plus if sigma > 0 else t_minus))

    q1, q2 = fb_relation(a, ctx)
    inv_f = q1 + q2 * B ** 3
    F = math.inf if inv_f == 0.0 else 1.0 / inv_f

    lam = ctx.wavelength
    sin_theta = (
        -AIRY_PEAK * lam * B
        - a.x_s / a.z_b
        - ((1.0 / a.z_b - inv_f) ** 2 - ctx.s_i ** 2) / (16.0 * lam * math.pi ** 2 * B ** 3)
    )
    if not -1.0 <= sin_theta <= 1.0:
        raise InfeasibleDesignError(
            f"Anchors demand sin(theta)={sin_theta:.6g}; no physical steering angle exists"
        )
    params = AiryParams(B=B, F=F, theta=math.asin(sin_theta))
    SLOG.debug("Solved Airy parameters", B=B, F=F, theta=params.theta, sigma=sigma)
    return AirySolution(params=params, sigma=sigma, roots=(t_plus, t_minus))


def check_lobe_offset(params: AiryParams, a: Anchors, ctx: AnalyticContext) -> float:
    """`lobe_offset` at the waypoint; warns when it exceeds the safety margin."""
    offset = float(lobe_offset(params.B, ctx, a.z_b))
    if offset > a.margin:
        SLOG.warning(
            "Aperture too small for the closed form; the main lobe peaks inside the margin",
            lobe_offset=offset,
            margin=a.margin,
            B=params.B,
        )
    return offset


def curving_objective(B, a: Anchors, ctx: AnalyticContext, include_b2_term: bool = True):
    """
    ln|E| on the main lobe at z_r with F pinned by the F-B relation.

    Without the K2/B² term the maximizer over each sign of B is the closed-form B.
    """
    B = np.asarray(B, dtype=float)
    q1, q2 = fb_relation(a, ctx)
    r_c2 = (math.pi / ctx.wavelength) * (1.0 / a.z_r - (q1 + q2 * B ** 3))
    i_c2 = (math.pi / ctx.wavelength) * ctx.s_i
    k6 = (r_c2 ** 2 * i_c2 + i_c2 ** 3 / 3.0) / (2.0 * math.pi) ** 6
    value = math.log(C_AI / (ctx.wavelength * a.z_r)) - np.log(np.abs(B)) - k6 / B ** 6
    if include_b2_term:
        k2 = -AIRY_PEAK * i_c2 / (2.0 * math.pi) ** 2
        value = value - k2 / B ** 2
    return value


def boundary_residuals(solution: DesignSolution) -> Tuple[float, ...]:
    """|trajectory - anchor| at both anchors, for every bent dimension."""
    a = solution.anchors
    residuals = []
    dims = [("x", solution.px, a.x_s, a.x_c)]
    if solution.py is not None and solution.mode == MODE_UPA_2:
        dims.append(("y", solution.py, a.y_s, a.y_c))
    elif solution.py is not None and a.bend == "y":
        dims = [("y", solution.py, a.y_s, a.y_c)]
    for axis, params, start, target in dims:
        ctx = solution.context.along(axis)
        residuals.append(abs(float(trajectory_ula(a.z_b, params, ctx)) - start))
        residuals.append(abs(float(trajectory_ula(a.z_r, params, ctx)) - target))
    return tuple(residuals)


def focusing_fallback(s: Scenario, ctx: Optional[AnalyticContext] = None) -> DesignSolution:
    """LoS design: focus on the Rx center in every dimension."""
    ctx = ctx or default_context(s)
    x_r, y_r, z_r = _relative_rx(s)
    py = focusing_params(y_r, z_r) if s.kind == UPA else None
    return DesignSolution(
        mode=MODE_NO_BEND,
        px=focusing_params(x_r, z_r),
        py=py,
        anchors=None,
        sigma=(None, None),
        context=ctx,
    )


def select_bending_dimension(s: Scenario, margins: Tuple[float, float]):
    """
    Pick the dimension needing the smaller deviation to clear the screen (ties go to x).

    :return: (dimension, Anchors), or ("none", None) when the screen misses the LoS axis.
    """
    if s.kind != UPA or len(s.blockages) != 1:
        raise GeometryError("Bending-dimension selection needs a UPA scenario with one screen")
    b = s.blockages[0]
    x_r, y_r, z_r = _relative_rx(s)
    z_b = b.z_b - s.z_tx
    if not 0.0 < z_b < z_r:
        raise GeometryError(f"Screen plane z_b={b.z_b} lies outside the link")
    x_p = s.tx.center[0] + x_r * z_b / z_r
    y_p = s.tx.center[1] + y_r * z_b / z_r
    if not b.contains(x_p, y_p):
        SLOG.info("Screen misses the LoS axis; no bending needed", x_p=x_p, y_p=y_p)
        return "none", None

    def clearance(p, lo, hi, margin):
        # Distance to the nearer finite boundary and the waypoint coordinate past it.
        up, down = hi - p, p - lo
        if up <= down:
            return up, hi + margin, BELOW
        return down, lo - margin, ABOVE

    d_px, x_s, side_x = clearance(x_p, b.x_min, b.x_max, margins[0])
    d_py, y_s, side_y = clearance(y_p, b.y_min, b.y_max, margins[1])
    if math.isinf(d_px) and math.isinf(d_py):
        raise InfeasibleDesignError("Screen is unbounded in both dimensions")
    x_s -= s.tx.center[0]
    y_s -= s.tx.center[1]
    x_los, y_los = x_p - s.tx.center[0], y_p - s.tx.center[1]

    if d_px <= d_py:
        _check_inside_grid(s, x_s, 0)
        x_c = x_s + _edge_slope(s, side_x, 0) * (z_r - z_b)
        anchors = Anchors(z_b, x_s, z_r, x_c, margins[0], y_s=y_los, y_c=y_r, bend="x")
        dimension = "x"
    else:
        _check_inside_grid(s, y_s, 1)
        y_c = y_s + _edge_slope(s, side_y, 1) * (z_r - z_b)
        anchors = Anchors(z_b, x_los, z_r, x_r, margins[1], y_s=y_s, y_c=y_c, bend="y")
        dimension = "y"
    SLOG.debug("Selected bending dimension", dimension=dimension, d_px=d_px, d_py=d_py)
    return dimension, anchors


def design_upa_mode1(
    s: Scenario, margins: Tuple[float, float], ctx: Optional[AnalyticContext] = None
) -> DesignSolution:
    """Airy phase on the bending dimension, focusing on the Rx projection in the other."""
    ctx = ctx or default_context(s)
    dimension, anchors = select_bending_dimension(s, margins)
    if dimension == "none":
        return focusing_fallback(s, ctx)
    x_r, y_r, z_r = _relative_rx(s)
    bent = solve_airy_ula(anchors.planar(dimension), ctx.along(dimension))
    check_lobe_offset(bent.params, anchors.planar(dimension), ctx.along(dimension))
    if dimension == "x":
        px, py = bent.params, focusing_params(y_r, z_r)
        sigma = (bent.sigma, None)
    else:
        px, py = focusing_params(x_r, z_r), bent.params
        sigma = (None, bent.sigma)
    return DesignSolution(
        mode=MODE_UPA_1, px=px, py=py, anchors=anchors, sigma=sigma, context=ctx
    )


def design_upa_mode2(
    s: Scenario, margins: Tuple[float, float], ctx: Optional[AnalyticContext] = None
) -> DesignSolution:
    """
    Independent closed-form Airy phase in both dimensions.

    The clear dimension's anchors lie on the LoS line. Its closed form still curves, and
    when that lobe would land more than the margin off its target at z_r the dimension
    is focused on the Rx projection instead (both anchors stay satisfied).
    """
    ctx = ctx or default_context(s)
    dimension, anchors = select_bending_dimension(s, margins)
    if dimension == "none":
        return focusing_fallback(s, ctx)
    clear = "y" if dimension == "x" else "x"
    bent = solve_airy_ula(anchors.planar(dimension), ctx.along(dimension))
    check_lobe_offset(bent.params, anchors.planar(dimension), ctx.along(dimension))
    solved = {dimension: bent, clear: solve_airy_ula(anchors.planar(clear), ctx.along(clear))}
    axis = 0 if clear == "x" else 1
    offset = float(lobe_offset(solved[clear].params.B, ctx.along(clear), anchors.z_r))
    if offset > margins[axis]:
        SLOG.info(
            "Focusing the clear dimension",
            dimension=clear,
            lobe_offset=offset,
            margin=margins[axis],
        )
        target = _relative_rx(s)[axis]
        solved[clear] = AirySolution(
            params=focusing_params(target, anchors.z_r), sigma=None, roots=solved[clear].roots
        )
    return DesignSolution(
        mode=MODE_UPA_2,
        px=solved["x"].params,
        py=solved["y"].params,
        anchors=anchors,
        sigma=(solved["x"].sigma, solved["y"].sigma),
        context=ctx,
    )


def design_ula(
    s: Scenario, margin: Optional[float] = None, ctx: Optional[AnalyticContext] = None
) -> DesignSolution:
    ctx = ctx or default_context(s)
    anchors = anchors_ula(s, margin)
    solved = solve_airy_ula(anchors, ctx)
    check_lobe_offset(solved.params, anchors, ctx)
    return DesignSolution(
        mode=MODE_ULA,
        px=solved.params,
        py=None,
        anchors=anchors,
        sigma=(solved.sigma, None),
        context=ctx,
    )


def design_scenario(
    s: Scenario, settings: DesignSettings = DesignSettings(), ctx: Optional[AnalyticContext] = None
) -> DesignSolution:
    """Dispatch on array kind and mode; unobstructed links get the focusing fallback."""
    ctx = ctx or default_context(s)
    if not s.blockages or blockage_ratio(s) == 0.0:
        SLOG.info("LoS tunnel is clear; using the focusing design")
        return focusing_fallback(s, ctx)
    margin_x, margin_y = settings.margins(s.wavelength)
    if s.kind == ULA:
        return design_ula(s, margin_x, ctx)
    if settings.mode == "mode2":
        return design_upa_mode2(s, (margin_x, margin_y), ctx)
    if settings.mode in ("auto", "mode1"):
        return design_upa_mode1(s, (margin_x, margin_y), ctx)
    raise GeometryError(f"Unknown UPA design mode {settings.mode!r}")
