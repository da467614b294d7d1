"""
Link evaluation: simulated channels, benchmark beamformers and spectral efficiency.

Channels are built column by column: each Tx element is excited alone, propagated through
the scenario and sampled at the Rx elements. Both channels of a comparison are divided by
the largest singular value of the unblocked one, so SE values are relative to a fixed
reference SNR `rho`.
"""
import concurrent.futures
import csv
import math
import os
from typing import Callable, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import structlog

from airylink.design import (
    DesignSettings,
    design_scenario,
    design_upa_mode1,
    design_upa_mode2,
)
from airylink.errors import (
    AiryLinkError,
    ConfigurationError,
    DegenerateChannelError,
    NumericalError,
)
from airylink.field_io import format_float, read_field_dump, write_field_dump
from airylink.numerics import ComplexField, Grid2D
from airylink.phase_synthesis import (
    AiryParams,
    airy_phase_1d,
    focusing_params,
    steering_params,
    ula_weights,
    upa_weights,
)
from airylink.propagation import field_at_points, inject_weights, propagate_blocked
from airylink.scenario import (
    BELOW,
    BlockageSpec,
    Scenario,
    ULA,
    UPA,
    blockage_ratio,
    build_grid,
    edge_for_ratio_ula,
    element_positions,
    scenario_hash,
)

SLOG = structlog.get_logger(__name__)

LOS = "LoS"
QUASI_LOS = "quasi-LoS"

LOS_DIGITAL = "los-digital"
QUASILOS_DIGITAL = "quasilos-digital"
STEERING = "steering"
FOCUSING = "focusing"
AIRY_CLOSED_FORM = "airy-closed-form"
AIRY_EXHAUSTIVE = "airy-exhaustive"
UPA_MODE1 = "upa-mode1"
UPA_MODE2 = "upa-mode2"

SCHEMES = (
    LOS_DIGITAL,
    QUASILOS_DIGITAL,
    STEERING,
    FOCUSING,
    AIRY_CLOSED_FORM,
    AIRY_EXHAUSTIVE,
    UPA_MODE1,
    UPA_MODE2,
)
ULA_SCHEMES = SCHEMES[:6]
UPA_SCHEMES = (
    LOS_DIGITAL,
    QUASILOS_DIGITAL,
    STEERING,
    FOCUSING,
    AIRY_EXHAUSTIVE,
    UPA_MODE1,
    UPA_MODE2,
)

SWEEP_HEADER = (
    "z_b",
    "edge",
    "R_bl",
    "scheme",
    "SE_bits",
    "Bx",
    "Fx",
    "thetax",
    "By",
    "Fy",
    "thetay",
    "status",
)


class ChannelMatrix(NamedTuple):
    """
    N_r x N_t channel. `scale` records the factor the raw simulated entries were divided by.
    """

    entries: np.ndarray
    state: str
    scale: float = 1.0

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape

    def validate(self) -> None:
        if not np.all(np.isfinite(self.entries)):
            raise NumericalError(f"{self.state} channel holds non-finite entries")

    def normalized(self, scale: float) -> "ChannelMatrix":
        return self._replace(entries=self.entries / scale, scale=self.scale * scale)

    def largest_singular_value(self) -> float:
        return float(np.linalg.norm(self.entries, 2))


class LinkBudget(NamedTuple):
    rho: float = 1e4

    def validate(self) -> None:
        if not self.rho > 0:
            raise ConfigurationError(f"Reference SNR rho must be positive, got {self.rho}")


class GridSpec(NamedTuple):
    """Inclusive arithmetic grid start, start + step, ..., stop."""

    start: float
    stop: float
    step: float

    def values(self) -> np.ndarray:
        if self.step <= 0:
            raise ConfigurationError(f"Grid step must be positive, got {self.step}")
        if self.stop < self.start:
            return np.empty(0)
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(count)

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(start=float(d["start"]), stop=float(d["stop"]), step=float(d["step"]))


class EvalSettings(NamedTuple):
    rho: float = 1e4
    schemes: Optional[Tuple[str, ...]] = None
    b_grid: GridSpec = GridSpec(-15.0, 15.0, 0.5)
    f_grid: GridSpec = GridSpec(0.3, 3.0, 0.1)
    theta_grid: GridSpec = GridSpec(-0.1, 0.1, 0.005)
    b_min_abs: float = 0.5
    cache_dir: Optional[str] = None

    @property
    def link_budget(self) -> LinkBudget:
        return LinkBudget(rho=self.rho)

    def schemes_for(self, kind: str) -> Tuple[str, ...]:
        applicable = ULA_SCHEMES if kind == ULA else UPA_SCHEMES
        if self.schemes is None:
            return applicable
        unknown = [name for name in self.schemes if name not in SCHEMES]
        if unknown:
            raise ConfigurationError(f"Unknown scheme(s) {unknown}; choose from {list(SCHEMES)}")
        return tuple(self.schemes)

    def search_grids(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        b_values = self.b_grid.values()
        b_values = b_values[np.abs(b_values) >= self.b_min_abs]
        return b_values, self.f_grid.values(), self.theta_grid.values()


def _receiver_points(s: Scenario) -> np.ndarray:
    positions = element_positions(s.rx)
    if s.kind == ULA:
        return positions[:, 0]
    return positions[:, :2]


def _channel_column(s: Scenario, grid, tx_position: np.ndarray, rx_points) -> np.ndarray:
    source = inject_weights(grid, tx_position[np.newaxis, :], [1.0], z=s.z_tx)
    received = propagate_blocked(source, s.z_tx, s.z_rx, s, check_aliasing=False)[-1]
    return field_at_points(received, rx_points)


def _next_power_of_two(n: int) -> int:
    return max(2, 1 << (int(n) - 1).bit_length())


def _cache_path(cache_dir: str, s: Scenario) -> str:
    return os.path.join(cache_dir, f"channel-{scenario_hash(s, 'channel')}.field")


def _write_channel_cache(path: str, entries: np.ndarray, s: Scenario) -> None:
    # Field dumps need power-of-two dims: zero-pad and record the true shape in the origin.
    n_r, n_t = entries.shape
    grid = Grid2D(
        nx=_next_power_of_two(n_r),
        ny=_next_power_of_two(n_t),
        dx=1.0,
        dy=1.0,
        origin_x=float(n_r),
        origin_y=float(n_t),
    )
    values = np.zeros(grid.shape, dtype=np.complex128)
    values[:n_r, :n_t] = entries
    write_field_dump(path, ComplexField(grid=grid, z=s.z_rx, values=values), s.wavelength)


def _read_channel_cache(path: str) -> np.ndarray:
    field, _ = read_field_dump(path)
    n_r, n_t = int(field.grid.origin_x), int(field.grid.origin_y)
    return field.values[:n_r, :n_t].copy()


def build_channel(
    s: Scenario, blocked: bool = True, jobs: int = 1, cache_dir: Optional[str] = None
) -> ChannelMatrix:
    """
    Simulated channel between the Tx and Rx elements.

    :param blocked: apply the scenario's screens; False propagates through free space.
    :param cache_dir: reuse (or store) the channel keyed by the scenario hash.
    """
    scenario = s if blocked else s.unblocked()
    state = QUASI_LOS if blocked and s.blockages else LOS
    path = _cache_path(cache_dir, scenario) if cache_dir else None
    if path and os.path.exists(path):
        SLOG.debug("Reusing cached channel", path=path)
        channel = ChannelMatrix(entries=_read_channel_cache(path), state=state)
        channel.validate()
        return channel

    grid = build_grid(scenario)
    tx_positions = element_positions(scenario.tx)
    rx_points = _receiver_points(scenario)
    column = lambda t: _channel_column(scenario, grid, tx_positions[t], rx_points)
    SLOG.info("Building channel", state=state, columns=len(tx_positions), jobs=jobs)
    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as executor:
            columns = list(executor.map(column, range(len(tx_positions))))
    else:
        columns = [column(t) for t in range(len(tx_positions))]
    channel = ChannelMatrix(entries=np.column_stack(columns), state=state)
    channel.validate()
    if path:
        _write_channel_cache(path, channel.entries, scenario)
    return channel


def normalize_channels(
    blocked: ChannelMatrix, unblocked: ChannelMatrix
) -> Tuple[ChannelMatrix, ChannelMatrix]:
    """Divide both channels by the unblocked channel's largest singular value."""
    reference = unblocked.largest_singular_value()
    if reference == 0.0:
        raise DegenerateChannelError("Unblocked channel is identically zero")
    return blocked.normalized(reference), unblocked.normalized(reference)


def _phase_normalized(vector: np.ndarray) -> np.ndarray:
    """Rotate so the first non-negligible entry is real and positive."""
    nonzero = np.flatnonzero(np.abs(vector) > 1e-12 * np.max(np.abs(vector)))
    anchor = vector[nonzero[0]]
    return vector * (abs(anchor) / anchor)


def mrt_mrc(h: ChannelMatrix) -> Tuple[np.ndarray, np.ndarray]:
    """Dominant right/left singular vectors: (w_t, w_r) with |w_r^H H w_t| = sigma_max."""
    entries = h.entries
    if not np.any(entries):
        raise DegenerateChannelError(f"{h.state} channel is identically zero")
    u, s, vh = np.linalg.svd(entries)
    return _phase_normalized(vh[0].conj()), _phase_normalized(u[:, 0])


def mrc(h: ChannelMatrix, w_t: np.ndarray) -> np.ndarray:
    """Receive combiner matched to the realized effective channel H w_t."""
    effective = h.entries @ w_t
    norm = np.linalg.norm(effective)
    if norm == 0.0:
        raise DegenerateChannelError("Transmit weights deliver no power to the receiver")
    return effective / norm


def unit_norm(weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.complex128)
    norm = np.linalg.norm(weights)
    if norm == 0.0:
        raise DegenerateChannelError("Weight vector is identically zero")
    return weights / norm


def spectral_efficiency(
    h: ChannelMatrix, w_t: np.ndarray, w_r: np.ndarray, lb: LinkBudget = LinkBudget()
) -> float:
    """Single-stream log2(1 + rho |w_r^H H w_t|²) in bit/s/Hz."""
    gain = np.vdot(w_r, h.entries @ w_t)
    return float(np.log2(1.0 + lb.rho * abs(gain) ** 2))


def focusing_weights(s: Scenario) -> np.ndarray:
    """Conjugate spherical phase from each Tx element to the Rx center."""
    k = 2.0 * math.pi / s.wavelength
    distances = np.linalg.norm(element_positions(s.tx) - np.asarray(s.rx.center), axis=1)
    return unit_norm(np.exp(-1j * k * distances))


def steering_weights(s: Scenario) -> np.ndarray:
    """Far-field response conjugate towards the Rx center direction."""
    dx = s.rx.center[0] - s.tx.center[0]
    dy = s.rx.center[1] - s.tx.center[1]
    px = steering_params(dx, s.link_distance)
    if s.kind == ULA:
        return unit_norm(ula_weights(s.tx, px, s.wavelength))
    py = steering_params(dy, s.link_distance)
    return unit_norm(upa_weights(s.tx, px, py, s.wavelength))


def airy_weights(s: Scenario, px: AiryParams, py: Optional[AiryParams] = None) -> np.ndarray:
    if s.kind == ULA:
        return unit_norm(ula_weights(s.tx, px, s.wavelength))
    return unit_norm(upa_weights(s.tx, px, py, s.wavelength))


class SchemeResult(NamedTuple):
    scheme: str
    se: float
    px: Optional[AiryParams] = None
    py: Optional[AiryParams] = None


class SearchResult(NamedTuple):
    params: AiryParams
    se: float
    py: Optional[AiryParams] = None


def _search_dimension(
    coords: np.ndarray,
    fixed: np.ndarray,
    h_blocked: ChannelMatrix,
    grids: Tuple[np.ndarray, np.ndarray, np.ndarray],
    wavelength: float,
    lb: LinkBudget,
) -> SearchResult:
    """
    Best (B, F, theta) for the phase over `coords`, each weight multiplied by `fixed`.

    Vectorized over F and theta; ties resolve to the lexicographically smallest triple.
    """
    b_values, f_values, theta_values = grids
    inv_f = np.where(np.isinf(f_values), 0.0, 1.0 / f_values)
    quadratic = (math.pi / wavelength) * inv_f[:, np.newaxis] * coords ** 2
    linear = (2.0 * math.pi / wavelength) * np.sin(theta_values)[:, np.newaxis] * coords
    gains = np.empty((b_values.size, f_values.size, theta_values.size))
    for i, B in enumerate(b_values):
        cubic = (2.0 * math.pi * B) ** 3 * coords ** 3 / 3.0
        phase = cubic - quadratic[:, np.newaxis, :] - linear[np.newaxis, :, :]
        weights = np.exp(1j * phase) * fixed
        received = weights @ h_blocked.entries.T
        # With MRC the beamforming gain is the received power ||H w_t||².
        gains[i] = np.sum(np.abs(received) ** 2, axis=-1)
    se = np.log2(1.0 + lb.rho * gains)
    i, j, l = np.unravel_index(int(np.argmax(se)), se.shape)
    best = AiryParams(B=float(b_values[i]), F=float(f_values[j]), theta=float(theta_values[l]))
    return SearchResult(params=best, se=float(se[i, j, l]))


def exhaustive_airy_search(
    s: Scenario,
    h_blocked: ChannelMatrix,
    b_values: Sequence[float],
    f_values: Sequence[float],
    theta_values: Sequence[float],
    lb: LinkBudget = LinkBudget(),
) -> SearchResult:
    """
    Brute-force the (B, F, theta) grid against the quasi-LoS channel with MRC receive.

    UPA links are searched one dimension at a time: x with y focused on the Rx projection,
    then y with the best x held. The y pass is kept only if it improves on the x pass.
    Ties resolve to the lexicographically smallest triple.
    """
    grids = tuple(np.unique(np.asarray(v, dtype=float)) for v in (b_values, f_values, theta_values))
    if not all(g.size for g in grids):
        raise ConfigurationError("Exhaustive search grids must be non-empty")

    positions = element_positions(s.tx)
    x0 = positions[:, 0] - s.tx.center[0]
    scale = np.full(len(x0), 1.0 / math.sqrt(len(x0)), dtype=complex)
    lam = s.wavelength
    if s.kind == ULA:
        found = _search_dimension(x0, scale, h_blocked, grids, lam, lb)
        SLOG.debug("Exhaustive search done", best=found.params.to_dict(), se=found.se)
        return found

    y0 = positions[:, 1] - s.tx.center[1]
    py = focusing_params(s.rx.center[1] - s.tx.center[1], s.link_distance)
    along_x = _search_dimension(
        x0, scale * np.exp(1j * airy_phase_1d(y0, py, lam)), h_blocked, grids, lam, lb
    )
    along_y = _search_dimension(
        y0, scale * np.exp(1j * airy_phase_1d(x0, along_x.params, lam)), h_blocked, grids, lam, lb
    )
    if along_y.se > along_x.se:
        found = SearchResult(params=along_x.params, se=along_y.se, py=along_y.params)
    else:
        found = along_x._replace(py=py)
    SLOG.debug(
        "Exhaustive search done",
        best_x=found.params.to_dict(),
        best_y=found.py.to_dict(),
        se=found.se,
    )
    return found


def scheme_weights(
    s: Scenario,
    scheme: str,
    h_blocked: ChannelMatrix,
    h_unblocked: ChannelMatrix,
    design: DesignSettings = DesignSettings(),
    settings: EvalSettings = EvalSettings(),
) -> Tuple[np.ndarray, np.ndarray, Optional[AiryParams], Optional[AiryParams]]:
    """
    Transmit weights of `scheme` plus the MRC receive combiner on the quasi-LoS channel.

    :return: (w_t, w_r, px, py); px/py are the phase parameters behind analog schemes.
    """
    px = py = None
    margins = design.margins(s.wavelength)
    if scheme == LOS_DIGITAL:
        w_t, _ = mrt_mrc(h_unblocked)
    elif scheme == QUASILOS_DIGITAL:
        w_t, _ = mrt_mrc(h_blocked)
    elif scheme == STEERING:
        w_t = steering_weights(s)
        px = steering_params(s.rx.center[0] - s.tx.center[0], s.link_distance)
        if s.kind == UPA:
            py = steering_params(s.rx.center[1] - s.tx.center[1], s.link_distance)
    elif scheme == FOCUSING:
        w_t = focusing_weights(s)
        px = focusing_params(s.rx.center[0] - s.tx.center[0], s.link_distance)
        if s.kind == UPA:
            py = focusing_params(s.rx.center[1] - s.tx.center[1], s.link_distance)
    elif scheme == AIRY_CLOSED_FORM:
        solution = design_scenario(s, design)
        px, py = solution.px, solution.py
        w_t = airy_weights(s, px, py)
    elif scheme == AIRY_EXHAUSTIVE:
        found = exhaustive_airy_search(
            s, h_blocked, *settings.search_grids(), lb=settings.link_budget
        )
        px, py = found.params, found.py
        w_t = airy_weights(s, px, py)
    elif scheme in (UPA_MODE1, UPA_MODE2):
        if s.kind != UPA:
            raise ConfigurationError(f"Scheme {scheme!r} needs a UPA scenario")
        designer = design_upa_mode1 if scheme == UPA_MODE1 else design_upa_mode2
        solution = designer(s, margins)
        px, py = solution.px, solution.py
        w_t = airy_weights(s, px, py)
    else:
        raise ConfigurationError(f"Unknown scheme {scheme!r}; choose from {list(SCHEMES)}")
    w_t = unit_norm(w_t)
    return w_t, mrc(h_blocked, w_t), px, py


def evaluate_schemes(
    s: Scenario,
    schemes: Sequence[str],
    h_blocked: ChannelMatrix,
    h_unblocked: ChannelMatrix,
    design: DesignSettings = DesignSettings(),
    settings: EvalSettings = EvalSettings(),
) -> List[Tuple[str, Optional[SchemeResult], Optional[AiryLinkError]]]:
    """SE of every scheme on the (normalized) quasi-LoS channel; failures are returned."""
    results = []
    for scheme in schemes:
        try:
            w_t, w_r, px, py = scheme_weights(s, scheme, h_blocked, h_unblocked, design, settings)
            se = spectral_efficiency(h_blocked, w_t, w_r, settings.link_budget)
            results.append((scheme, SchemeResult(scheme, se, px, py), None))
        except AiryLinkError as err:
            SLOG.warning("Scheme failed", scheme=scheme, error=type(err).__name__, message=str(err))
            results.append((scheme, None, err))
    return results


class SweepFamily(NamedTuple):
    """
    Blockage positions to sweep: every z_b crossed with every edge (or target ratio).

    For UPA links the obstacle edge moves along x with its y extent fixed at `y_edge`.
    """

    z_b: Tuple[float, ...]
    edges: Tuple[float, ...] = ()
    ratios: Tuple[float, ...] = ()
    side: str = BELOW
    y_edge: float = math.inf
    attenuation: float = 0.0

    def validate(self) -> None:
        if self.edges and self.ratios:
            raise ConfigurationError("Sweep family takes either edges or ratios, not both")

    def blockages(self, s: Scenario) -> List[BlockageSpec]:
        self.validate()
        out = []
        for z_b in self.z_b:
            if self.ratios:
                edges = [edge_for_ratio_ula(s, z_b, r, self.side) for r in self.ratios]
            else:
                edges = list(self.edges)
            for edge in edges:
                b = BlockageSpec.half_plane(z_b, edge, self.side, self.attenuation)
                if s.kind == UPA:
                    b = b._replace(y_max=self.y_edge)
                out.append(b)
        return out


class SweepRow(NamedTuple):
    z_b: float
    edge: float
    R_bl: Optional[float]
    scheme: str
    SE_bits: Optional[float]
    px: Optional[AiryParams] = None
    py: Optional[AiryParams] = None
    status: str = "ok"

    def to_csv_row(self) -> List[str]:
        fmt = lambda v: "" if v is None else format_float(v)
        params = []
        for p in (self.px, self.py):
            params.extend(["", "", ""] if p is None else [fmt(p.B), fmt(p.F), fmt(p.theta)])
        return [fmt(self.z_b), fmt(self.edge), fmt(self.R_bl), self.scheme, fmt(self.SE_bits)] + (
            params + [self.status]
        )


def _error_status(err: Exception) -> str:
    return f"error: {type(err).__name__}: {err}"


def _sweep_point(
    s: Scenario,
    b: BlockageSpec,
    schemes: Sequence[str],
    h_unblocked_raw: ChannelMatrix,
    design: DesignSettings,
    settings: EvalSettings,
) -> List[SweepRow]:
    point = s.with_blockages([b])
    try:
        ratio = blockage_ratio(point)
        h_blocked_raw = build_channel(point, blocked=True, cache_dir=settings.cache_dir)
        h_blocked, h_unblocked = normalize_channels(h_blocked_raw, h_unblocked_raw)
    except AiryLinkError as err:
        SLOG.warning("Sweep point failed", z_b=b.z_b, edge=b.edge, error=type(err).__name__)
        status = _error_status(err)
        return [SweepRow(b.z_b, b.edge, None, scheme, None, status=status) for scheme in schemes]
    rows = []
    for scheme, result, err in evaluate_schemes(
        point, schemes, h_blocked, h_unblocked, design, settings
    ):
        if err is not None:
            rows.append(SweepRow(b.z_b, b.edge, ratio, scheme, None, status=_error_status(err)))
        else:
            rows.append(SweepRow(b.z_b, b.edge, ratio, scheme, result.se, result.px, result.py))
    SLOG.info("Sweep point done", z_b=b.z_b, edge=b.edge, R_bl=round(ratio, 4))
    return rows


def sweep(
    s: Scenario,
    family: SweepFamily,
    design: DesignSettings = DesignSettings(),
    settings: EvalSettings = EvalSettings(),
    jobs: int = 1,
) -> List[SweepRow]:
    """
    One row per (blockage position, scheme), in family order regardless of completion order.
    """
    blockages = family.blockages(s.unblocked())
    schemes = settings.schemes_for(s.kind)
    if not blockages:
        return []
    h_unblocked = build_channel(s, blocked=False, jobs=jobs, cache_dir=settings.cache_dir)
    work: Callable = lambda b: _sweep_point(s, b, schemes, h_unblocked, design, settings)
    if jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as executor:
            per_point = list(executor.map(work, blockages))
    else:
        per_point = [work(b) for b in blockages]
    return [row for rows in per_point for row in rows]


def write_sweep_csv(handle, rows: Iterable[SweepRow]) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for row in rows:
        writer.writerow(row.to_csv_row())
