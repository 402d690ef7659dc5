"""Plane-wave excitation and harmonic far-field radiation of a modulated skin.

Conventions (time factor e^{+j w0 t}):
  * A direction (theta, phi) maps to cosines u = sin(theta)cos(phi),
    v = sin(theta)sin(phi); the visible region is u^2 + v^2 <= 1.
  * The incident wave travels toward the aperture, so its excitation phase at
    a cell barycenter r is e^{-j k0 k_inc . r} = e^{+j k0 (u_s x + v_s y)}
    with (u_s, v_s) the source direction cosines.
  * The reflected surface field is the per-cell harmonic reflection tensor
    applied to the incident (TE, TM) Jones vector. Radiation uses the
    equivalent-current combination z x (k x E) - E projected on the aperture
    tangent plane, with k the unit vector from the aperture back toward the
    source; that pairing gives the physical (1 + cos(theta)) obliquity, e.g.
    a fully-on ideal skin at normal incidence radiates maximally at broadside
    instead of not at all.
  * Patterns carry the spherical-spreading factor stripped: values are V/m
    referred to unit distance, two tangential components (x, y).
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import EmsGeometry
from .modulation import PulseSchedule, ReflectionStates, harmonic_scalar_coefficients, harmonic_tensors

FREE_SPACE_IMPEDANCE = 376.730313668

# Ratio floor in squared-field units: keeps the monopulse ratio finite when a
# schedule radiates no first harmonic at all.
XI_FLOOR = 1e-30

_Z_AXIS = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class PlaneWaveIncidence:
    """Locally plane incident wave: direction, amplitude, and polarization.

    The Jones vector lives in the (TE, TM) basis of the incidence plane and
    must have unit norm; amplitude_v_m carries the field strength.
    """

    theta_deg: float
    phi_deg: float = 0.0
    amplitude_v_m: float = 1.0
    jones: tuple = (1.0 + 0.0j, 0.0 + 0.0j)

    def __post_init__(self):
        if not (0.0 <= self.theta_deg < 90.0):
            raise ValueError("incidence theta_deg must lie in [0, 90)")
        if not (self.amplitude_v_m > 0.0):
            raise ValueError("incidence amplitude_v_m must be positive")
        j = np.asarray(self.jones, dtype=complex)
        if j.shape != (2,):
            raise ValueError("jones must have exactly 2 components (TE, TM)")
        if abs(np.linalg.norm(j) - 1.0) > 1e-9:
            raise ValueError("jones vector must have unit norm")
        object.__setattr__(self, "jones", (complex(j[0]), complex(j[1])))

    @cached_property
    def source_direction(self) -> np.ndarray:
        """Unit vector from the aperture origin toward the source."""
        th = np.deg2rad(self.theta_deg)
        ph = np.deg2rad(self.phi_deg)
        d = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        d.setflags(write=False)
        return d

    @cached_property
    def wave_unit_vector(self) -> np.ndarray:
        """Unit propagation vector of the incoming wave (toward the aperture)."""
        k = -self.source_direction
        k.setflags(write=False)
        return k

    @property
    def u(self) -> float:
        return float(self.source_direction[0])

    @property
    def v(self) -> float:
        return float(self.source_direction[1])

    @cached_property
    def te_axis(self) -> np.ndarray:
        """TE (perpendicular) polarization axis: phi-hat of the source direction."""
        ph = np.deg2rad(self.phi_deg)
        e = np.array([-np.sin(ph), np.cos(ph), 0.0])
        e.setflags(write=False)
        return e

    @cached_property
    def tm_axis(self) -> np.ndarray:
        """TM (parallel) polarization axis: theta-hat of the source direction."""
        th = np.deg2rad(self.theta_deg)
        ph = np.deg2rad(self.phi_deg)
        e = np.array([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)])
        e.setflags(write=False)
        return e

    @cached_property
    def polarization_matrix(self) -> np.ndarray:
        """2x2 map from reflected (TE, TM) components to tangential (x, y) field.

        Column i is the tangential projection (with sign) of
        z x (k_out x e_i) - e_i for basis axis e_i, where k_out points from the
        aperture toward the source. Real-valued.
        """
        cols = []
        for e in (self.te_axis, self.tm_axis):
            b = np.cross(_Z_AXIS, np.cross(self.source_direction, e)) - e
            cols.append(-b[:2])
        m = np.column_stack(cols)
        m.setflags(write=False)
        return m


def incident_cell_excitation(incidence: PlaneWaveIncidence, geometry: EmsGeometry) -> np.ndarray:
    """Incident Jones vector sampled at every cell barycenter.

    Returns:
        Complex array (n_cells, 2): amplitude * jones * e^{+j k0 (u_s x + v_s y)}
        per cell, cells ordered row-major in (p, q).
    """
    phase = incident_phase_factors(incidence, geometry)
    jones = np.asarray(incidence.jones)
    return incidence.amplitude_v_m * phase[:, None] * jones[None, :]


def incident_phase_factors(incidence: PlaneWaveIncidence, geometry: EmsGeometry) -> np.ndarray:
    """Per-cell unit-magnitude excitation phases, shape (n_cells,)."""
    xy = geometry.cell_xy_m
    return np.exp(1j * geometry.k0 * (incidence.u * xy[:, 0] + incidence.v * xy[:, 1]))


def cell_factor(geometry: EmsGeometry, u, v):
    """Aperture integral of one square cell toward direction cosines (u, v).

    Separable closed form: area * sinc(k0 u a / 2) * sinc(k0 v a / 2) with
    sinc(x) = sin(x)/x. Accepts scalars or arrays (broadcast).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    half = 0.5 * geometry.k0 * geometry.cell_edge_m
    out = geometry.cell_area_m2 * np.sinc(half * u / np.pi) * np.sinc(half * v / np.pi)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class DirectionGrid:
    """Uniform direction-cosine grid over [-1, 1]^2 with visibility flags."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("u", "v"):
            a = np.array(getattr(self, name), dtype=float)
            if a.ndim != 1 or a.size < 2:
                raise ValueError(f"grid {name} axis needs at least 2 samples")
            steps = np.diff(a)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-12, atol=1e-12):
                raise ValueError(f"grid {name} axis must be strictly increasing and uniform")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def uniform(cls, n: int) -> "DirectionGrid":
        """n x n grid spanning [-1, 1] on both axes (odd n includes 0)."""
        if n < 2:
            raise ValueError("grid resolution must be >= 2")
        axis = np.linspace(-1.0, 1.0, n)
        return cls(u=axis, v=axis)

    @property
    def shape(self):
        return (self.u.size, self.v.size)

    @property
    def du(self) -> float:
        return float(self.u[1] - self.u[0])

    @property
    def dv(self) -> float:
        return float(self.v[1] - self.v[0])

    @property
    def cell_weight(self) -> float:
        """Quadrature weight of one grid cell in (u, v) space."""
        return self.du * self.dv

    @cached_property
    def visible(self) -> np.ndarray:
        """Boolean (nu, nv) mask of directions inside the unit disc."""
        uu, vv = np.meshgrid(self.u, self.v, indexing="ij")
        m = uu**2 + vv**2 <= 1.0
        m.setflags(write=False)
        return m

    def nearest_index(self, u: float, v: float):
        """Indices of the grid node nearest to (u, v)."""
        iu = int(np.clip(np.rint((u - self.u[0]) / self.du), 0, self.u.size - 1))
        iv = int(np.clip(np.rint((v - self.v[0]) / self.dv), 0, self.v.size - 1))
        return iu, iv


@dataclass(frozen=True, eq=False)
class HarmonicPattern:
    """Far-field samples of one harmonic over a direction grid.

    field has shape (nu, nv, 2): tangential (x, y) components in V/m at unit
    distance, zeroed outside the visible disc.
    """

    harmonic: int
    omega_rad_s: float
    grid: DirectionGrid
    field: np.ndarray

    @property
    def power(self) -> np.ndarray:
        """|E|^2 summed over both components, shape (nu, nv)."""
        return np.abs(self.field[..., 0]) ** 2 + np.abs(self.field[..., 1]) ** 2


def power_pattern(pattern: HarmonicPattern) -> np.ndarray:
    """Total radiated power density samples of a pattern, shape (nu, nv)."""
    return pattern.power


def power_db(power, reference: float, floor_db: float = -400.0):
    """Decibels of power relative to a positive reference, floored.

    The floor keeps exact zeros (invisible or structurally nulled samples)
    finite and file-serializable.
    """
    if not (reference > 0.0):
        raise ValueError("dB reference power must be positive")
    p = np.asarray(power, dtype=float)
    lin_floor = reference * 10.0 ** (floor_db / 10.0)
    out = 10.0 * np.log10(np.maximum(p, lin_floor) / reference)
    return out[()] if out.ndim == 0 else out


class FieldEngine:
    """Precomputed radiation tables for one (geometry, grid) pair.

    All tables are computed once and never mutated afterwards, so one engine
    may be shared freely across threads. ``cache_steering=True`` retains the
    (n_visible, n_cells) steering matrix for repeated evaluation (synthesis);
    with False the matrix is streamed in blocks (large one-shot grids).
    """

    _BLOCK = 8192

    def __init__(self, geometry: EmsGeometry, grid: DirectionGrid, cache_steering: bool = True):
        self.geometry = geometry
        self.grid = grid
        vis = grid.visible
        self.vis_iu, self.vis_iv = np.nonzero(vis)
        self.vis_u = grid.u[self.vis_iu]
        self.vis_v = grid.v[self.vis_iv]
        self.prefactor = 1j * geometry.k0 / (4.0 * np.pi)
        # |prefactor| * cell integral per visible direction, real
        self.cell_gain = np.abs(self.prefactor) * np.asarray(cell_factor(geometry, self.vis_u, self.vis_v))
        self._steering = self._steering_block(self.vis_u, self.vis_v) if cache_steering else None

    @property
    def n_visible(self) -> int:
        return self.vis_u.size

    def _steering_block(self, u, v) -> np.ndarray:
        xy = self.geometry.cell_xy_m
        k0 = self.geometry.k0
        return np.exp(1j * k0 * (np.asarray(u)[:, None] * xy[None, :, 0] + np.asarray(v)[:, None] * xy[None, :, 1]))

    def _apply_steering(self, weights: np.ndarray) -> np.ndarray:
        """Sum weights over cells toward every visible direction: (D, ...)"""
        if self._steering is not None:
            return self._steering @ weights
        parts = []
        for lo in range(0, self.n_visible, self._BLOCK):
            hi = min(lo + self._BLOCK, self.n_visible)
            parts.append(self._steering_block(self.vis_u[lo:hi], self.vis_v[lo:hi]) @ weights)
        return np.concatenate(parts, axis=0)

    def _cell_weights(self, schedule: PulseSchedule, states: ReflectionStates,
                      incidence: PlaneWaveIncidence, h: int) -> np.ndarray:
        """Per-cell tangential source vectors (n_cells, 2) for harmonic h."""
        g = incident_phase_factors(incidence, self.geometry) * incidence.amplitude_v_m
        jones = np.asarray(incidence.jones)
        m2 = incidence.polarization_matrix
        scal = states.scalar_pair()
        if scal is not None:
            coef = harmonic_scalar_coefficients(schedule.rise, schedule.duty, h, *scal).ravel()
            return (coef * g)[:, None] * (m2 @ jones)[None, :]
        tens = harmonic_tensors(states, schedule, h).reshape(-1, 2, 2)
        return g[:, None] * np.einsum("ij,njk,k->ni", m2, tens, jones)

    def pattern(self, schedule: PulseSchedule, states: ReflectionStates,
                incidence: PlaneWaveIncidence, h: int) -> HarmonicPattern:
        """Far-field pattern of harmonic h over the engine's grid."""
        w = self._cell_weights(schedule, states, incidence, h)
        f_vis = self._apply_steering(w)
        f_vis *= (self.prefactor * np.asarray(cell_factor(self.geometry, self.vis_u, self.vis_v)))[:, None]
        nu, nv = self.grid.shape
        out = np.zeros((nu, nv, 2), dtype=complex)
        out[self.vis_iu, self.vis_iv, :] = f_vis
        omega = self.geometry.omega0 + h * 2.0 * np.pi / schedule.period_s
        return HarmonicPattern(harmonic=h, omega_rad_s=omega, grid=self.grid, field=out)

    def field_at(self, u, v, schedule: PulseSchedule, states: ReflectionStates,
                 incidence: PlaneWaveIncidence, h: int) -> np.ndarray:
        """Exact-direction samples, shape (n_directions, 2) complex.

        Directions must lie inside the visible disc.
        """
        u = np.atleast_1d(np.asarray(u, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if np.any(u**2 + v**2 > 1.0 + 1e-12):
            raise ValueError("direction outside the visible disc")
        w = self._cell_weights(schedule, states, incidence, h)
        f = self._steering_block(u, v) @ w
        f *= (self.prefactor * np.asarray(cell_factor(self.geometry, u, v)))[:, None]
        return f

    def batched_scalar_powers(self, coef_batch: np.ndarray, incidence: PlaneWaveIncidence) -> np.ndarray:
        """Power samples for many schedules at once (identity-multiple states).

        Args:
            coef_batch: per-cell scalar harmonic coefficients, shape
                (n_cells, n_schedules).
            incidence: shared excitation.

        Returns:
            (n_visible, n_schedules) real powers, |E|^2 summed over components.
        """
        g = incident_phase_factors(incidence, self.geometry) * incidence.amplitude_v_m
        jones = np.asarray(incidence.jones)
        pol2 = float(np.sum(np.abs(incidence.polarization_matrix @ jones) ** 2))
        a = self._apply_steering(coef_batch * g[:, None])
        return (self.cell_gain**2 * pol2)[:, None] * np.abs(a) ** 2


def harmonic_far_field(geometry: EmsGeometry, schedule: PulseSchedule, states: ReflectionStates,
                       incidence: PlaneWaveIncidence, grid: DirectionGrid, h: int) -> HarmonicPattern:
    """One-shot pattern computation (streams the steering matrix)."""
    if schedule.shape != (geometry.rows, geometry.cols):
        raise ValueError("schedule shape does not match the geometry")
    return FieldEngine(geometry, grid, cache_steering=False).pattern(schedule, states, incidence, h)


def field_samples(geometry: EmsGeometry, schedule: PulseSchedule, states: ReflectionStates,
                  incidence: PlaneWaveIncidence, u, v, h: int) -> np.ndarray:
    """Exact-direction field samples without building a full grid."""
    if schedule.shape != (geometry.rows, geometry.cols):
        raise ValueError("schedule shape does not match the geometry")
    engine = FieldEngine(geometry, DirectionGrid.uniform(2), cache_steering=False)
    return engine.field_at(u, v, schedule, states, incidence, h)


@dataclass(frozen=True)
class MonopulseRatio:
    xi: float
    p_sigma: float
    p_delta: float
    floored: bool


def ratio_from_powers(p_sigma: float, p_delta: float) -> MonopulseRatio:
    """Sum/difference power ratio with a tiny floor on the denominator."""
    floored = p_delta < XI_FLOOR
    return MonopulseRatio(
        xi=float(p_sigma) / max(float(p_delta), XI_FLOOR),
        p_sigma=float(p_sigma),
        p_delta=float(p_delta),
        floored=bool(floored),
    )


def monopulse_ratio(pattern_sigma: HarmonicPattern, pattern_delta: HarmonicPattern,
                    u: float, v: float) -> MonopulseRatio:
    """Ratio of carrier to first-harmonic power at the grid node nearest (u, v).

    Both patterns must share one grid; the requested direction must lie inside
    the visible disc and within half a grid cell of a visible node.
    """
    grid = pattern_sigma.grid
    if grid is not pattern_delta.grid and (
        not np.array_equal(grid.u, pattern_delta.grid.u) or not np.array_equal(grid.v, pattern_delta.grid.v)
    ):
        raise ValueError("patterns sampled on different grids")
    if u**2 + v**2 > 1.0:
        raise ValueError("direction outside the visible disc")
    iu, iv = grid.nearest_index(u, v)
    if abs(grid.u[iu] - u) > 0.5 * grid.du + 1e-12 or abs(grid.v[iv] - v) > 0.5 * grid.dv + 1e-12:
        raise ValueError("direction outside the sampled grid")
    if not grid.visible[iu, iv]:
        raise ValueError("nearest grid node is not visible")
    return ratio_from_powers(pattern_sigma.power[iu, iv], pattern_delta.power[iu, iv])
