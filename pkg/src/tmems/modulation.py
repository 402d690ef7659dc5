"""Periodic on/off pulse schedules and their harmonic reflection algebra.

Each cell switches its reflection tensor between an on state and an off state
once per modulation period T. A pulse is described in normalized time by its
rise instant c in [0, 1) and duty tau in [0, 1]; the cell is "on" over
[c, c + tau) with wrap-around at 1. The Fourier series of the indicator gives
one complex coefficient per harmonic h, and the cell's effective reflection
tensor at harmonic h is the on/off mixture weighted by that coefficient and
its complement.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ConstraintError(ValueError):
    """A structural schedule constraint cannot be applied to this geometry."""


class ControlMode(str, Enum):
    """How many independent pulse generators drive the skin."""

    FULL = "full"
    DELTA = "delta"
    COLWISE = "colwise"
    COLWISE_DELTA = "colwise-delta"


def pulse_fourier_coefficients(rise, duty, h: int):
    """Closed-form Fourier coefficient of the on/off indicator at harmonic h.

    Args:
        rise: normalized rise instant(s) in [0, 1), scalar or array.
        duty: normalized on-fraction(s) in [0, 1], scalar or array.
        h: harmonic index (any integer).

    Returns:
        Complex coefficient(s) u^h, same shape as the broadcast inputs.
        u^0 equals the duty; for h != 0,
        u^h = (e^{-j2*pi*h*(c+tau)} - e^{-j2*pi*h*c}) / (-j*2*pi*h).
        Duty 0 or 1 short-circuits to an exact 0 for h != 0: a permanently
        on/off cell has no sidebands and the generic expression would leave
        transcendental rounding residue.
    """
    rise = np.asarray(rise, dtype=float)
    duty = np.asarray(duty, dtype=float)
    if np.any(rise < 0.0) or np.any(rise >= 1.0):
        raise ValueError("rise must lie in [0, 1)")
    if np.any(duty < 0.0) or np.any(duty > 1.0):
        raise ValueError("duty must lie in [0, 1]")
    if h == 0:
        out = duty.astype(complex)
        return out[()] if out.ndim == 0 else out
    static = (duty == 0.0) | (duty == 1.0)
    w = -2j * np.pi * h
    u = (np.exp(w * (rise + duty)) - np.exp(w * rise)) / w
    u = np.where(static, 0.0 + 0.0j, u)
    return u[()] if u.ndim == 0 else u


def complement_fourier_coefficients(u_h, h: int):
    """Coefficient of the complementary (off) indicator: delta_{h0} - u^h."""
    u_h = np.asarray(u_h)
    out = (1.0 if h == 0 else 0.0) - u_h
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class ReflectionStates:
    """On/off reflection tensors in the (TE, TM) basis, each 2x2 complex.

    Passivity is enforced on construction: no singular value may exceed 1
    (tolerance 1e-9).
    """

    gamma_on: np.ndarray
    gamma_off: np.ndarray

    def __post_init__(self):
        for name in ("gamma_on", "gamma_off"):
            t = np.asarray(getattr(self, name), dtype=complex)
            if t.shape != (2, 2):
                raise ValueError(f"{name} must be a 2x2 tensor")
            if np.linalg.svd(t, compute_uv=False).max() > 1.0 + 1e-9:
                raise ValueError(f"{name} is not passive (singular value > 1)")
            t = t.copy()
            t.setflags(write=False)
            object.__setattr__(self, name, t)

    @classmethod
    def ideal(cls) -> "ReflectionStates":
        """Lossless phase-opposed states: +identity on, -identity off."""
        eye = np.eye(2, dtype=complex)
        return cls(gamma_on=eye, gamma_off=-eye)

    def scalar_pair(self):
        """(on, off) scalars when both tensors are multiples of the identity.

        Returns None when either state has off-diagonal terms or unequal
        diagonals; callers then fall back to full tensor algebra.
        """
        out = []
        for t in (self.gamma_on, self.gamma_off):
            if t[0, 1] != 0 or t[1, 0] != 0 or t[0, 0] != t[1, 1]:
                return None
            out.append(complex(t[0, 0]))
        return tuple(out)


@dataclass(frozen=True, eq=False)
class PulseSchedule:
    """Per-cell pulse timing for a whole skin: rise and duty, shape (rows, cols)."""

    period_s: float
    rise: np.ndarray
    duty: np.ndarray

    def __post_init__(self):
        if not (self.period_s > 0.0):
            raise ValueError("period_s must be positive")
        rise = np.array(self.rise, dtype=float)
        duty = np.array(self.duty, dtype=float)
        if rise.ndim != 2 or rise.shape != duty.shape:
            raise ValueError("rise and duty must be 2-D arrays of equal shape")
        if np.any(rise < 0.0) or np.any(rise >= 1.0):
            raise ValueError("rise values must lie in [0, 1)")
        if np.any(duty < 0.0) or np.any(duty > 1.0):
            raise ValueError("duty values must lie in [0, 1]")
        rise.setflags(write=False)
        duty.setflags(write=False)
        object.__setattr__(self, "rise", rise)
        object.__setattr__(self, "duty", duty)

    @property
    def shape(self):
        return self.rise.shape

    def fourier_coefficients(self, h: int) -> np.ndarray:
        """Per-cell indicator coefficients u^h_pq, shape (rows, cols) complex."""
        return np.asarray(pulse_fourier_coefficients(self.rise, self.duty, h))


def harmonic_reflection_tensor(states: ReflectionStates, rise: float, duty: float, h: int) -> np.ndarray:
    """Effective 2x2 reflection tensor of one cell at harmonic h.

    Gamma^h = Gamma_on * u^h + Gamma_off * (delta_{h0} - u^h).
    """
    u = pulse_fourier_coefficients(rise, duty, h)
    return states.gamma_on * u + states.gamma_off * complement_fourier_coefficients(u, h)


def harmonic_tensors(states: ReflectionStates, schedule: PulseSchedule, h: int) -> np.ndarray:
    """Per-cell harmonic reflection tensors, shape (rows, cols, 2, 2)."""
    u = schedule.fourier_coefficients(h)
    uc = np.asarray(complement_fourier_coefficients(u, h))
    return (
        u[..., None, None] * states.gamma_on[None, None, :, :]
        + uc[..., None, None] * states.gamma_off[None, None, :, :]
    )


def harmonic_scalar_coefficients(rise, duty, h: int, gamma_on: complex, gamma_off: complex):
    """Scalar harmonic coefficients for identity-multiple states (fast path).

    With Gamma_on = gon*I and Gamma_off = goff*I the tensor collapses to
    (gon*u^h + goff*(delta_{h0} - u^h)) * I; this returns that scalar with the
    input broadcast shape. For the ideal +/-I pair it is 2*u^h - delta_{h0}.
    """
    u = np.asarray(pulse_fourier_coefficients(rise, duty, h))
    return gamma_on * u + gamma_off * np.asarray(complement_fourier_coefficients(u, h))


def mirror_rise(rise):
    """Rise instants shifted by half a period, wrapped to [0, 1)."""
    return np.mod(np.asarray(rise, dtype=float) + 0.5, 1.0)


def apply_delta_constraint(period_s: float, half_rise, half_duty) -> PulseSchedule:
    """Build a full schedule whose mirrored rows run half a period out of phase.

    Args:
        period_s: modulation period in seconds.
        half_rise: rise for rows 1..P/2, shape (P/2, cols).
        half_duty: duty for the same rows, same shape.

    Returns:
        PulseSchedule of shape (P, cols) where row P-p+1 copies row p's duty
        and shifts its rise by 0.5 (mod 1). At the first harmonic this makes
        the mirrored cell's coefficient the exact negation of the base cell's,
        so the radiated first-harmonic field has a null wherever the total
        per-row phase is mirror-symmetric.
    """
    half_rise = np.asarray(half_rise, dtype=float)
    half_duty = np.asarray(half_duty, dtype=float)
    if half_rise.ndim != 2 or half_rise.shape != half_duty.shape:
        raise ConstraintError("half-schedule arrays must be 2-D and equal-shaped")
    rise = np.concatenate([half_rise, mirror_rise(half_rise)[::-1]], axis=0)
    duty = np.concatenate([half_duty, half_duty[::-1]], axis=0)
    return PulseSchedule(period_s=period_s, rise=rise, duty=duty)


def check_delta_applicable(rows: int):
    if rows % 2 != 0:
        raise ConstraintError(f"mirror pairing needs an even row count, got {rows}")


def expand_columnwise(col_rise, col_duty, cols: int):
    """Tile per-row pulse parameters across all columns.

    Args:
        col_rise: shape (rows,) rise shared by every cell of the row.
        col_duty: shape (rows,) duty shared likewise.
        cols: number of columns to tile over.

    Returns:
        (rise, duty) arrays of shape (rows, cols).
    """
    col_rise = np.asarray(col_rise, dtype=float)
    col_duty = np.asarray(col_duty, dtype=float)
    if col_rise.ndim != 1 or col_rise.shape != col_duty.shape:
        raise ValueError("column-wise parameters must be 1-D and equal-shaped")
    if cols < 1:
        raise ValueError("cols must be >= 1")
    return (
        np.repeat(col_rise[:, None], cols, axis=1),
        np.repeat(col_duty[:, None], cols, axis=1),
    )
