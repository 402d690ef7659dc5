"""Mask-violation cost and seeded particle-swarm search over pulse schedules.

The search space is the unit hypercube: every coordinate is either a rise
instant (periodic, evolves on the torus [0, 1)) or a duty (reflecting walls
at 0 and 1). A control mode maps the vector onto per-cell pulses; the cost is
the grid-integrated one-sided violation of the power masks at harmonics 0
and 1.
"""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .fields import (
    DirectionGrid,
    FieldEngine,
    PlaneWaveIncidence,
    cell_factor,
    incident_phase_factors,
)
from .geometry import EmsGeometry
from .masks import MaskSet, beam_reference
from .modulation import (
    ControlMode,
    PulseSchedule,
    ReflectionStates,
    check_delta_applicable,
    harmonic_scalar_coefficients,
    harmonic_tensors,
    mirror_rise,
)


def ramp(x):
    """One-sided penalty: max(x, 0), elementwise."""
    return np.maximum(np.asarray(x, dtype=float), 0.0)


class CostEvaluator:
    """Precomputed mask-violation cost Phi for one scenario on one grid.

    Phi = sum over harmonics h in {0, 1} and visible grid nodes of
    w * ramp(P_h - upper_h) + w * ramp(lower_h - P_h), with w the grid-cell
    weight. Phi is 0 exactly when every bound is met. Instances are immutable
    after construction and safe to share across threads.
    """

    def __init__(self, geometry: EmsGeometry, grid: DirectionGrid, states: ReflectionStates,
                 incidence: PlaneWaveIncidence, masks: MaskSet, period_s: float,
                 anchor_weight: Optional[float] = None):
        if masks.grid is not grid and (
            not np.array_equal(masks.grid.u, grid.u) or not np.array_equal(masks.grid.v, grid.v)
        ):
            raise ValueError("masks were built on a different grid")
        self.geometry = geometry
        self.grid = grid
        self.states = states
        self.incidence = incidence
        self.masks = masks
        self.period_s = float(period_s)
        self.engine = FieldEngine(geometry, grid, cache_steering=True)
        iu, iv = self.engine.vis_iu, self.engine.vis_iv
        anchors = masks.anchor_uv
        a_u, a_v = anchors[:, 0], anchors[:, 1]
        self._anchor_s = self.engine._steering_block(a_u, a_v)
        anchor_gain = np.abs(self.engine.prefactor) * np.asarray(cell_factor(geometry, a_u, a_v))
        self._gain2 = np.concatenate([self.engine.cell_gain, anchor_gain]) ** 2
        self._lower = np.concatenate([masks.lower[:, iu, iv], masks.anchor_lower], axis=1)
        self._upper = np.concatenate([masks.upper[:, iu, iv], masks.anchor_upper], axis=1)
        # an anchor is a hard point requirement, so by default it weighs as
        # much as a main-lobe box worth of grid nodes, not a single cell
        if anchor_weight is None:
            fn = 1.0 / (geometry.rows * geometry.cell_size_wl)
            anchor_weight = (4.0 * fn) * (4.0 * fn)
        if anchor_weight < 0.0:
            raise ValueError("anchor weight must be non-negative")
        self.anchor_weight = float(anchor_weight)
        self._weights = np.concatenate([
            np.full(iu.size, grid.cell_weight),
            np.full(anchors.shape[0], self.anchor_weight),
        ])
        self._scalars = states.scalar_pair()
        self._phases = incident_phase_factors(incidence, geometry) * incidence.amplitude_v_m
        jones = np.asarray(incidence.jones)
        self._pol2 = float(np.sum(np.abs(incidence.polarization_matrix @ jones) ** 2))
        self._m2j = incidence.polarization_matrix @ jones

    def _project(self, w: np.ndarray) -> np.ndarray:
        """Steer (n_cells, k) weights to visible nodes plus anchors."""
        return np.concatenate([self.engine._apply_steering(w), self._anchor_s @ w], axis=0)

    def _powers(self, rises: np.ndarray, duties: np.ndarray, h: int) -> np.ndarray:
        """(n_visible + n_anchors, batch) power samples for stacked schedules."""
        batch = rises.shape[0]
        n = self.geometry.n_cells
        if self._scalars is not None:
            coef = harmonic_scalar_coefficients(rises, duties, h, *self._scalars)
            coef = coef.reshape(batch, n).T
            a = self._project(coef * self._phases[:, None])
            return (self._gain2 * self._pol2)[:, None] * np.abs(a) ** 2
        m2 = self.incidence.polarization_matrix
        jones = np.asarray(self.incidence.jones)
        cols = []
        for b in range(batch):
            sched = PulseSchedule(period_s=self.period_s, rise=rises[b], duty=duties[b])
            tens = harmonic_tensors(self.states, sched, h).reshape(n, 2, 2)
            cols.append(self._phases[:, None] * np.einsum("ij,njk,k->ni", m2, tens, jones))
        w = np.concatenate(cols, axis=1)  # (n, 2*batch)
        a = self._project(w).reshape(-1, batch, 2)
        return self._gain2[:, None] * np.sum(np.abs(a) ** 2, axis=2)

    def phi_batch(self, rises: np.ndarray, duties: np.ndarray) -> np.ndarray:
        """Costs of a stack of schedules given as (batch, rows, cols) arrays."""
        total = 0.0
        w = self._weights[:, None]
        for h in (0, 1):
            p = self._powers(rises, duties, h)
            total = total + (w * ramp(p - self._upper[h][:, None])).sum(axis=0)
            total = total + (w * ramp(self._lower[h][:, None] - p)).sum(axis=0)
        return total

    def phi(self, schedule: PulseSchedule) -> float:
        """Cost of a single schedule."""
        if schedule.shape != (self.geometry.rows, self.geometry.cols):
            raise ValueError("schedule shape does not match the geometry")
        return float(self.phi_batch(schedule.rise[None], schedule.duty[None])[0])


def cost_function(schedule: PulseSchedule, evaluator: CostEvaluator) -> float:
    """Mask-violation cost of one schedule (convenience wrapper)."""
    return evaluator.phi(schedule)


@dataclass(frozen=True)
class ModeCodec:
    """Bijection between a search vector in [0,1]^dim and a full schedule."""

    mode: ControlMode
    rows: int
    cols: int

    @property
    def dim(self) -> int:
        p, q = self.rows, self.cols
        return {
            ControlMode.FULL: 2 * p * q,
            ControlMode.DELTA: p * q,
            ControlMode.COLWISE: 2 * p,
            ControlMode.COLWISE_DELTA: p,
        }[self.mode]

    def __post_init__(self):
        if self.mode in (ControlMode.DELTA, ControlMode.COLWISE_DELTA):
            check_delta_applicable(self.rows)
        if self.dim < 1:
            raise ValueError("empty search space")

    @property
    def wrap_mask(self) -> np.ndarray:
        """True for rise coordinates (torus), False for duty (reflecting)."""
        half = self.dim // 2
        m = np.zeros(self.dim, dtype=bool)
        m[:half] = True
        return m

    def decode_batch(self, x: np.ndarray):
        """(batch, dim) vectors -> (rises, duties), each (batch, rows, cols)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.dim:
            raise ValueError(f"expected vectors of length {self.dim}, got {x.shape[1]}")
        b = x.shape[0]
        p, q = self.rows, self.cols
        half = self.dim // 2
        rise_raw, duty_raw = x[:, :half], x[:, half:]
        if self.mode is ControlMode.FULL:
            return rise_raw.reshape(b, p, q), duty_raw.reshape(b, p, q)
        if self.mode is ControlMode.DELTA:
            rh = rise_raw.reshape(b, p // 2, q)
            dh = duty_raw.reshape(b, p // 2, q)
            rise = np.concatenate([rh, mirror_rise(rh)[:, ::-1, :]], axis=1)
            duty = np.concatenate([dh, dh[:, ::-1, :]], axis=1)
            return rise, duty
        if self.mode is ControlMode.COLWISE:
            return (np.repeat(rise_raw[:, :, None], q, axis=2),
                    np.repeat(duty_raw[:, :, None], q, axis=2))
        rh = np.concatenate([rise_raw, mirror_rise(rise_raw)[:, ::-1]], axis=1)
        dh = np.concatenate([duty_raw, duty_raw[:, ::-1]], axis=1)
        return np.repeat(rh[:, :, None], q, axis=2), np.repeat(dh[:, :, None], q, axis=2)

    def decode(self, x: np.ndarray, period_s: float) -> PulseSchedule:
        rise, duty = self.decode_batch(np.asarray(x))
        return PulseSchedule(period_s=period_s, rise=rise[0], duty=duty[0])

    def encode(self, rise: np.ndarray, duty: np.ndarray) -> np.ndarray:
        """Full (rows, cols) arrays -> search vector; keeps the slice the
        mode actually controls and drops the derived cells."""
        rise = np.asarray(rise, dtype=float)
        duty = np.asarray(duty, dtype=float)
        if rise.shape != (self.rows, self.cols) or duty.shape != rise.shape:
            raise ValueError("rise/duty shape does not match the codec")
        p = self.rows
        if self.mode is ControlMode.FULL:
            return np.concatenate([rise.ravel(), duty.ravel()])
        if self.mode is ControlMode.DELTA:
            return np.concatenate([rise[: p // 2].ravel(), duty[: p // 2].ravel()])
        if self.mode is ControlMode.COLWISE:
            return np.concatenate([rise[:, 0], duty[:, 0]])
        return np.concatenate([rise[: p // 2, 0], duty[: p // 2, 0]])


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 20
    iterations: int = 1000
    inertia: float = 0.4
    cognitive: float = 2.0
    social: float = 2.0
    seed: int = 1
    stagnation_window: int = 100
    stagnation_rtol: float = 1e-6
    velocity_clamp: float = 0.5

    def __post_init__(self):
        if self.swarm_size < 1 or self.iterations < 0:
            raise ValueError("swarm_size must be >= 1 and iterations >= 0")
        if not (0.0 < self.velocity_clamp):
            raise ValueError("velocity_clamp must be positive")


@dataclass
class PsoResult:
    best_x: np.ndarray
    best_value: float
    history: np.ndarray
    iterations: int
    stop_reason: str


def _checked_costs(objective, x: np.ndarray) -> np.ndarray:
    f = np.asarray(objective(x), dtype=float)
    if f.shape != (x.shape[0],):
        raise ValueError("objective must return one value per particle")
    bad = np.nonzero(~np.isfinite(f))[0]
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"non-finite cost {f[i]!r} for particle {i}")
    return f


def minimize(objective, dim: int, config: PsoConfig,
             wrap_mask: Optional[np.ndarray] = None,
             init: Optional[np.ndarray] = None) -> PsoResult:
    """Global-best PSO over [0, 1]^dim with seeded, order-fixed random draws.

    Args:
        objective: batched callable mapping (swarm, dim) positions to a
            (swarm,) cost vector; must be finite.
        dim: search dimensionality (>= 1).
        config: swarm hyperparameters; the velocity clamp is a fraction of the
            unit coordinate range.
        wrap_mask: True marks periodic coordinates (wrap mod 1, shortest-path
            attraction); False marks reflecting coordinates.
        init: optional deterministic start placed on particle 0 (the rest of
            the swarm stays random); does not consume any random draws.

    Returns:
        PsoResult with the best vector, its cost, the per-iteration best-cost
        history (monotone non-increasing, entry 0 is the initial swarm), the
        number of update iterations performed, and why the loop stopped.

    Random draws happen in a fixed sequential order (two per particle per
    iteration), so results depend only on the seed, never on evaluation
    parallelism.
    """
    if dim < 1:
        raise ValueError("empty search space")
    if wrap_mask is None:
        wrap_mask = np.zeros(dim, dtype=bool)
    wrap_mask = np.asarray(wrap_mask, dtype=bool)
    reflect_mask = ~wrap_mask
    rng = np.random.default_rng(config.seed)
    c = config.swarm_size

    x = rng.random((c, dim))
    if init is not None:
        init = np.asarray(init, dtype=float)
        if init.shape != (dim,):
            raise ValueError(f"init must have shape ({dim},)")
        x[0] = np.where(wrap_mask, np.mod(init, 1.0), np.clip(init, 0.0, 1.0))
    vel = np.zeros((c, dim))
    f = _checked_costs(objective, x)
    pbest = x.copy()
    pbest_f = f.copy()
    ig = int(np.argmin(pbest_f))  # ties resolve to the lowest index
    gbest = pbest[ig].copy()
    gbest_f = float(pbest_f[ig])
    history = [gbest_f]
    stop_reason = "max_iterations"
    clamp = config.velocity_clamp
    it = 0

    for it in range(1, config.iterations + 1):
        for i in range(c):
            r1 = rng.random(dim)
            r2 = rng.random(dim)
            dp = pbest[i] - x[i]
            dg = gbest - x[i]
            if wrap_mask.any():
                dp[wrap_mask] = (dp[wrap_mask] + 0.5) % 1.0 - 0.5
                dg[wrap_mask] = (dg[wrap_mask] + 0.5) % 1.0 - 0.5
            vel[i] = (config.inertia * vel[i]
                      + config.cognitive * r1 * dp
                      + config.social * r2 * dg)
        np.clip(vel, -clamp, clamp, out=vel)
        x = x + vel
        if wrap_mask.any():
            x[:, wrap_mask] %= 1.0
        if reflect_mask.any():
            xr = x[:, reflect_mask]
            vr = vel[:, reflect_mask]
            low = xr < 0.0
            xr[low] = -xr[low]
            vr[low] = -vr[low]
            high = xr > 1.0
            xr[high] = 2.0 - xr[high]
            vr[high] = -vr[high]
            x[:, reflect_mask] = xr
            vel[:, reflect_mask] = vr

        f = _checked_costs(objective, x)
        improved = f < pbest_f
        pbest[improved] = x[improved]
        pbest_f[improved] = f[improved]
        ig = int(np.argmin(pbest_f))
        if pbest_f[ig] < gbest_f:
            gbest = pbest[ig].copy()
            gbest_f = float(pbest_f[ig])
        history.append(gbest_f)

        if gbest_f == 0.0:
            stop_reason = "zero_cost"
            break
        w = config.stagnation_window
        if w > 0 and it >= w:
            prev = history[-w - 1]
            if prev - gbest_f <= config.stagnation_rtol * max(abs(prev), 1e-300):
                stop_reason = "stagnation"
                break

    return PsoResult(best_x=gbest, best_value=gbest_f,
                     history=np.asarray(history), iterations=it, stop_reason=stop_reason)


@dataclass
class SynthesisResult:
    schedule: PulseSchedule
    phi: float
    history: np.ndarray
    iterations: int
    stop_reason: str
    seed: int


def conjugate_guess(evaluator: CostEvaluator, codec: ModeCodec) -> np.ndarray:
    """Deterministic warm start matching the anchor calibration reference.

    Duties come from the steer-compensated conjugate carrier design (the same
    one the beam-shaping anchors are calibrated against, so the carrier
    pattern of this start sits at the center of the anchor tube). Rises are
    picked so the first-harmonic coefficient carries the same steering phase
    with a sign flip across the row axis, a monopulse-style split that puts a
    dip near the beam direction with lobes flanking it. The swarm refines
    this seed; starting one particle here keeps the search away from locally
    optimal but off-target beams.
    """
    geom = evaluator.geometry
    beam_u, beam_v = evaluator.masks.beam_uv
    ref = beam_reference(geom, evaluator.incidence, beam_u, beam_v,
                         scalar_states=evaluator.states.scalar_pair())
    duty = ref.duty.ravel()
    flip = (geom.cell_xy_m[:, 0] < 0.0).astype(float)
    # first-harmonic coefficient is exp(-j*pi*(2*rise + duty)) * sin(pi*duty)/pi
    rise = np.mod((ref.phase / np.pi - flip - duty) / 2.0, 1.0)
    shape = (geom.rows, geom.cols)
    return codec.encode(rise.reshape(shape), duty.reshape(shape))


def pso_optimize(evaluator: CostEvaluator, mode: ControlMode, config: PsoConfig) -> SynthesisResult:
    """Search the mode's schedule space for the lowest mask-violation cost."""
    codec = ModeCodec(mode=mode, rows=evaluator.geometry.rows, cols=evaluator.geometry.cols)

    def objective(x):
        rises, duties = codec.decode_batch(x)
        return evaluator.phi_batch(rises, duties)

    res = minimize(objective, codec.dim, config, wrap_mask=codec.wrap_mask,
                   init=conjugate_guess(evaluator, codec))
    schedule = codec.decode(res.best_x, evaluator.period_s)
    return SynthesisResult(schedule=schedule, phi=res.best_value, history=res.history,
                           iterations=res.iterations, stop_reason=res.stop_reason,
                           seed=config.seed)


def best_of_seeds(evaluator: CostEvaluator, mode: ControlMode, base: PsoConfig,
                  seeds) -> SynthesisResult:
    """Run one synthesis per seed and keep the lowest-cost design.

    Ties resolve to the earliest seed in the list, which keeps repeated runs
    deterministic.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    best = None
    for s in seeds:
        cfg = replace(base, seed=int(s))
        res = pso_optimize(evaluator, mode, cfg)
        if best is None or res.phi < best.phi:
            best = res
    return best
