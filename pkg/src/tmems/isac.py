"""Monopulse-style sensing on top of schedule synthesis.

A scenario fixes everything about the link except the schedule: surface
geometry, reflection states, modulation period, control mode, the base
station's reflection angle and the user's incidence angle. Synthesis steers
the carrier beam at the base station while notching the first harmonic there;
the ratio xi = P_sigma / P_delta measured at the base station is then large
only when the design's assumed user angle matches the true one, which is what
the localization sweep exploits.

The base station direction is the signed u_bs = sin(theta_refl): a negative
reflection angle targets the far side of the surface normal from the user.
Real-coefficient carrier schedules also radiate a mirrored twin of the beam
about the specular direction; the masks grant it an allowance box wherever it
lands inside the visible region (see masks.build_masks).
"""

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from math import radians, sin
from typing import Optional, Sequence

import numpy as np

from .codebook import Codebook, entry_from_schedule, scenario_digest
from .fields import (
    DirectionGrid,
    MonopulseRatio,
    PlaneWaveIncidence,
    field_samples,
    ratio_from_powers,
)
from .geometry import EmsGeometry
from .masks import MaskParams, build_masks, reference_power
from .modulation import ControlMode, PulseSchedule, ReflectionStates, check_delta_applicable
from .synthesis import CostEvaluator, PsoConfig, SynthesisResult, pso_optimize


def derive_seed(master_seed: int, angle_deg: float, rep: int) -> int:
    """Stable per-design RNG seed, independent of evaluation order."""
    key = f"{int(master_seed)}:{int(round(float(angle_deg) * 1000.0))}:{int(rep)}"
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class MaskLevels:
    """Mask levels and optional width overrides (direction-cosine units)."""

    sidelobe_db: float = -10.0
    peak_floor_db: float = -3.0
    ripple_db: float = 3.0
    null_depth_db: float = -40.0
    lobe_floor_db: float = -12.0
    main_halfwidth_u: Optional[float] = None
    main_halfwidth_v: Optional[float] = None
    lobe_offset_u: Optional[float] = None
    lobe_halfwidth_u: Optional[float] = None
    lobe_halfwidth_v: Optional[float] = None
    null_halfwidth_u: Optional[float] = None
    null_halfwidth_v: Optional[float] = None
    shoulder_scale: float = 1.2
    shoulder_margin_db: float = 0.7
    flank_scale: float = 0.5
    flank_margin_db: float = 0.2


@dataclass(frozen=True)
class Scenario:
    """Fixed link parameters for synthesis and sensing."""

    geometry: EmsGeometry
    states: ReflectionStates
    period_s: float
    mode: ControlMode
    theta_inc_deg: float
    theta_refl_deg: float
    phi_inc_deg: float = 0.0
    amplitude_v_m: float = 1.0
    jones: tuple = (1.0 + 0.0j, 0.0j)
    mask: MaskLevels = field(default_factory=MaskLevels)
    pso: PsoConfig = field(default_factory=PsoConfig)
    synth_grid_n: int = 64

    def __post_init__(self):
        if not (self.period_s > 0.0):
            raise ValueError("period must be positive")
        if not (-90.0 < self.theta_refl_deg < 90.0):
            raise ValueError("reflection angle must lie in (-90, 90) degrees")
        if not (0.0 <= self.theta_inc_deg < 90.0):
            raise ValueError("incidence angle must lie in [0, 90) degrees")
        if self.synth_grid_n < 2:
            raise ValueError("synthesis grid needs at least 2 nodes per axis")
        if self.mode in (ControlMode.DELTA, ControlMode.COLWISE_DELTA):
            check_delta_applicable(self.geometry.rows)

    @property
    def bs_u(self) -> float:
        # Signed: negative reflection angles land on the far side of the normal
        # from the illuminating terminal.
        return sin(radians(self.theta_refl_deg))

    @property
    def columnwise(self) -> bool:
        return self.mode in (ControlMode.COLWISE, ControlMode.COLWISE_DELTA)

    @property
    def reference(self) -> float:
        return reference_power(self.geometry, self.amplitude_v_m)

    def incidence(self, theta_deg: Optional[float] = None) -> PlaneWaveIncidence:
        return PlaneWaveIncidence(
            theta_deg=self.theta_inc_deg if theta_deg is None else float(theta_deg),
            phi_deg=self.phi_inc_deg,
            amplitude_v_m=self.amplitude_v_m,
            jones=self.jones,
        )

    def mask_params(self) -> MaskParams:
        return MaskParams(beam_u=self.bs_u, beam_v=0.0, null_u=self.bs_u, null_v=0.0,
                          full_v=self.columnwise, **asdict(self.mask))

    def synth_grid(self) -> DirectionGrid:
        return DirectionGrid.uniform(self.synth_grid_n)

    def evaluator(self, design_theta_deg: Optional[float] = None,
                  grid: Optional[DirectionGrid] = None) -> CostEvaluator:
        """Cost evaluator with masks steered for the given assumed incidence."""
        grid = grid if grid is not None else self.synth_grid()
        incidence = self.incidence(design_theta_deg)
        masks = build_masks(grid, self.geometry, self.mask_params(), self.reference,
                            incidence=incidence, scalar_states=self.states.scalar_pair())
        return CostEvaluator(self.geometry, grid, self.states, incidence,
                             masks, self.period_s)

    def digest_payload(self) -> dict:
        """Everything that pins down a design, except the assumed user angle."""
        g = self.geometry
        return {
            "rows": g.rows, "cols": g.cols,
            "cell_size_wl": g.cell_size_wl, "f0_hz": g.f0_hz,
            "period_s": self.period_s,
            "mode": self.mode.value,
            "theta_refl_deg": self.theta_refl_deg,
            "phi_inc_deg": self.phi_inc_deg,
            "amplitude_v_m": self.amplitude_v_m,
            "jones": [[z.real, z.imag] for z in np.asarray(self.jones, dtype=complex)],
            "gamma_on": _matrix_payload(self.states.gamma_on),
            "gamma_off": _matrix_payload(self.states.gamma_off),
            "mask": asdict(self.mask),
            "pso": {k: v for k, v in asdict(self.pso).items() if k != "seed"},
            "synth_grid_n": self.synth_grid_n,
        }


def _matrix_payload(m: np.ndarray) -> list:
    return [[[z.real, z.imag] for z in row] for row in np.asarray(m, dtype=complex)]


def codebook_digest(scenario: Scenario, master_seed: int, repeats: int) -> bytes:
    payload = dict(scenario.digest_payload())
    payload["master_seed"] = int(master_seed)
    payload["repeats"] = int(repeats)
    return scenario_digest(payload)


def measure_bs_ratio(scenario: Scenario, schedule: PulseSchedule,
                     incidence: Optional[PlaneWaveIncidence] = None,
                     noise_power: float = 0.0) -> MonopulseRatio:
    """Sum/difference power ratio at the base station direction.

    The carrier (harmonic 0) and first-harmonic fields are sampled at the
    exact base station direction; noise_power, if given, is added to both
    powers as a common receiver floor.
    """
    if noise_power < 0.0:
        raise ValueError("noise power must be non-negative")
    inc = incidence if incidence is not None else scenario.incidence()
    u, v = scenario.bs_u, 0.0
    e0 = field_samples(scenario.geometry, schedule, scenario.states, inc, u, v, h=0)
    e1 = field_samples(scenario.geometry, schedule, scenario.states, inc, u, v, h=1)
    p_sigma = float(np.sum(np.abs(e0) ** 2)) + noise_power
    p_delta = float(np.sum(np.abs(e1) ** 2)) + noise_power
    return ratio_from_powers(p_sigma, p_delta)


def design_for_angle(scenario: Scenario, theta_hat_deg: float, master_seed: int,
                     repeats: int = 1,
                     key_angle_deg: Optional[float] = None) -> SynthesisResult:
    """Synthesize for an assumed user angle; keep the lowest-cost repeat.

    Repeat seeds derive from (master_seed, key angle, repeat index), so every
    design is reproducible in isolation and the winner never depends on how
    the repeats were scheduled. Cost ties keep the earliest repeat.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    ev = scenario.evaluator(design_theta_deg=theta_hat_deg)
    key = theta_hat_deg if key_angle_deg is None else key_angle_deg
    best = None
    for rep in range(repeats):
        seed = derive_seed(master_seed, key, rep)
        res = pso_optimize(ev, scenario.mode, replace(scenario.pso, seed=seed))
        if best is None or res.phi < best.phi:
            best = res
    return best


@dataclass(frozen=True)
class SweepSample:
    angle_deg: float
    phi: float
    xi: float
    p_sigma: float
    p_delta: float
    floored: bool
    iterations: int
    stop_reason: str
    source: str


def _sample(angle_deg, res: Optional[SynthesisResult], ratio: Optional[MonopulseRatio],
            source: str) -> SweepSample:
    if ratio is None:
        return SweepSample(angle_deg=float(angle_deg), phi=float("nan"), xi=float("nan"),
                           p_sigma=float("nan"), p_delta=float("nan"), floored=False,
                           iterations=0, stop_reason="", source=source)
    return SweepSample(
        angle_deg=float(angle_deg),
        phi=float(res.phi) if res is not None else float("nan"),
        xi=ratio.xi, p_sigma=ratio.p_sigma, p_delta=ratio.p_delta, floored=ratio.floored,
        iterations=res.iterations if res is not None else 0,
        stop_reason=res.stop_reason if res is not None else "codebook",
        source=source,
    )


def _run_ordered(worker, items, jobs: int) -> list:
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(worker, items))
    return [worker(x) for x in items]


def matched_sweep(scenario: Scenario, vary: str, angles_deg: Sequence[float],
                  master_seed: int, repeats: int = 1, jobs: int = 1,
                  noise_power: float = 0.0) -> list:
    """Synthesize and measure with matched design and truth at each angle.

    vary="bs" sweeps the base station's reflection angle; vary="user" sweeps
    the (known) user incidence angle. Each sample gets its own design, and xi
    is measured under the same scenario the design assumed.
    """
    if vary not in ("bs", "user"):
        raise ValueError('vary must be "bs" or "user"')

    def worker(angle):
        if vary == "bs":
            sc = replace(scenario, theta_refl_deg=float(angle))
        else:
            sc = replace(scenario, theta_inc_deg=float(angle))
        res = design_for_angle(sc, sc.theta_inc_deg, master_seed, repeats,
                               key_angle_deg=angle)
        ratio = measure_bs_ratio(sc, res.schedule, noise_power=noise_power)
        return _sample(angle, res, ratio, "synthesized")

    return _run_ordered(worker, list(angles_deg), jobs)


def build_codebook(scenario: Scenario, candidates_deg: Sequence[float], master_seed: int,
                   repeats: int = 1, jobs: int = 1) -> Codebook:
    """Pre-synthesize one schedule per candidate user angle."""
    candidates = sorted(float(a) for a in candidates_deg)
    if len(set(int(round(a * 1000)) for a in candidates)) != len(candidates):
        raise ValueError("candidate angles collide at millidegree resolution")

    def worker(angle):
        res = design_for_angle(scenario, angle, master_seed, repeats)
        return entry_from_schedule(angle, res.phi, res.schedule, scenario.mode)

    entries = _run_ordered(worker, candidates, jobs)
    g = scenario.geometry
    return Codebook(mode=scenario.mode, rows=g.rows, cols=g.cols, seed=int(master_seed),
                    period_s=scenario.period_s, f0_hz=g.f0_hz,
                    digest=codebook_digest(scenario, master_seed, repeats),
                    entries=tuple(entries))


@dataclass(frozen=True)
class LocalizationResult:
    samples: tuple
    estimate_deg: float
    best_xi: float
    runner_up_xi: float
    margin: float


def localize(scenario: Scenario, candidates_deg: Sequence[float], master_seed: int,
             repeats: int = 1, codebook: Optional[Codebook] = None, jobs: int = 1,
             on_missing: str = "synthesize", noise_power: float = 0.0) -> LocalizationResult:
    """Estimate the user angle by probing candidate designs at the base station.

    Each candidate's schedule (from the codebook when available, synthesized
    otherwise) is evaluated under the TRUE incidence of the scenario; the
    estimate is the candidate with the largest xi, ties going to the smallest
    angle. A supplied codebook must carry the digest and master seed of this
    exact scenario; a stale one is rejected rather than silently rebuilt.
    """
    if on_missing not in ("synthesize", "skip", "error"):
        raise ValueError('on_missing must be "synthesize", "skip", or "error"')
    candidates = [float(a) for a in candidates_deg]
    if not candidates:
        raise ValueError("at least one candidate angle is required")
    if codebook is not None:
        g = scenario.geometry
        if (codebook.mode, codebook.rows, codebook.cols) != (scenario.mode, g.rows, g.cols):
            raise ValueError("codebook geometry or mode does not match the scenario")
        if codebook.seed != int(master_seed):
            raise ValueError("codebook was built with a different master seed")
        expected = codebook_digest(scenario, master_seed, repeats)
        if codebook.digest != expected:
            raise ValueError("codebook scenario digest mismatch; rebuild it")

    def worker(angle):
        entry = codebook.entry_for(angle) if codebook is not None else None
        if entry is not None:
            schedule = entry.schedule(scenario.geometry, scenario.mode, scenario.period_s)
            ratio = measure_bs_ratio(scenario, schedule, noise_power=noise_power)
            sample = _sample(angle, None, ratio, "codebook")
            return replace(sample, phi=entry.phi)
        if on_missing == "skip":
            return _sample(angle, None, None, "skipped")
        if on_missing == "error":
            raise ValueError(f"codebook has no entry for {angle} degrees")
        res = design_for_angle(scenario, angle, master_seed, repeats)
        ratio = measure_bs_ratio(scenario, res.schedule, noise_power=noise_power)
        return _sample(angle, res, ratio, "synthesized")

    samples = _run_ordered(worker, candidates, jobs)

    scored = sorted((s for s in samples if s.source != "skipped"), key=lambda s: s.angle_deg)
    if not scored:
        raise ValueError("every candidate was skipped; nothing to estimate from")
    best = scored[0]
    for s in scored[1:]:
        if s.xi > best.xi:
            best = s
    others = [s.xi for s in scored if s is not best]
    runner = max(others) if others else float("nan")
    margin = best.xi / runner if others and runner > 0.0 else float("inf")
    return LocalizationResult(samples=tuple(samples), estimate_deg=best.angle_deg,
                              best_xi=best.xi, runner_up_xi=runner, margin=margin)
