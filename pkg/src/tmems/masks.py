"""Power masks that encode the beam-shaping requirements on a direction grid.

The carrier (h=0) gets one main-lobe box with an upper ripple bound and a
sidelobe ceiling everywhere else. The first harmonic (h=1) gets the same main
region plus floors inside two flanking lobe boxes. All levels are decibels
relative to the coherent reference power R0 of the fully phase-conjugated
ideal aperture.

Point requirements that must hold at exact directions, not just at grid
nodes, are carried as anchors: the carrier power floor at the exact beam
direction and the first-harmonic null depth at the exact null direction. A
deep null over a finite box is unreachable for a plain zero-crossing pattern
(one grid cell away from a perfect null the power is already within ~12 dB of
the lobes), so the null is pinned at its exact direction instead; an optional
grid notch box can still be requested explicitly.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fields import DirectionGrid, PlaneWaveIncidence, cell_factor, incident_phase_factors
from .geometry import EmsGeometry


def reference_power(geometry: EmsGeometry, amplitude_v_m: float) -> float:
    """Coherent power reference: |j k0 / 4 pi|^2 (E0 * P * Q * A_cell)^2."""
    if not (amplitude_v_m > 0.0):
        raise ValueError("amplitude must be positive")
    k = geometry.k0 / (4.0 * np.pi)
    return (k * amplitude_v_m * geometry.n_cells * geometry.cell_area_m2) ** 2


def uniform_shape_db(n: int, cell_size_wl: float, offset: float) -> float:
    """Power falloff (dB, <= 0) of an n-element uniform line array at a
    direction-cosine offset from its steering direction."""
    psi = np.pi * cell_size_wl * float(offset)
    if abs(psi) < 1e-12:
        return 0.0
    af = np.sin(n * psi) / (n * np.sin(psi))
    return float(20.0 * np.log10(max(abs(af), 1e-30)))


def half_power_halfwidth(n: int, cell_size_wl: float) -> float:
    """Direction-cosine offset where the uniform n-element beam is 3 dB down."""
    return 0.4429 / (n * cell_size_wl)


@dataclass(frozen=True, eq=False)
class BeamReference:
    """Analytic carrier-beam design used to calibrate beam-shaping anchors.

    The carrier coefficient of a pulse is real (it moves on the segment
    between the two reflection scalars), so a beam steered off specular
    always comes with a mirror lobe; the mirror's skirt interferes with the
    main lobe and shifts its apex by a few hundredths in direction cosine.
    This design applies per-cell conjugate weighting toward an internally
    adjusted steer direction chosen so the resulting apex, mirror
    interference and element-gain tilt included, lands exactly on the
    requested beam direction. Anchors derived from this shape describe a
    pattern that is actually achievable, unlike an isolated-lobe model.
    """

    geometry: EmsGeometry
    beam_uv: tuple
    steer_u: float
    duty: np.ndarray
    phase: np.ndarray
    weights: np.ndarray
    pol2: float

    def __post_init__(self):
        for name in ("duty", "phase", "weights"):
            getattr(self, name).setflags(write=False)

    def power_at(self, u, v) -> np.ndarray:
        """Carrier power of the reference design at exact directions."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        xy = self.geometry.cell_xy_m
        k0 = self.geometry.k0
        steer = np.exp(1j * k0 * (u[:, None] * xy[None, :, 0] + v[:, None] * xy[None, :, 1]))
        f = steer @ self.weights
        gain = (k0 / (4.0 * np.pi)) * np.asarray(cell_factor(self.geometry, u, v))
        return self.pol2 * np.abs(gain * f) ** 2


def _apex_u(ref_weights, geometry, pol2, center_u, v, window: float):
    """Apex (direction cosine, power) of the carrier lobe near center_u at
    v=const.

    Returns None when the maximum sits on the window edge, i.e. the lobe has
    left the window and the sample is not a lobe apex at all.
    """
    us = center_u + np.linspace(-window, window, 241)
    keep = us * us + v * v < 1.0
    if not keep.any():
        raise ValueError("beam window has no visible directions")
    us = us[keep]
    xy = geometry.cell_xy_m
    k0 = geometry.k0
    steer = np.exp(1j * k0 * (us[:, None] * xy[None, :, 0] + v * xy[None, :, 1]))
    gain = (k0 / (4.0 * np.pi)) * np.asarray(cell_factor(geometry, us, np.full_like(us, v)))
    p = pol2 * np.abs(gain * (steer @ ref_weights)) ** 2
    i = int(np.argmax(p))
    if i == 0 or i == us.size - 1:
        return None
    # parabolic refinement through the three samples around the maximum
    d1 = p[i + 1] - p[i - 1]
    d2 = p[i + 1] - 2.0 * p[i] + p[i - 1]
    apex = float(us[i])
    if d2 < 0.0:
        apex = float(us[i] - 0.5 * d1 / d2 * (us[1] - us[0]))
    return apex, float(p[i])


def beam_reference(geometry: EmsGeometry, incidence: PlaneWaveIncidence,
                   beam_u: float, beam_v: float,
                   scalar_states: Optional[tuple] = None) -> BeamReference:
    """Build the steer-compensated conjugate carrier design for one scenario.

    scalar_states is the (on, off) reflection scalar pair; tensor states fall
    back to the ideal (+1, -1) pair, which only degrades the calibration,
    never the correctness of the masks built from it.
    """
    if beam_u**2 + beam_v**2 > 1.0:
        raise ValueError("beam direction outside the visible disc")
    gam_on, gam_off = scalar_states if scalar_states is not None else (1.0 + 0j, -1.0 + 0j)
    span = gam_on - gam_off
    if abs(span) < 1e-12:
        raise ValueError("reflection states are identical; no carrier contrast")
    g = incident_phase_factors(incidence, geometry) * incidence.amplitude_v_m
    jones = np.asarray(incidence.jones)
    pol2 = float(np.sum(np.abs(incidence.polarization_matrix @ jones) ** 2))
    xy = geometry.cell_xy_m
    k0 = geometry.k0

    def make(steer_u: float):
        phase = np.angle(g) + k0 * (steer_u * xy[:, 0] + beam_v * xy[:, 1])
        duty = np.clip(((np.cos(phase) - gam_off) / span).real, 0.0, 1.0)
        return phase, duty, (gam_off + span * duty) * g

    fn = 1.0 / (geometry.rows * geometry.cell_size_wl)
    window = 0.6 * fn

    def offset(steer_u: float):
        _, _, w = make(steer_u)
        res = _apex_u(w, geometry, pol2, beam_u, beam_v, window)
        return None if res is None else (res[0] - beam_u, res[1])

    # the apex offset moves smoothly and monotonically with the steer inside
    # one lobe width: scan for a sign change, then bisect it down. Steers
    # whose lobe has collapsed (a beam merging destructively with its mirror
    # loses its power long before the apex reading goes stale) are dropped
    # before picking the best candidate.
    scan = beam_u + np.linspace(-0.5, 0.5, 21) * fn
    triples = [(s, r[0], r[1]) for s, r in ((s, offset(s)) for s in scan) if r is not None]
    if not triples:
        raise ValueError("conjugate reference lobe not found near the beam direction")
    peak_floor = 0.5 * max(t[2] for t in triples)
    pairs = [(s, f) for s, f, pk in triples if pk >= peak_floor]
    best_s, best_f = min(pairs, key=lambda sf: abs(sf[1]))
    bracket = None
    for (sa, fa), (sb, fb) in zip(pairs, pairs[1:]):
        if fa == 0.0 or fa * fb < 0.0:
            bracket = (sa, fa, sb, fb)
            break
    if bracket is not None:
        sa, fa, sb, fb = bracket
        for _ in range(24):
            sm = 0.5 * (sa + sb)
            res = offset(sm)
            if res is None:
                break
            fm = res[0]
            if abs(fm) < abs(best_f):
                best_s, best_f = sm, fm
            if abs(fm) < 1e-6:
                break
            if fa * fm <= 0.0:
                sb, fb = sm, fm
            else:
                sa, fa = sm, fm
    phase, duty, weights = make(best_s)
    return BeamReference(geometry=geometry, beam_uv=(beam_u, beam_v), steer_u=best_s,
                         duty=duty.reshape(geometry.rows, geometry.cols),
                         phase=phase, weights=weights, pol2=pol2)


@dataclass(frozen=True)
class MaskParams:
    """Mask geometry and levels; None fields derive from the aperture size.

    Widths are in direction-cosine units. The natural scale is the standard
    beamwidth lambda/D of the uniform aperture, computed per axis. A None
    null halfwidth means the null is enforced only at its exact direction.
    """

    beam_u: float
    beam_v: float = 0.0
    sidelobe_db: float = -10.0
    peak_floor_db: float = -3.0
    ripple_db: float = 3.0
    null_depth_db: float = -40.0
    null_u: Optional[float] = None
    null_v: Optional[float] = None
    main_halfwidth_u: Optional[float] = None
    main_halfwidth_v: Optional[float] = None
    full_v: bool = False
    lobe_offset_u: Optional[float] = None
    lobe_halfwidth_u: Optional[float] = None
    lobe_halfwidth_v: Optional[float] = None
    lobe_floor_db: float = -12.0
    null_halfwidth_u: Optional[float] = None
    null_halfwidth_v: Optional[float] = None
    shoulder_scale: float = 1.2
    shoulder_margin_db: float = 0.7
    flank_scale: float = 0.5
    flank_margin_db: float = 0.2


@dataclass(frozen=True, eq=False)
class MaskSet:
    """Resolved lower/upper power bounds per harmonic over one grid.

    lower and upper have shape (2, nu, nv) for harmonics (0, 1); inactive
    bounds are 0 (lower) and +inf (upper). reference is R0 in linear power.
    anchor_uv lists exact directions with their own bounds in anchor_lower
    and anchor_upper, both shaped (2, n_anchors).
    """

    grid: DirectionGrid
    lower: np.ndarray
    upper: np.ndarray
    reference: float
    beam_uv: tuple
    null_uv: tuple
    anchor_uv: np.ndarray
    anchor_lower: np.ndarray
    anchor_upper: np.ndarray

    def __post_init__(self):
        for name in ("lower", "upper", "anchor_uv", "anchor_lower", "anchor_upper"):
            getattr(self, name).setflags(write=False)


def _box_nodes(grid: DirectionGrid, center_u, center_v, hw_u, hw_v, full_v: bool):
    """Visible-node mask of a rectangular box; never empty (falls back to the
    nearest visible node when the box slips between grid nodes)."""
    uu, vv = np.meshgrid(grid.u, grid.v, indexing="ij")
    sel = np.abs(uu - center_u) <= hw_u + 1e-12
    if not full_v:
        sel &= np.abs(vv - center_v) <= hw_v + 1e-12
    sel &= grid.visible
    if not sel.any():
        iu, iv = grid.nearest_index(center_u, center_v)
        if not grid.visible[iu, iv]:
            raise ValueError("mask box center has no visible grid node")
        sel = np.zeros(grid.shape, dtype=bool)
        sel[iu, iv] = True
    return sel


def build_masks(grid: DirectionGrid, geometry: EmsGeometry, params: MaskParams,
                r0: float, incidence: Optional[PlaneWaveIncidence] = None,
                scalar_states: Optional[tuple] = None) -> MaskSet:
    """Materialize mask arrays and anchors on a grid.

    When the incidence is provided, the beam-shaping anchor levels are
    calibrated against the steer-compensated conjugate reference design
    (see BeamReference) and structurally forced mirror lobes get their own
    ripple-bounded boxes; otherwise an isolated uniform-lobe falloff model
    is used, which is adequate for specular or broadside beams only.

    Raises ValueError for inconsistent parameters, e.g. a null that lands
    inside a required-lobe box or a lower bound above its upper bound.
    """
    if not (r0 > 0.0):
        raise ValueError("reference power must be positive")
    if params.beam_u**2 + params.beam_v**2 > 1.0:
        raise ValueError("beam direction outside the visible disc")

    fn_u = 1.0 / (geometry.rows * geometry.cell_size_wl)
    fn_v = 1.0 / (geometry.cols * geometry.cell_size_wl)
    hw_u = params.main_halfwidth_u if params.main_halfwidth_u is not None else 2.0 * fn_u
    hw_v = params.main_halfwidth_v if params.main_halfwidth_v is not None else 2.0 * fn_v
    lobe_off = params.lobe_offset_u if params.lobe_offset_u is not None else 0.75 * fn_u
    lobe_hw_u = params.lobe_halfwidth_u if params.lobe_halfwidth_u is not None else 0.2 * fn_u
    lobe_hw_v = params.lobe_halfwidth_v if params.lobe_halfwidth_v is not None else 0.2 * fn_v
    null_u = params.null_u if params.null_u is not None else params.beam_u
    null_v = params.null_v if params.null_v is not None else params.beam_v
    for value, name in ((hw_u, "main_halfwidth_u"), (hw_v, "main_halfwidth_v"),
                        (lobe_hw_u, "lobe_halfwidth_u"), (lobe_hw_v, "lobe_halfwidth_v")):
        if not (value > 0.0):
            raise ValueError(f"{name} must be positive")
    if null_u**2 + null_v**2 > 1.0:
        raise ValueError("null direction outside the visible disc")
    if lobe_hw_u >= lobe_off:
        raise ValueError("lobe boxes overlap the null direction; shrink lobe_halfwidth_u")

    sidelobe = r0 * 10.0 ** (params.sidelobe_db / 10.0)
    ripple = r0 * 10.0 ** (params.ripple_db / 10.0)
    peak_floor = r0 * 10.0 ** (params.peak_floor_db / 10.0)
    null_depth = r0 * 10.0 ** (params.null_depth_db / 10.0)
    lobe_floor = r0 * 10.0 ** (params.lobe_floor_db / 10.0)

    nu, nv = grid.shape
    vis = grid.visible
    lower = np.zeros((2, nu, nv))
    upper = np.full((2, nu, nv), np.inf)

    main = _box_nodes(grid, params.beam_u, params.beam_v, hw_u, hw_v, params.full_v)
    upper[0][vis] = sidelobe
    upper[0][main] = ripple

    delta_main = _box_nodes(grid, null_u, null_v, hw_u, hw_v, params.full_v)
    upper[1][vis] = sidelobe
    upper[1][delta_main] = ripple

    # Mirror-lobe boxes. The carrier coefficient of an on/off pulse is real,
    # so the carrier pattern of any schedule is mirror-symmetric about the
    # specular direction (in the incidence-shifted coordinate w = u + u_inc),
    # and the row-mirrored difference constraint imposes the same symmetry on
    # the first harmonic about its null. Wherever that mirror, or one of its
    # grating aliases at multiples of lambda/d, lands inside the visible disc
    # it carries main-lobe-level power no schedule can remove, so it gets the
    # same ripple allowance as the lobe it images instead of the sidelobe
    # ceiling. Mirroring acts along u only (the rows run along x); v-axis
    # aliases stay invisible for sub-wavelength cells.
    if incidence is not None:
        period = 1.0 / geometry.cell_size_wl
        for h, c_u0, c_v0 in ((0, params.beam_u, params.beam_v), (1, null_u, null_v)):
            w_c = c_u0 + incidence.u
            for n in range(-2, 3):
                for w_img in (w_c + n * period, -w_c + n * period):
                    c_u = w_img - incidence.u
                    if abs(c_u - c_u0) <= fn_u or abs(c_u) > 1.0 + hw_u:
                        continue
                    box = _box_nodes(grid, c_u, c_v0, hw_u, hw_v, params.full_v)
                    upper[h][box] = np.maximum(upper[h][box], ripple)

    lobes = np.zeros(grid.shape, dtype=bool)
    for sign in (-1.0, 1.0):
        lobes |= _box_nodes(grid, null_u + sign * lobe_off, null_v, lobe_hw_u, lobe_hw_v, False)

    if params.null_halfwidth_u is not None or params.null_halfwidth_v is not None:
        null_hw_u = (params.null_halfwidth_u if params.null_halfwidth_u is not None
                     else params.null_halfwidth_v)
        null_hw_v = (params.null_halfwidth_v if params.null_halfwidth_v is not None
                     else params.null_halfwidth_u)
        if not (null_hw_u > 0.0 and null_hw_v > 0.0):
            raise ValueError("null halfwidths must be positive")
        notch = _box_nodes(grid, null_u, null_v, null_hw_u, null_hw_v, False)
        if (lobes & notch).any():
            raise ValueError("null notch overlaps a required-lobe box")
        upper[1][notch] = np.minimum(upper[1][notch], null_depth)

    lower[1][lobes] = lobe_floor

    # exact-direction requirements: carrier floor at the beam, h=1 ceiling at the null
    anchor_uv = [[params.beam_u, params.beam_v], [null_u, null_v]]
    anchor_lower = [[peak_floor, 0.0], [0.0, 0.0]]
    anchor_upper = [[np.inf, np.inf], [np.inf, null_depth]]

    # beam-shaping anchors on both flanks of the main lobe: a tube of floors
    # and caps around an achievable lobe shape. Caps alone or floors alone
    # cannot pin the peak of a smooth lobe: a cap with margin m still admits
    # an apex tilted by ~m/slope, and a floor still admits a taller bulge on
    # the opposite side. A floor+cap pair on each flank holds the whole lobe,
    # apex included, at the target direction. The tube center comes from the
    # conjugate reference design when the incidence is known (the achievable
    # lobe is not an isolated uniform beam once the mirror lobe interferes).
    if not (params.shoulder_scale > 0.0 and params.flank_scale > 0.0):
        raise ValueError("shoulder and flank scales must be positive")
    if params.shoulder_margin_db < 0.0 or params.flank_margin_db < 0.0:
        raise ValueError("shoulder and flank margins must be non-negative")
    ref = None
    if incidence is not None:
        ref = beam_reference(geometry, incidence, params.beam_u, params.beam_v,
                             scalar_states=scalar_states)
    beam_axes = [(geometry.rows, 1.0, 0.0)]
    if not params.full_v:
        beam_axes.append((geometry.cols, 0.0, 1.0))
    for n, eu, ev in beam_axes:
        hp = half_power_halfwidth(n, geometry.cell_size_wl)
        for scale, margin, is_cap in (
                (params.shoulder_scale, params.shoulder_margin_db, True),
                (params.flank_scale, params.flank_margin_db, False)):
            d = scale * hp
            shape_db = uniform_shape_db(n, geometry.cell_size_wl, d)
            for sign in (-1.0, 1.0):
                su = params.beam_u + sign * d * eu
                sv = params.beam_v + sign * d * ev
                if su**2 + sv**2 > 1.0:
                    continue
                if ref is not None:
                    level = float(ref.power_at(su, sv)[0])
                else:
                    level = peak_floor * 10.0 ** (shape_db / 10.0)
                lo = 0.0 if is_cap else level * 10.0 ** (-margin / 10.0)
                up = level * 10.0 ** (margin / 10.0) if is_cap else np.inf
                anchor_uv.append([su, sv])
                anchor_lower.append([lo, 0.0])
                anchor_upper.append([up, np.inf])

    anchor_uv = np.array(anchor_uv)
    anchor_lower = np.array(anchor_lower).T
    anchor_upper = np.array(anchor_upper).T

    if np.any(lower > upper) or np.any(anchor_lower > anchor_upper):
        raise ValueError("mask lower bound exceeds upper bound")
    return MaskSet(grid=grid, lower=lower, upper=upper, reference=r0,
                   beam_uv=(params.beam_u, params.beam_v), null_uv=(null_u, null_v),
                   anchor_uv=anchor_uv, anchor_lower=anchor_lower, anchor_upper=anchor_upper)
