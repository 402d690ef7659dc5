"""Time-modulated reflective surface toolkit.

Design per-cell on/off modulation schedules that steer the carrier beam while
shaping the first harmonic for monopulse-style sensing, evaluate the harmonic
far fields, and simulate base-station-side user localization.
"""

from .codebook import (
    Codebook,
    CodebookEntry,
    CodebookError,
    read_codebook,
    scenario_digest,
    write_codebook,
)
from .config import ConfigError, RunConfig, default_config, load_config, parse_config
from .fields import (
    DirectionGrid,
    FieldEngine,
    HarmonicPattern,
    MonopulseRatio,
    PlaneWaveIncidence,
    cell_factor,
    field_samples,
    harmonic_far_field,
    incident_cell_excitation,
    monopulse_ratio,
    power_db,
    power_pattern,
    ratio_from_powers,
)
from .geometry import SPEED_OF_LIGHT, EmsGeometry
from .isac import (
    LocalizationResult,
    MaskLevels,
    Scenario,
    SweepSample,
    build_codebook,
    codebook_digest,
    derive_seed,
    design_for_angle,
    localize,
    matched_sweep,
    measure_bs_ratio,
)
from .masks import MaskParams, MaskSet, build_masks, reference_power
from .modulation import (
    ConstraintError,
    ControlMode,
    PulseSchedule,
    ReflectionStates,
    apply_delta_constraint,
    check_delta_applicable,
    complement_fourier_coefficients,
    expand_columnwise,
    harmonic_reflection_tensor,
    harmonic_scalar_coefficients,
    harmonic_tensors,
    mirror_rise,
    pulse_fourier_coefficients,
)
from .synthesis import (
    CostEvaluator,
    ModeCodec,
    PsoConfig,
    PsoResult,
    SynthesisResult,
    best_of_seeds,
    cost_function,
    minimize,
    pso_optimize,
    ramp,
)

__version__ = "0.1.0"

__all__ = [
    "SPEED_OF_LIGHT",
    "Codebook",
    "CodebookEntry",
    "CodebookError",
    "ConfigError",
    "ConstraintError",
    "ControlMode",
    "CostEvaluator",
    "DirectionGrid",
    "EmsGeometry",
    "FieldEngine",
    "HarmonicPattern",
    "LocalizationResult",
    "MaskLevels",
    "MaskParams",
    "MaskSet",
    "ModeCodec",
    "MonopulseRatio",
    "PlaneWaveIncidence",
    "PsoConfig",
    "PsoResult",
    "PulseSchedule",
    "ReflectionStates",
    "RunConfig",
    "Scenario",
    "SweepSample",
    "SynthesisResult",
    "apply_delta_constraint",
    "best_of_seeds",
    "build_codebook",
    "build_masks",
    "cell_factor",
    "check_delta_applicable",
    "codebook_digest",
    "complement_fourier_coefficients",
    "cost_function",
    "default_config",
    "derive_seed",
    "design_for_angle",
    "expand_columnwise",
    "field_samples",
    "harmonic_far_field",
    "harmonic_reflection_tensor",
    "harmonic_scalar_coefficients",
    "harmonic_tensors",
    "incident_cell_excitation",
    "load_config",
    "localize",
    "matched_sweep",
    "measure_bs_ratio",
    "minimize",
    "mirror_rise",
    "monopulse_ratio",
    "parse_config",
    "power_db",
    "power_pattern",
    "pso_optimize",
    "pulse_fourier_coefficients",
    "ramp",
    "ratio_from_powers",
    "read_codebook",
    "reference_power",
    "scenario_digest",
    "write_codebook",
]
