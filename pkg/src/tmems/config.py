"""YAML run configuration with a strict, unit-suffixed schema.

Unknown keys are fatal (with a nearest-key suggestion), every error names the
offending dotted key path, and explicit nulls mean "use the default". The
resolved configuration is a plain JSON-compatible mapping, so run summaries
can embed exactly what was used.
"""

import difflib
from dataclasses import dataclass
from typing import Optional

import numpy as np
import yaml

from .geometry import EmsGeometry
from .isac import MaskLevels, Scenario
from .modulation import ControlMode, ReflectionStates
from .synthesis import PsoConfig

MODE_NAMES = tuple(m.value for m in ControlMode)
POLARIZATIONS = ("te", "tm")


class ConfigError(ValueError):
    """Raised for unknown keys, wrong types, or out-of-range values."""


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _num(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{path}' must be a number")
    v = float(value)
    if not np.isfinite(v):
        raise ConfigError(f"'{path}' must be finite")
    return v


def _float_field(minimum=None, exclusive=False, maximum=None, max_exclusive=False):
    def parse(value, path):
        v = _num(value, path)
        if minimum is not None and (v <= minimum if exclusive else v < minimum):
            op = ">" if exclusive else ">="
            raise ConfigError(f"'{path}' must be {op} {minimum}")
        if maximum is not None and (v >= maximum if max_exclusive else v > maximum):
            op = "<" if max_exclusive else "<="
            raise ConfigError(f"'{path}' must be {op} {maximum}")
        return v
    return parse


def _int_field(minimum=None):
    def parse(value, path):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{path}' must be an integer")
        if minimum is not None and value < minimum:
            raise ConfigError(f"'{path}' must be >= {minimum}")
        return value
    return parse


def _choice_field(choices):
    def parse(value, path):
        if value not in choices:
            opts = ", ".join(repr(c) for c in choices)
            raise ConfigError(f"'{path}' must be one of {opts}")
        return value
    return parse


def _angle_list_field(minimum, maximum):
    def parse(value, path):
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(f"'{path}' must be a non-empty list of angles")
        out = []
        for i, item in enumerate(value):
            v = _num(item, f"{path}[{i}]")
            if not (minimum < v < maximum):
                raise ConfigError(
                    f"'{path}[{i}]' must lie strictly between {minimum} and {maximum} degrees")
            out.append(v)
        return out
    return parse


def _gamma_field(value, path):
    """Reflection tensor entry: scalar, [re, im], or 2x2 of [re, im]."""
    def canon(z):
        return [float(z.real), float(z.imag)]

    if isinstance(value, (int, float)) and not isinstance(value, bool):
        z = complex(float(value), 0.0)
        return [[canon(z), canon(0j)], [canon(0j), canon(z)]]
    if (isinstance(value, (list, tuple)) and len(value) == 2
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)):
        z = complex(float(value[0]), float(value[1]))
        return [[canon(z), canon(0j)], [canon(0j), canon(z)]]
    if isinstance(value, (list, tuple)) and len(value) == 2:
        rows = []
        for r, row in enumerate(value):
            if not isinstance(row, (list, tuple)) or len(row) != 2:
                raise ConfigError(f"'{path}' rows must have exactly 2 entries")
            cells = []
            for c, cell in enumerate(row):
                if (not isinstance(cell, (list, tuple)) or len(cell) != 2
                        or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in cell)):
                    raise ConfigError(
                        f"'{path}[{r}][{c}]' must be a [real, imaginary] pair of numbers")
                cells.append([float(cell[0]), float(cell[1])])
            rows.append(cells)
        return rows
    raise ConfigError(
        f"'{path}' must be a number, a [real, imaginary] pair, or a 2x2 matrix of pairs")


_SCHEMA = {
    "surface": {
        "rows": _int_field(minimum=1),
        "cols": _int_field(minimum=1),
        "cell_size_wl": _float_field(minimum=0.0, exclusive=True),
        "f0_hz": _float_field(minimum=0.0, exclusive=True),
    },
    "modulation": {
        "period_s": _float_field(minimum=0.0, exclusive=True),
        "mode": _choice_field(MODE_NAMES),
    },
    "states": {
        "gamma_on": _gamma_field,
        "gamma_off": _gamma_field,
    },
    "incidence": {
        "theta_deg": _float_field(minimum=0.0, maximum=90.0, max_exclusive=True),
        "phi_deg": _float_field(),
        "amplitude_v_m": _float_field(minimum=0.0, exclusive=True),
        "polarization": _choice_field(POLARIZATIONS),
    },
    "reflection": {
        "theta_deg": _float_field(minimum=-90.0, exclusive=True,
                                  maximum=90.0, max_exclusive=True),
    },
    "masks": {
        "sidelobe_db": _float_field(),
        "peak_floor_db": _float_field(),
        "ripple_db": _float_field(minimum=0.0),
        "null_depth_db": _float_field(),
        "lobe_floor_db": _float_field(),
        "main_halfwidth_u": _float_field(minimum=0.0, exclusive=True),
        "main_halfwidth_v": _float_field(minimum=0.0, exclusive=True),
        "lobe_offset_u": _float_field(minimum=0.0, exclusive=True),
        "lobe_halfwidth_u": _float_field(minimum=0.0, exclusive=True),
        "lobe_halfwidth_v": _float_field(minimum=0.0, exclusive=True),
        "null_halfwidth_u": _float_field(minimum=0.0, exclusive=True),
        "null_halfwidth_v": _float_field(minimum=0.0, exclusive=True),
        "shoulder_scale": _float_field(minimum=0.0, exclusive=True),
        "shoulder_margin_db": _float_field(minimum=0.0),
        "flank_scale": _float_field(minimum=0.0, exclusive=True),
        "flank_margin_db": _float_field(minimum=0.0),
    },
    "synthesis": {
        "grid_n": _int_field(minimum=2),
        "swarm_size": _int_field(minimum=1),
        "iterations": _int_field(minimum=0),
        "inertia": _float_field(minimum=0.0),
        "cognitive": _float_field(minimum=0.0),
        "social": _float_field(minimum=0.0),
        "seed": _int_field(minimum=0),
        "stagnation_window": _int_field(minimum=0),
        "stagnation_rtol": _float_field(minimum=0.0),
        "velocity_clamp": _float_field(minimum=0.0, exclusive=True),
    },
    "evaluation": {
        "grid_n": _int_field(minimum=2),
        "noise_power": _float_field(minimum=0.0),
    },
    "sweep": {
        "angles_deg": _angle_list_field(-90.0, 90.0),
    },
    "localization": {
        "candidates_deg": _angle_list_field(-90.0, 90.0),
        "repeats": _int_field(minimum=1),
    },
}

_IDENTITY = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]
_NEG_IDENTITY = [[[-1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-1.0, 0.0]]]

_DEFAULTS = {
    "surface": {"rows": 10, "cols": 10, "cell_size_wl": 0.45, "f0_hz": 5.5e9},
    "modulation": {"period_s": 1.0e-6, "mode": "delta"},
    "states": {"gamma_on": _IDENTITY, "gamma_off": _NEG_IDENTITY},
    "incidence": {"theta_deg": 0.0, "phi_deg": 0.0, "amplitude_v_m": 1.0,
                  "polarization": "te"},
    "reflection": {"theta_deg": 0.0},
    "masks": {"sidelobe_db": -10.0, "peak_floor_db": -3.0, "ripple_db": 3.0,
              "null_depth_db": -40.0, "lobe_floor_db": -12.0,
              "main_halfwidth_u": None, "main_halfwidth_v": None,
              "lobe_offset_u": None, "lobe_halfwidth_u": None, "lobe_halfwidth_v": None,
              "null_halfwidth_u": None, "null_halfwidth_v": None,
              "shoulder_scale": 1.2, "shoulder_margin_db": 0.7,
              "flank_scale": 0.5, "flank_margin_db": 0.2},
    "synthesis": {"grid_n": 64, "swarm_size": 20, "iterations": 1000, "inertia": 0.4,
                  "cognitive": 2.0, "social": 2.0, "seed": 1,
                  "stagnation_window": 100, "stagnation_rtol": 1.0e-6,
                  "velocity_clamp": 0.5},
    "evaluation": {"grid_n": 201, "noise_power": 0.0},
    "sweep": {"angles_deg": [0.0]},
    "localization": {"candidates_deg": [0.0, 10.0, 20.0, 30.0, 40.0, 50.0], "repeats": 1},
}


def _resolve(schema: dict, defaults: dict, user: dict, path: str = "") -> dict:
    for key in sorted(set(user) - set(schema)):
        close = difflib.get_close_matches(str(key), [str(k) for k in schema], n=1)
        hint = f"; did you mean '{_join(path, close[0])}'?" if close else ""
        raise ConfigError(f"unknown key '{_join(path, str(key))}'{hint}")
    out = {}
    for key, spec in schema.items():
        p = _join(path, key)
        if isinstance(spec, dict):
            sub = user.get(key)
            if sub is None:
                sub = {}
            if not isinstance(sub, dict):
                raise ConfigError(f"'{p}' must be a mapping")
            out[key] = _resolve(spec, defaults[key], sub, p)
        elif key in user and user[key] is not None:
            out[key] = spec(user[key], p)
        else:
            out[key] = defaults[key]
    return out


def default_config() -> dict:
    """A fresh copy of the fully-resolved default configuration."""
    return _resolve(_SCHEMA, _DEFAULTS, {})


def _to_matrix(canon) -> np.ndarray:
    return np.array([[complex(c[0], c[1]) for c in row] for row in canon])


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully-resolved run parameters."""

    resolved: dict

    @property
    def geometry(self) -> EmsGeometry:
        s = self.resolved["surface"]
        return EmsGeometry(rows=s["rows"], cols=s["cols"],
                           cell_size_wl=s["cell_size_wl"], f0_hz=s["f0_hz"])

    @property
    def states(self) -> ReflectionStates:
        st = self.resolved["states"]
        return ReflectionStates(gamma_on=_to_matrix(st["gamma_on"]),
                                gamma_off=_to_matrix(st["gamma_off"]))

    @property
    def mode(self) -> ControlMode:
        return ControlMode(self.resolved["modulation"]["mode"])

    @property
    def jones(self) -> tuple:
        if self.resolved["incidence"]["polarization"] == "te":
            return (1.0 + 0.0j, 0.0j)
        return (0.0j, 1.0 + 0.0j)

    @property
    def pso(self) -> PsoConfig:
        s = self.resolved["synthesis"]
        return PsoConfig(swarm_size=s["swarm_size"], iterations=s["iterations"],
                         inertia=s["inertia"], cognitive=s["cognitive"], social=s["social"],
                         seed=s["seed"], stagnation_window=s["stagnation_window"],
                         stagnation_rtol=s["stagnation_rtol"],
                         velocity_clamp=s["velocity_clamp"])

    @property
    def mask_levels(self) -> MaskLevels:
        return MaskLevels(**self.resolved["masks"])

    @property
    def seed(self) -> int:
        return self.resolved["synthesis"]["seed"]

    @property
    def eval_grid_n(self) -> int:
        return self.resolved["evaluation"]["grid_n"]

    @property
    def noise_power(self) -> float:
        return self.resolved["evaluation"]["noise_power"]

    @property
    def sweep_angles_deg(self) -> list:
        return list(self.resolved["sweep"]["angles_deg"])

    @property
    def candidates_deg(self) -> list:
        return list(self.resolved["localization"]["candidates_deg"])

    @property
    def repeats(self) -> int:
        return self.resolved["localization"]["repeats"]

    def scenario(self) -> Scenario:
        inc = self.resolved["incidence"]
        return Scenario(
            geometry=self.geometry,
            states=self.states,
            period_s=self.resolved["modulation"]["period_s"],
            mode=self.mode,
            theta_inc_deg=inc["theta_deg"],
            theta_refl_deg=self.resolved["reflection"]["theta_deg"],
            phi_inc_deg=inc["phi_deg"],
            amplitude_v_m=inc["amplitude_v_m"],
            jones=self.jones,
            mask=self.mask_levels,
            pso=self.pso,
            synth_grid_n=self.resolved["synthesis"]["grid_n"],
        )


def parse_config(mapping: Optional[dict]) -> RunConfig:
    """Validate a raw mapping (e.g. parsed YAML) into a RunConfig."""
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError("configuration root must be a mapping")
    cfg = RunConfig(resolved=_resolve(_SCHEMA, _DEFAULTS, mapping))
    cfg.states  # passivity check surfaces early, not at first use
    cfg.scenario()
    return cfg


def load_config(path: Optional[str]) -> RunConfig:
    """Read a YAML file (or use pure defaults when path is None)."""
    if path is None:
        return parse_config({})
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"could not parse {path}: {exc}") from exc
    return parse_config(raw)


def apply_overrides(cfg: RunConfig, seed: Optional[int] = None,
                    eval_grid_n: Optional[int] = None,
                    mode: Optional[str] = None) -> RunConfig:
    """Command-line overrides, reflected in the resolved mapping."""
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in cfg.resolved.items()}
    if seed is not None:
        if seed < 0:
            raise ConfigError("'synthesis.seed' must be >= 0")
        raw["synthesis"]["seed"] = int(seed)
    if eval_grid_n is not None:
        if eval_grid_n < 2:
            raise ConfigError("'evaluation.grid_n' must be >= 2")
        raw["evaluation"]["grid_n"] = int(eval_grid_n)
    if mode is not None:
        if mode not in MODE_NAMES:
            raise ConfigError(f"'modulation.mode' must be one of {MODE_NAMES}")
        raw["modulation"]["mode"] = mode
    return parse_config(raw)
