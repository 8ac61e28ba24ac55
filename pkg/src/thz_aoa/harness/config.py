"""Simulation configuration, presets and the YAML config-file schema."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from ..estimator import SystemModel
from ..geometry import SubcarrierGrid, UpaGeometry
from ..rf_frontend import satellite_panels

SCHEMA_VERSION = 1
SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """One Monte-Carlo campaign. Defaults are the full-scale 200x200 reference setup."""

    schema_version: int = SCHEMA_VERSION
    # arrays
    uav_h: int = 200
    uav_v: int = 200
    sat_sub_h: int = 200
    sat_sub_v: int = 200
    sat_panels_h: int = 1
    sat_panels_v: int = 2
    # virtual arrays formed by subarray selection
    uav_virtual_h: int = 5
    uav_virtual_v: int = 5
    sat_virtual_h: int = 5
    sat_virtual_v: int = 5
    # antennas per TTDU group
    uav_group_h: int = 5
    uav_group_v: int = 5
    sat_group_h: int = 5
    sat_group_v: int = 5
    # OFDM grid
    f_z: float = 0.1e12
    f_s: float = 1e9
    K: int = 2048
    n_cp: int = 128
    t_sym: float | None = None
    n_uav: int = 2
    # scenario
    angle_max_deg: float = 60.0
    prior_offset_deg: float = 5.0
    delay_max_s: float | None = None
    alpha_variance: float = 1.0
    altitude_m: float = 200e3
    radius_m: float = 50e3
    radial_velocity: float = 200.0
    doppler_residual_ratio: float = 0.0
    # campaign
    snr_min_db: float = 10.0
    snr_max_db: float = 30.0
    snr_step_db: float = 5.0
    trials: int = 500
    i_max_uav: int = 2
    i_max_sat: int = 2
    mode: str = "proposed"
    seed: int = 0
    power: float = 1.0
    min_eig_ratio: float = 1.0
    failure_threshold: float = 0.5

    def __post_init__(self):
        validate(self)

    # ----- derived quantities -----
    @property
    def uav_geom(self) -> UpaGeometry:
        return UpaGeometry(self.uav_h, self.uav_v)

    @property
    def sat_geom(self) -> UpaGeometry:
        return UpaGeometry(self.sat_panels_h * self.sat_sub_h, self.sat_panels_v * self.sat_sub_v)

    @property
    def grid(self) -> SubcarrierGrid:
        return SubcarrierGrid(self.K, self.f_z, self.f_s, self.n_cp, self.t_sym)

    @property
    def delay_max(self) -> float:
        return self.delay_max_s if self.delay_max_s is not None else self.n_cp / self.f_s

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_z

    @property
    def snr_points(self) -> np.ndarray:
        n = int(np.floor((self.snr_max_db - self.snr_min_db) / self.snr_step_db + 1e-9)) + 1
        return self.snr_min_db + self.snr_step_db * np.arange(n)

    def system_model(self, noise_sigma: float = 0.0) -> SystemModel:
        return SystemModel(
            uav_geom=self.uav_geom,
            sat_geom=self.sat_geom,
            panels=tuple(satellite_panels(self.sat_panels_h, self.sat_panels_v, self.sat_sub_h, self.sat_sub_v)),
            uav_virtual=(self.uav_virtual_h, self.uav_virtual_v),
            sat_virtual=(self.sat_virtual_h, self.sat_virtual_v),
            grid=self.grid,
            mode=self.mode,
            uav_groups=(self.uav_group_h, self.uav_group_v),
            sat_groups=(self.sat_group_h, self.sat_group_v),
            i_max_uav=self.i_max_uav,
            i_max_sat=self.i_max_sat,
            noise_sigma=noise_sigma,
            power=self.power,
            doppler_residual_ratio=self.doppler_residual_ratio,
            min_eig_ratio=self.min_eig_ratio,
        )

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def validate(c: SimConfig) -> None:
    """Raise :class:`ConfigError` describing the first inconsistency found."""
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(c.schema_version == SCHEMA_VERSION, f"unsupported schema_version {c.schema_version}")
    for name in ("uav_h", "uav_v", "sat_sub_h", "sat_sub_v", "sat_panels_h", "sat_panels_v",
                 "K", "trials", "i_max_uav", "i_max_sat", "n_uav"):
        need(isinstance(getattr(c, name), int) and getattr(c, name) >= 1, f"{name} must be a positive integer")
    need(c.n_cp >= 0, "n_cp must be >= 0")
    need(c.n_uav == c.sat_panels_h * c.sat_panels_v,
         "n_uav must equal sat_panels_h * sat_panels_v (one satellite panel per UAV)")
    need(c.K % c.n_uav == 0, f"K={c.K} is not divisible by n_uav={c.n_uav}")
    for side, (nh, nv) in (("uav", (c.uav_h, c.uav_v)), ("sat", (c.sat_sub_h, c.sat_sub_v))):
        ih, iv = getattr(c, f"{side}_virtual_h"), getattr(c, f"{side}_virtual_v")
        need(2 <= ih <= nh and 2 <= iv <= nv, f"{side} virtual array {ih}x{iv} must be >=2x2 and fit {nh}x{nv}")
        gh, gv = getattr(c, f"{side}_group_h"), getattr(c, f"{side}_group_v")
        need(gh >= 1 and gv >= 1, f"{side} TTDU groups must be >= 1")
        need(nh % gh == 0 and nv % gv == 0, f"{side} TTDU groups {gh}x{gv} must tile the {nh}x{nv} array")
    need(c.sat_geom.n_h % c.sat_group_h == 0 and c.sat_geom.n_v % c.sat_group_v == 0,
         "satellite TTDU groups must tile the whole satellite array")
    need(c.f_z > 0 and c.f_s > 0 and c.f_s < 2 * c.f_z, "need 0 < f_s < 2 f_z")
    need(0 < c.angle_max_deg < 89.5, "angle_max_deg must lie in (0, 89.5)")
    need(c.prior_offset_deg >= 0, "prior_offset_deg must be >= 0")
    need(c.alpha_variance > 0 and c.power >= 0, "alpha_variance > 0 and power >= 0 required")
    need(c.altitude_m > 0 and c.radius_m >= 0, "altitude must be positive, radius non-negative")
    need(c.snr_step_db > 0 and c.snr_max_db >= c.snr_min_db, "bad SNR sweep")
    need(c.mode in ("proposed", "no_ttdu", "ideal_ttdu"), f"unknown mode {c.mode!r}")
    need(isinstance(c.seed, int) and 0 <= c.seed < 2 ** 64, "seed must be an unsigned 64-bit integer")
    need(0 <= c.failure_threshold <= 1, "failure_threshold must lie in [0, 1]")
    need(c.min_eig_ratio >= 1.0, "min_eig_ratio must be >= 1")


PRESETS: dict[str, dict] = {
    "full": {},
    "desk": dict(
        uav_h=64, uav_v=64, sat_sub_h=64, sat_sub_v=64,
        uav_group_h=4, uav_group_v=4, sat_group_h=4, sat_group_v=4,
        K=256, n_cp=16, trials=500,
    ),
    "tiny": dict(
        uav_h=16, uav_v=16, sat_sub_h=16, sat_sub_v=16,
        uav_group_h=4, uav_group_v=4, sat_group_h=4, sat_group_v=4,
        K=64, n_cp=4, trials=50,
    ),
}


PRESET_ALIASES = {"paper": "full"}


def preset(name: str, **overrides) -> SimConfig:
    name = PRESET_ALIASES.get(name, name)
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return SimConfig(**{**PRESETS[name], **overrides})


_FIELD_TYPES = {f.name: f.type for f in fields(SimConfig)}


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    if value is None:
        if "None" in str(kind):
            return None
        raise ConfigError(f"{name} may not be null")
    try:
        if kind == "int":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if kind in ("float", "float | None"):
            if isinstance(value, bool):
                raise ValueError
            return float(value)
        if kind == "str":
            if not isinstance(value, str):
                raise ValueError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot interpret {value!r} as {kind}") from None
    return value


def from_mapping(data: dict, base: SimConfig | None = None) -> SimConfig:
    """Build a config from a mapping; unknown keys are rejected."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of keys to values")
    data = dict(data)
    start = base.to_dict() if base is not None else {}
    if "preset" in data:
        name = data.pop("preset")
        name = PRESET_ALIASES.get(name, name)
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}")
        start = preset(name).to_dict()
    unknown = sorted(set(data) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "schema_version" not in data and base is None:
        raise ConfigError("config file must declare schema_version")
    merged = {**start, **{k: _coerce(k, v) for k, v in data.items()}}
    try:
        return SimConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path, base: SimConfig | None = None) -> SimConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return from_mapping(data or {}, base)


def dump_config(c: SimConfig) -> str:
    return yaml.safe_dump(c.to_dict(), sort_keys=False)
