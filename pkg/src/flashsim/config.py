"""Run configuration documents.

A document is YAML with optional ``preset:`` naming one of the packaged
presets (``flash2010``, ``minicrash``, ``calibration``).  The preset is
merged over the packaged defaults and the document over the preset; unknown
keys are rejected with the dotted key in the message.
"""
import copy
import dataclasses
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .agents import (
    CommonAgentParams, FundamentalParams, InstitutionalParams, MarketMakerParams,
    MomentumParams, NoiseParams, SpikingParams,
)
from .kernel import ConfigError, FundamentalSource, SimConfig

PRESETS = ("flash2010", "minicrash", "calibration")

# the seven calibrated parameters and where each lives in SimConfig
CALIBRATED = {
    "mu_ell": ("orders", "mu_ell"),
    "sigma_nt": ("noise_traders", "sigma_nt"),
    "kappa1": ("fundamental_traders", "kappa1"),
    "kappa2": ("fundamental_traders", "kappa2"),
    "beta_l": ("long_momentum", "beta"),
    "beta_s": ("short_momentum", "beta"),
    "theta_mm": ("market_makers", "theta_mm"),
}

# model symbol -> config key (one key per symbol)
PARAMETER_KEYS = {
    "kappa_1": "fundamental_traders.kappa1",
    "kappa_2": "fundamental_traders.kappa2",
    "N_FT": "fundamental_traders.n_ft",
    "S_interval": "fundamental_traders.interval_steps",
    "beta_L": "long_momentum.beta",
    "alpha_L": "long_momentum.alpha",
    "N_LMT": "long_momentum.n_traders",
    "beta_S": "short_momentum.beta",
    "N_SMT": "short_momentum.n_traders",
    "alpha_S": "short_momentum.alpha",
    "sigma_NT": "noise_traders.sigma_nt",
    "N_NT": "noise_traders.n_nt",
    "gamma": "orders.gamma",
    "delta": "orders.delta",
    "rho": "orders.rho",
    "V": "orders.order_volume",
    "mu_ell": "orders.mu_ell",
    "Sigma_ell": "orders.sigma_ell",
    "N_MM": "market_makers.n_mm",
    "delta_MM": "market_makers.delta_mm",
    "theta_MM": "market_makers.theta_mm",
    "p_edge": "market_makers.edge_max",
    "eps_limit": "market_makers.inv_limit",
    "eps_safe": "market_makers.inv_safe",
    "eps_rest": "market_makers.rest_steps",
    "N_ST": "spiking.n_st",
    "N_spike": "spiking.n_spike",
    "mu_spike": "spiking.mu_spike",
    "V_spike": "spiking.v_spike",
    "r": "institutional.rate",
    "Q": "institutional.inventory",
    "n": "institutional.interval_seconds",
}

_SECTIONS = {
    "orders": CommonAgentParams,
    "fundamental_traders": FundamentalParams,
    "long_momentum": MomentumParams,
    "short_momentum": MomentumParams,
    "noise_traders": NoiseParams,
    "market_makers": MarketMakerParams,
    "institutional": InstitutionalParams,
    "spiking": SpikingParams,
    "fundamental": FundamentalSource,
}
# per-agent state and the shared gamma are not settable under the momentum sections
_HIDDEN = {MomentumParams: {"gamma", "momentum"}}
_SCALARS = ("seed", "total_steps", "step_ms", "session_start", "warmup_steps", "tick_size",
            "depth_levels", "shuffle_agents", "initial_price", "ft_phases")


@dataclass
class CalibrationSettings:
    budget: int = 500
    n_rep: int = 3
    design_fraction: float = 0.25
    batch_size: int = 10
    pool_size: int = 10000
    grid_points: int = 3
    grid_radius: float = 0.1
    n_validation: int = 60
    bounds: dict = field(default_factory=lambda: {
        k: [0.0, 1.0 if k == "theta_mm" else 2.0] for k in CALIBRATED})

    def validate(self):
        if set(self.bounds) != set(CALIBRATED):
            raise ConfigError(f"calibration.bounds must list exactly {sorted(CALIBRATED)}")
        for k, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise ConfigError(f"calibration.bounds.{k}: need lower < upper")
        if self.n_rep < 1 or self.batch_size < 1 or self.grid_points < 1:
            raise ConfigError("calibration: n_rep, batch_size and grid_points must be >= 1")
        if not 0 < self.design_fraction <= 1:
            raise ConfigError("calibration.design_fraction must be in (0, 1]")
        if self.budget < 1:
            raise ConfigError("calibration.budget must be >= 1")


@dataclass
class DetectionSettings:
    k: list = field(default_factory=lambda: [2, 3, 4])
    window_seconds: int = 600
    recovery: float = 0.5
    move_seconds: int = 60

    def validate(self):
        if not 1 <= self.move_seconds <= self.window_seconds:
            raise ConfigError("detection.move_seconds must be in [1, window_seconds]")
        if not self.k or any(v <= 0 for v in self.k):
            raise ConfigError("detection.k must be a non-empty list of positive numbers")
        if self.window_seconds < 2:
            raise ConfigError("detection.window_seconds must be >= 2")
        if not 0 < self.recovery <= 1:
            raise ConfigError("detection.recovery must be in (0, 1]")


@dataclass
class SweepSettings:
    n_runs: int = 60

    def validate(self):
        if self.n_runs < 1:
            raise ConfigError("sweep.n_runs must be >= 1")


@dataclass
class RunDocument:
    sim: SimConfig
    calibration: CalibrationSettings
    detection: DetectionSettings
    sweep: SweepSettings
    preset: str = None


def _packaged():
    text = resources.files(__package__).joinpath("presets.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        key = f"{path}{k}"
        if k not in out:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(out[k], dict) and k != "bounds":
            if not isinstance(v, dict):
                raise ConfigError(f"config key {key!r} must be a mapping")
            out[k] = _merge(out[k], v, key + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _build(cls, values, section):
    names = {f.name for f in dataclasses.fields(cls)} - _HIDDEN.get(cls, set())
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown config key {section}.{sorted(unknown)[0]!r}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def _to_sim(d):
    kw = {k: d[k] for k in _SCALARS if k in d}
    for name, cls in _SECTIONS.items():
        kw[name] = _build(cls, d.get(name, {}), name)
    cfg = SimConfig(**kw)
    cfg.long_momentum.gamma = cfg.short_momentum.gamma = cfg.orders.gamma
    return cfg


def resolve(doc=None, preset=None):
    """Merged configuration mapping for a document (dict) and preset name."""
    pk = _packaged()
    doc = dict(doc or {})
    name = doc.pop("preset", None) or preset
    merged = pk["defaults"]
    if name is not None:
        if name not in pk["presets"]:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(pk['presets'])}")
        merged = _merge(merged, pk["presets"][name])
    return _merge(merged, doc), name


def from_dict(doc=None, preset=None) -> RunDocument:
    d, name = resolve(doc, preset)
    sim = _to_sim(d)
    sim.validate()
    out = RunDocument(
        sim=sim,
        calibration=_build(CalibrationSettings, d["calibration"], "calibration"),
        detection=_build(DetectionSettings, d["detection"], "detection"),
        sweep=_build(SweepSettings, d["sweep"], "sweep"),
        preset=name,
    )
    out.calibration.validate()
    out.detection.validate()
    out.sweep.validate()
    return out


def load_document(path=None, preset=None) -> RunDocument:
    doc = {}
    if path is not None:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(doc, preset)


def load_config(path=None, preset=None) -> SimConfig:
    """SimConfig from a config file and/or preset name."""
    return load_document(path, preset).sim


def preset_config(name) -> SimConfig:
    return from_dict(preset=name).sim


def to_dict(cfg: SimConfig):
    """Plain mapping of ``cfg`` that :func:`from_dict` maps back to an equal config."""
    if cfg.fundamental_series is not None:
        raise ConfigError("configs carrying an explicit fundamental_series are not serializable")
    out = {k: getattr(cfg, k) for k in _SCALARS}
    for name, cls in _SECTIONS.items():
        obj = getattr(cfg, name)
        out[name] = {f.name: copy.deepcopy(getattr(obj, f.name)) for f in dataclasses.fields(cls)
                     if f.name not in _HIDDEN.get(cls, set())}
    return out


def dump_config(cfg: SimConfig):
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def with_params(cfg: SimConfig, **values) -> SimConfig:
    """Copy of ``cfg`` with dotted keys (``market_makers.inv_limit``) or
    calibrated-parameter names (``kappa1``) replaced."""
    out = copy.deepcopy(cfg)
    for key, v in values.items():
        if key in CALIBRATED:
            sec, attr = CALIBRATED[key]
        elif "." in key:
            sec, attr = key.split(".", 1)
        else:
            sec, attr = None, key
        obj = out if sec is None else getattr(out, sec, None)
        if obj is None or not hasattr(obj, attr):
            raise ConfigError(f"unknown config key {key!r}")
        cur = getattr(obj, attr)
        if isinstance(cur, (bool, np.bool_)):
            v = bool(v)
        elif isinstance(cur, (int, np.integer)) and not isinstance(cur, bool):
            v = int(round(v))
        setattr(obj, attr, v)
    out.long_momentum.gamma = out.short_momentum.gamma = out.orders.gamma
    return out
