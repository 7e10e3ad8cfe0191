"""Run configuration: a YAML document resolved into typed settings.

Every field has a default, so an empty file (or no file) describes the
eight-leaf reference link. Units: losses and powers are linear, ratios are
in dB, the symbol rate is in baud.

.. code-block:: yaml

    profile:
      losses: [1.0, 1.33, 1.74, 2.32, 3.05, 4.03, 5.25, 6.53]
      noise_variance: 0.0237        # white-noise variance, linear
      peak_amplitude: 2.579         # transmitter peak budget A_p
      dscm_power: 1.0               # average power per rail before matching
      symbol_rate: 8.0e9            # per subcarrier, baud (= bandwidth, Hz)
      noise_samples_per_symbol: 24  # sample rate of noise_variance, per symbol
    waveform:
      rrc_rolloff: 0.015625
      symbols_per_block: 4096
      blocks: 64                    # symbols per subcarrier = blocks * 4096
      oversampling: 1
    quadrature: {abs_tol: 1.0e-12, rel_tol: 1.0e-10, max_subdivisions: 2000}
    optimization:
      ber_target: 3.8e-3
      se_max: 6.0
      se_min: 2.0
      delta_se: 0.01
      fec_overhead: 0.07
      loss_step: 0.05               # loss-grid envelope spacing
      refit_iterations: 2           # noise re-harvests at the latest SEs
      harvest_blocks: 32
      baseline_ses: [4.8, 4.4, 4.0, 3.6, 3.2, 2.8, 2.4, 2.0]
      baseline_ratio_db: 13.0       # "no clipping"
    sweep: {ratio_min_db: 0.0, ratio_max_db: 16.0, ratio_step_db: 0.1}
    validation: {ratios_db: [4, 5, 6, 7, 8, 9, 10, 11, 12, 13]}
    simulation: {ses: null, ratio_db: null, dump_waveform: false}
    seed: 2024
    output_dir: out
    mode: both                      # theory | sim | both
    lut_model: piecewise            # piecewise | gaussian
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import yaml

from .analytics import (
    REFERENCE_LOSSES,
    REFERENCE_NOISE_SAMPLES_PER_SYMBOL,
    REFERENCE_NOISE_VARIANCE,
    REFERENCE_PEAK_AMPLITUDE,
    REFERENCE_SYMBOL_RATE,
    LinkProfile,
)
from .errors import ConfigurationError, DscmError
from .scalar_math import QuadratureSpec
from .simulator import WaveformConfig

MODES = ("theory", "sim", "both")
LUT_MODELS = ("piecewise", "gaussian")
BASELINE_SES = (4.8, 4.4, 4.0, 3.6, 3.2, 2.8, 2.4, 2.0)

DEFAULTS: Dict[str, Any] = {
    "profile": {
        "losses": list(REFERENCE_LOSSES),
        "noise_variance": REFERENCE_NOISE_VARIANCE,
        "peak_amplitude": REFERENCE_PEAK_AMPLITUDE,
        "dscm_power": 1.0,
        "symbol_rate": REFERENCE_SYMBOL_RATE,
        "noise_samples_per_symbol": REFERENCE_NOISE_SAMPLES_PER_SYMBOL,
    },
    "waveform": {
        "rrc_rolloff": 1.0 / 64.0,
        "symbols_per_block": 4096,
        "blocks": 64,
        "oversampling": 1,
    },
    "quadrature": {"abs_tol": 1e-12, "rel_tol": 1e-10, "max_subdivisions": 2000},
    "optimization": {
        "ber_target": 3.8e-3,
        "se_max": 6.0,
        "se_min": 2.0,
        "delta_se": 0.01,
        "fec_overhead": 0.07,
        "loss_step": 0.05,
        "refit_iterations": 2,
        "harvest_blocks": 32,
        "baseline_ses": list(BASELINE_SES),
        "baseline_ratio_db": 13.0,
    },
    "sweep": {"ratio_min_db": 0.0, "ratio_max_db": 16.0, "ratio_step_db": 0.1},
    "validation": {"ratios_db": [4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0]},
    "simulation": {"ses": None, "ratio_db": None, "dump_waveform": False},
    "seed": 2024,
    "output_dir": "out",
    "mode": "both",
    "lut_model": "piecewise",
}


@dataclass(frozen=True)
class RunConfig:
    profile: LinkProfile
    waveform: WaveformConfig
    quad: QuadratureSpec
    ber_target: float
    se_max: float
    se_min: float
    delta_se: float
    fec_overhead: float
    loss_step: float
    refit_iterations: int
    harvest_blocks: int
    baseline_ses: Tuple[float, ...]
    baseline_ratio_db: float
    sweep: Tuple[float, float, float]
    validation_ratios_db: Tuple[float, ...]
    sim_ses: Optional[Tuple[float, ...]]
    sim_ratio_db: Optional[float]
    dump_waveform: bool
    output_dir: str
    mode: str
    lut_model: str
    raw: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def simulate(self) -> bool:
        return self.mode in ("sim", "both")

    @property
    def seed(self) -> int:
        return self.waveform.seed

    def to_dict(self) -> Dict[str, Any]:
        """The fully resolved document (defaults merged with overrides)."""
        return copy.deepcopy(self.raw)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True, default_flow_style=None)


def _merge(base: Dict[str, Any], over: Dict[str, Any], path: str = "") -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigurationError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def _floats(seq, name) -> Tuple[float, ...]:
    try:
        return tuple(float(x) for x in seq)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a list of numbers") from None


def resolve(doc: Optional[Dict[str, Any]] = None, **overrides) -> RunConfig:
    """Merge ``doc`` and keyword overrides (``seed``, ``output_dir``, ``mode``,
    ``lut_model``; ``None`` means keep) onto the defaults and validate."""
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigurationError("configuration root must be a mapping")
    merged = _merge(DEFAULTS, doc)
    for key, value in overrides.items():
        if value is not None:
            merged = _merge(merged, {key: value})
    p, w, q, o = merged["profile"], merged["waveform"], merged["quadrature"], merged["optimization"]
    if merged["mode"] not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {merged['mode']!r}")
    if merged["lut_model"] not in LUT_MODELS:
        raise ConfigurationError(f"lut_model must be one of {LUT_MODELS}, got {merged['lut_model']!r}")
    try:
        losses = _floats(p["losses"], "profile.losses")
        if not losses:
            raise ConfigurationError("profile.losses must list at least one leaf")
        profile = LinkProfile(
            losses=losses,
            noise_variance=float(p["noise_variance"]),
            peak_amplitude=float(p["peak_amplitude"]),
            dscm_power=float(p["dscm_power"]),
            subcarrier_bandwidth=float(p["symbol_rate"]),
            noise_samples_per_symbol=float(p["noise_samples_per_symbol"]),
        )
        waveform = WaveformConfig(
            rrc_rolloff=float(w["rrc_rolloff"]),
            symbols_per_block=int(w["symbols_per_block"]),
            blocks=int(w["blocks"]),
            oversampling=int(w["oversampling"]),
            seed=int(merged["seed"]),
        )
        quad = QuadratureSpec(float(q["abs_tol"]), float(q["rel_tol"]), int(q["max_subdivisions"]))
        sim = merged["simulation"]
        cfg = RunConfig(
            profile=profile,
            waveform=waveform,
            quad=quad,
            ber_target=float(o["ber_target"]),
            se_max=float(o["se_max"]),
            se_min=float(o["se_min"]),
            delta_se=float(o["delta_se"]),
            fec_overhead=float(o["fec_overhead"]),
            loss_step=float(o["loss_step"]),
            refit_iterations=int(o["refit_iterations"]),
            harvest_blocks=int(o["harvest_blocks"]),
            baseline_ses=_floats(o["baseline_ses"], "optimization.baseline_ses"),
            baseline_ratio_db=float(o["baseline_ratio_db"]),
            sweep=(
                float(merged["sweep"]["ratio_min_db"]),
                float(merged["sweep"]["ratio_max_db"]),
                float(merged["sweep"]["ratio_step_db"]),
            ),
            validation_ratios_db=_floats(merged["validation"]["ratios_db"], "validation.ratios_db"),
            sim_ses=None if sim["ses"] is None else _floats(sim["ses"], "simulation.ses"),
            sim_ratio_db=None if sim["ratio_db"] is None else float(sim["ratio_db"]),
            dump_waveform=bool(sim["dump_waveform"]),
            output_dir=str(merged["output_dir"]),
            mode=merged["mode"],
            lut_model=merged["lut_model"],
            raw=merged,
        )
    except ConfigurationError:
        raise
    except DscmError as exc:
        raise ConfigurationError(f"invalid configuration: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid configuration value: {exc}") from exc
    if not (0 < cfg.ber_target < 0.5):
        raise ConfigurationError("optimization.ber_target must lie in (0, 0.5)")
    if not (0 < cfg.se_min < cfg.se_max <= 6.0):
        raise ConfigurationError("need 0 < se_min < se_max <= 6")
    if cfg.delta_se <= 0 or cfg.loss_step <= 0 or cfg.fec_overhead < 0:
        raise ConfigurationError("delta_se and loss_step must be positive, fec_overhead >= 0")
    if len(cfg.baseline_ses) != profile.subcarrier_count:
        raise ConfigurationError("optimization.baseline_ses needs one value per leaf")
    if cfg.sim_ses is not None and len(cfg.sim_ses) != profile.subcarrier_count:
        raise ConfigurationError("simulation.ses needs one value per leaf")
    lo, hi, step = cfg.sweep
    if not (step > 0 and hi > lo):
        raise ConfigurationError("sweep needs ratio_max_db > ratio_min_db and a positive step")
    if cfg.refit_iterations < 0 or cfg.harvest_blocks < 1:
        raise ConfigurationError("refit_iterations must be >= 0 and harvest_blocks >= 1")
    return cfg


def load_config(path: Optional[str] = None, **overrides) -> RunConfig:
    doc: Dict[str, Any] = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigurationError(f"configuration file {path!r} not found")
        try:
            with open(path, encoding="utf-8") as fh:
                doc = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
    return resolve(doc, **overrides)
