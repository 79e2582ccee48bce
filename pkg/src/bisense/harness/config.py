"""INI configuration: ``[system]``, ``[scene]``, ``[target]`` and ``[sweep]`` sections.

Keys in ``[system]`` mirror :class:`SystemConfig` fields. Degrees and dB are
accepted here only (``*_deg`` boresight angles, SNR axes); everything
returned is SI/radians.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np

from ..core import ConfigurationError, SceneGeometry, SystemConfig, TargetState, cp_from_area

SWEEP_MODES = ("snr_sweep", "rcs_sweep", "single_shot", "ambiguity_demo")
PROFILES = ("desk", "full")


@dataclass(frozen=True)
class SweepSpec:
    mode: str = "snr_sweep"
    axis: tuple = (0.0,)
    trials: int = 200
    seed: int = 1
    estimate_doppler: bool = False
    refine: str = "local"
    oversample: int = 4
    out: str | None = None

    def __post_init__(self):
        if self.mode not in SWEEP_MODES:
            raise ConfigurationError(f"sweep mode must be one of {SWEEP_MODES}, got {self.mode!r}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        axis = tuple(float(v) for v in self.axis)
        if not axis:
            raise ConfigurationError("sweep axis must be nonempty")
        if list(axis) != sorted(axis):
            raise ConfigurationError("sweep axis must be sorted")
        object.__setattr__(self, "axis", axis)

    @property
    def axis_unit(self) -> str:
        return "m2" if self.mode == "rcs_sweep" else "dB"


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig
    scene: SceneGeometry
    target: TargetState
    sweep: SweepSpec


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _angle_vector(deg: float) -> np.ndarray:
    rad = np.deg2rad(deg)
    return np.array([np.cos(rad), np.sin(rad)])


def _read(source) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if str(source) in PROFILES:
        text = resources.files("bisense.profiles").joinpath(f"{source}.ini").read_text()
        parser.read_string(text)
        return parser
    path = Path(source)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    parser.read(path)
    return parser


def load_config(source) -> RunConfig:
    """Parse a config file path, or a built-in profile name (``desk``, ``full``)."""
    try:
        return _parse(_read(source))
    except configparser.Error as exc:
        raise ConfigurationError(str(exc)) from exc
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"invalid configuration: {exc}") from exc


def _parse(parser: configparser.ConfigParser) -> RunConfig:
    sc = parser["scene"] if parser.has_section("scene") else {}
    scene_kw = {}
    for key in ("tx_position", "rx_position"):
        if key in sc:
            scene_kw[key] = _floats(sc[key])
    if "area" in sc:
        scene_kw["area"] = tuple(_floats(sc["area"]))
    for node in ("tx", "rx"):
        if f"{node}_boresight_deg" in sc:
            scene_kw[f"{node}_boresight"] = _angle_vector(float(sc[f"{node}_boresight_deg"]))
    scene = SceneGeometry(**scene_kw)

    sys_kw = {}
    known = {f.name: f.type for f in fields(SystemConfig)}
    if parser.has_section("system"):
        for key, raw in parser["system"].items():
            if key not in known:
                raise ConfigurationError(f"unknown [system] key {key!r}")
            if key == "cp_duration" and raw.strip().lower() == "auto":
                continue
            if key == "snr_subcarriers":
                sys_kw[key] = raw.strip()
            elif key in ("total_subcarriers", "active_subcarriers", "symbols", "n_tx", "n_rx",
                         "bandwidth_ratio"):
                sys_kw[key] = int(raw)
            else:
                sys_kw[key] = float(raw)
    if "cp_duration" not in sys_kw:
        sys_kw["cp_duration"] = cp_from_area(scene)
    system = SystemConfig(**sys_kw)

    tg = parser["target"] if parser.has_section("target") else {}
    target = TargetState(
        position=_floats(tg["position"]) if "position" in tg else [7.49, 2.51],
        speed_vector=_floats(tg["speed"]) if "speed" in tg else [0.0, 0.0],
        rcs=float(tg.get("rcs", 1.0)),
    )

    sw = parser["sweep"] if parser.has_section("sweep") else {}
    sweep = SweepSpec(
        mode=sw.get("mode", "snr_sweep").strip(),
        axis=tuple(_floats(sw["axis"])) if "axis" in sw else (0.0,),
        trials=int(sw.get("trials", 200)),
        seed=int(sw.get("seed", 1)),
        estimate_doppler=str(sw.get("estimate_doppler", "false")).strip().lower() in ("1", "true", "yes", "on"),
        refine=sw.get("refine", "local").strip(),
        oversample=int(sw.get("oversample", 4)),
        out=sw.get("out"),
    )
    return RunConfig(system, scene, target, sweep)
