"""Scenario configuration: one JSON file that drives every CLI command.

Top-level sections and their defaults (any section may be omitted):

``seed`` 0, ``out`` "out"
``sensor``       preset name ("mmwave", "acoustic") or an inline profile object
``source``       VitalSignSource fields (heart_rate 66 BPM, amplitude 0.5 mm, ...)
``pulse_train``  pulse_width 0.025 s, repetitions 3
``kernel``       ActuatorKernel fields (rise 25 ms, fall 50 ms, saturation 1.5)
``decoy``        model "mimic", amplitude 0.5 mm
``scene``        base_distance 0.30 m, snr_db 20, amplitude_scale 1
``space``        low 60, high 110, resolution 0.1 BPM, distribution "uniform"
``trial_plan``   see ``TrialPlan``
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from . import fmcw
from .obfuscation import FrequencySpace
from .privacy_eval import EvalError, TrialConfig
from .signal_model import ActuatorKernel, DecoyConfig, VitalSignSource


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PulseTrainSection:
    pulse_width: float = 0.025
    repetitions: int = 3


@dataclass(frozen=True)
class DecoySection:
    model: str = "mimic"
    amplitude: float = 0.5


@dataclass(frozen=True)
class SceneSection:
    base_distance: float = 0.30
    snr_db: float = 20.0
    amplitude_scale: float = 1.0


@dataclass(frozen=True)
class TrialPlan:
    p: int = 3
    duration: float = 30.0
    trials: int = 50
    key_sets: int = 2
    recordings_per_key: int = 3
    pipeline: str = "fmcw"
    sample_rate: float = 2000.0
    displacement_noise_mm: float = 0.02
    min_separation: float = 8.0
    half_bandwidth: float = 2.0
    method: str = "fft_peak"
    workers: int = 1
    # raw IF frames written by `simulate` (the full matrix can be GBs)
    if_export_frames: int = 2048


def _build(cls, data, section: str, default=None):
    if data is None:
        return default if default is not None else cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown field(s) in {section!r}: {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section!r}: {exc}") from exc


# decoys and message stay inside the extraction band with room for the
# minimum separation; harmonics of 60 BPM already fall outside it
SCENARIO_SPACE = FrequencySpace(60.0, 110.0, 0.1)

SECTIONS = ("seed", "out", "sensor", "source", "pulse_train", "kernel", "decoy", "scene",
            "space", "trial_plan")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    out: str = "out"
    sensor: fmcw.SensorProfile = fmcw.MMWAVE
    source: VitalSignSource = field(default_factory=VitalSignSource)
    pulse_train: PulseTrainSection = field(default_factory=PulseTrainSection)
    kernel: ActuatorKernel = field(default_factory=ActuatorKernel)
    decoy: DecoySection = field(default_factory=DecoySection)
    scene: SceneSection = field(default_factory=SceneSection)
    space: FrequencySpace = field(default_factory=lambda: SCENARIO_SPACE)
    trial_plan: TrialPlan = field(default_factory=TrialPlan)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        sensor = d.get("sensor", "mmwave")
        try:
            profile = (fmcw.get_profile(sensor) if isinstance(sensor, str)
                       else fmcw.SensorProfile.from_dict(sensor))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid 'sensor': {exc}") from exc
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        cfg = cls(
            seed=seed,
            out=str(d.get("out", "out")),
            sensor=profile,
            source=_build(VitalSignSource, d.get("source"), "source"),
            pulse_train=_build(PulseTrainSection, d.get("pulse_train"), "pulse_train"),
            kernel=_build(ActuatorKernel, d.get("kernel"), "kernel"),
            decoy=_build(DecoySection, d.get("decoy"), "decoy"),
            scene=_build(SceneSection, d.get("scene"), "scene"),
            space=_build(FrequencySpace, d.get("space"), "space", SCENARIO_SPACE),
            trial_plan=_build(TrialPlan, d.get("trial_plan"), "trial_plan"),
        )
        cfg.trial_config()  # cross-section validation
        return cfg

    def to_dict(self) -> dict:
        d = {}
        for name in SECTIONS:
            v = getattr(self, name)
            if name == "sensor":
                v = self._profile_ref()
                v = v if isinstance(v, str) else v.to_dict()
            elif is_dataclass(v):
                v = {k: list(x) if isinstance(x, tuple) else x for k, x in asdict(v).items()}
            d[name] = v
        return d

    def _profile_ref(self):
        return self.sensor.name if fmcw.PRESETS.get(self.sensor.name) == self.sensor else self.sensor

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def decoy_config(self) -> DecoyConfig:
        try:
            return DecoyConfig(model=self.decoy.model, amplitude=self.decoy.amplitude,
                               kernel=self.kernel, pulse_width=self.pulse_train.pulse_width,
                               repetitions=self.pulse_train.repetitions)
        except ValueError as exc:
            raise ConfigError(f"invalid 'decoy': {exc}") from exc

    def trial_config(self, **overrides) -> TrialConfig:
        tp = self.trial_plan
        kwargs = dict(
            p=tp.p, space=self.space, profile=self._profile_ref(), snr_db=self.scene.snr_db,
            amplitude_scale=self.scene.amplitude_scale, base_distance=self.scene.base_distance,
            duration=tp.duration, trials=tp.trials, seed=self.seed, source=self.source,
            decoy=self.decoy_config(), min_separation=tp.min_separation, pipeline=tp.pipeline,
            sample_rate=tp.sample_rate, displacement_noise_mm=tp.displacement_noise_mm,
            half_bandwidth=tp.half_bandwidth, method=tp.method, workers=tp.workers)
        kwargs.update(overrides)
        try:
            return TrialConfig(**kwargs)
        except (ValueError, EvalError) as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, seed: int | None = None, out: str | None = None) -> "ScenarioConfig":
        return replace(self, seed=self.seed if seed is None else seed,
                       out=self.out if out is None else out)


def load_config(path) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ScenarioConfig.from_dict(data)
