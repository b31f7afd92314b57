"""Experiment configuration: a validated JSON document and the shipped presets."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from vinselect.selection import BRUTE_FORCE_LIMIT

SELECTORS = ("greedy-mineig", "greedy-logdet", "random", "quality", "brute", "relaxed-rounded")
Selector = Literal["greedy-mineig", "greedy-logdet", "random", "quality", "brute", "relaxed-rounded"]


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists ``(field path, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{p}: {m}" for p, m in errors))


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TrajectorySpec(_Spec):
    kind: Literal["straight", "circle"]
    speed: float = Field(2.0, gt=0)
    # circle only: horizontal loop length and sinusoidal height
    loop_length: float = Field(120.0, gt=0)
    vertical_amplitude: float = Field(0.5, ge=0)
    vertical_freq: float = Field(0.2, ge=0)


class ImuSpec(_Spec):
    delta: float = Field(0.01, gt=0)
    accel_noise_density: float = Field(0.02, gt=0)
    bias_noise_density: float = Field(0.03, gt=0)
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)


class CameraSpec(_Spec):
    focal: float = Field(315.0, gt=0)
    image_size: tuple[int, int] = (752, 480)
    keyframe_dt: float = Field(0.5, gt=0)
    border: float = Field(0.0, ge=0)
    extrinsic_translation: tuple[float, float, float] = (0.0, 0.0, 0.0)


class PriorSpec(_Spec):
    position: float = Field(1e-2, gt=0)
    velocity: float = Field(1e-2, gt=0)
    bias: float = Field(1e-4, gt=0)


class LandmarkSpec(_Spec):
    # "triangulable": exactly n_landmarks candidates rejection-sampled per window;
    # "world": n_landmarks points in the box, candidates are those in view.
    mode: Literal["triangulable", "world"] = "triangulable"
    box: tuple[tuple[float, float, float], tuple[float, float, float]] = ((1.0, -8.0, -5.0), (25.0, 8.0, 5.0))
    score_range: tuple[float, float] = (0.0, 1.0)
    # track probabilities from scores: p = floor + (1 - floor) * normalized score; None keeps p = 1
    track_prob_floor: float | None = Field(None, ge=0, lt=1)

    @field_validator("box")
    @classmethod
    def _box(cls, v):
        if not all(h > l for l, h in zip(*v)):
            raise ValueError("box upper corner must exceed the lower corner on every axis")
        return v


class RelaxationSpec(_Spec):
    max_iters: int = Field(500, ge=1)
    tol: float = Field(1e-6, gt=0)


class ExperimentConfig(_Spec):
    name: str = "custom"
    trajectory: TrajectorySpec
    imu: ImuSpec = ImuSpec()
    camera: CameraSpec = CameraSpec()
    prior: PriorSpec = PriorSpec()
    landmarks: LandmarkSpec = LandmarkSpec()
    n_landmarks: Union[int, list[int]]
    kappa: Union[int, Literal["half"]]
    horizon_s: float
    windows_per_run: int = Field(1, ge=1)
    selectors: list[Selector] = Field(min_length=1)
    objective_metric: Literal["mineig", "logdet"] = "logdet"
    n_runs: int = Field(ge=1)
    master_seed: int = Field(ge=0)
    output_dir: str = "out"
    pixel_sigma: float = Field(1.0, gt=0)
    # "uniform": weight (focal / pixel_sigma)^2; "range": divided by the squared mean range
    vision_weighting: Literal["uniform", "range"] = "uniform"
    require_current_view: bool = False
    simulate_track_loss: bool = False
    certificates: bool = True
    relaxation: RelaxationSpec = RelaxationSpec()

    @field_validator("horizon_s")
    @classmethod
    def _horizon(cls, v):
        if not v > 0:
            raise ValueError("horizon_s must be positive")
        return v

    @field_validator("n_landmarks")
    @classmethod
    def _n(cls, v):
        vals = v if isinstance(v, list) else [v]
        if not vals or any(n < 1 for n in vals):
            raise ValueError("n_landmarks must be positive")
        return v

    @field_validator("kappa")
    @classmethod
    def _kappa(cls, v):
        if isinstance(v, int) and v < 0:
            raise ValueError("kappa must be nonnegative")
        return v

    @field_validator("selectors")
    @classmethod
    def _unique(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("selectors must be unique")
        return v

    @model_validator(mode="after")
    def _cross(self):
        for n in self.landmark_counts:
            k = self.kappa_for(n)
            if k > n:
                raise ValueError(f"kappa={k} exceeds n_landmarks={n}")
            if "brute" in self.selectors and math.comb(n, k) > BRUTE_FORCE_LIMIT:
                raise ValueError(f"brute needs C({n},{k}) = {math.comb(n, k)} subsets, above the limit {BRUTE_FORCE_LIMIT}")
        dt = self.camera.keyframe_dt
        if self.horizon_s + 1e-9 < dt:
            raise ValueError("horizon_s is shorter than one keyframe interval")
        if self.trajectory.kind == "circle":
            frames = int(math.floor(self.duration / dt + 1e-9)) + 1
            if frames - self.horizon_frames < self.windows_per_run:
                raise ValueError("trajectory too short for windows_per_run distinct windows")
        return self

    @property
    def landmark_counts(self) -> list[int]:
        return list(self.n_landmarks) if isinstance(self.n_landmarks, list) else [self.n_landmarks]

    def kappa_for(self, n: int) -> int:
        return n // 2 if self.kappa == "half" else int(self.kappa)

    @property
    def horizon_frames(self) -> int:
        """Number of keyframe intervals in one selection window."""
        return int(math.floor(self.horizon_s / self.camera.keyframe_dt + 1e-9))

    @property
    def duration(self) -> float:
        if self.trajectory.kind == "circle":
            return self.trajectory.loop_length / self.trajectory.speed
        return self.horizon_frames * self.camera.keyframe_dt * self.windows_per_run

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return parse_config({**self.to_dict(), **kw})

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _field_path(loc) -> str:
    return ".".join(str(p) for p in loc) or "<root>"


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a decoded document; raises :class:`ConfigError` with field paths."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([(_field_path(e["loc"]), e["msg"]) for e in exc.errors()]) from None


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([("<document>", f"invalid JSON: {exc}")]) from None
    except OSError as exc:
        raise ConfigError([("<document>", str(exc))]) from None
    if not isinstance(data, dict):
        raise ConfigError([("<root>", "top level must be an object")])
    return parse_config(data)


_PRESETS = {
    "straightline-sweep": {
        "name": "straightline-sweep",
        "trajectory": {"kind": "straight", "speed": 2.0},
        "imu": {"delta": 0.01, "accel_noise_density": 0.02, "bias_noise_density": 0.03},
        "camera": {"focal": 315.0, "keyframe_dt": 0.5},
        "prior": {"position": 1e-2, "velocity": 1e-2, "bias": 1e-4},
        "landmarks": {"mode": "triangulable"},
        "n_landmarks": [10, 20, 30, 40, 50],
        "kappa": "half",
        "horizon_s": 2.5,
        "selectors": ["greedy-mineig", "greedy-logdet", "random", "relaxed-rounded"],
        "objective_metric": "logdet",
        "n_runs": 10,
        "master_seed": 1,
        "output_dir": "out/straightline-sweep",
        # unit residual noise: identity whitening
        "pixel_sigma": 315.0,
        "vision_weighting": "uniform",
    },
    "circle-montecarlo": {
        "name": "circle-montecarlo",
        "trajectory": {"kind": "circle", "speed": 2.5, "loop_length": 120.0, "vertical_amplitude": 0.5, "vertical_freq": 0.2},
        "imu": {"delta": 0.01, "accel_noise_density": 0.02, "bias_noise_density": 0.03},
        "camera": {"focal": 315.0, "keyframe_dt": 0.4},
        "prior": {"position": 1e-2, "velocity": 1e-2, "bias": 1e-4},
        "landmarks": {"mode": "world", "box": [[-80.0, -61.0, -3.0], [80.0, 99.0, 10.0]]},
        "n_landmarks": 1500,
        "kappa": 20,
        "horizon_s": 3.0,
        "windows_per_run": 2,
        "selectors": ["greedy-mineig", "greedy-logdet", "random"],
        "objective_metric": "logdet",
        "n_runs": 50,
        "master_seed": 7,
        "output_dir": "out/circle-montecarlo",
        "pixel_sigma": 1.0,
        "vision_weighting": "range",
        "require_current_view": True,
        "certificates": False,
    },
}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def preset(name: str) -> ExperimentConfig:
    if name not in _PRESETS:
        raise ConfigError([("<preset>", f"unknown preset {name!r}; known: {', '.join(preset_names())}")])
    return parse_config(json.loads(json.dumps(_PRESETS[name])))
