"""Experiment configuration: JSON file -> validated, defaulted ``ExperimentConfig``."""

from __future__ import annotations

import hashlib
import json
from datetime import date
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    model_validator,
)

from .core import CoachError


class ConfigError(CoachError, ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid config:\n  " + "\n  ".join(problems))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ArchetypeParams(_Strict):
    """Behavioral response of one patient type.

    ``response`` is the multiplicative effect of each daily action (negative,
    positive_self, positive_social, no_message) on the day's activity
    propensity; ``base_adherence`` is the starting propensity as a share of
    the daily plan.
    """

    name: str
    response: tuple[float, float, float, float]
    habituation_tau: PositiveFloat = 1.0
    base_adherence: float = Field(0.8, ge=0.0, le=1.0)
    daily_noise_sd: NonNegativeFloat = 0.02
    percent_female: float = Field(50.0, ge=0.0, le=100.0)


def default_archetypes() -> dict[str, ArchetypeParams]:
    return {
        "negative_responder": ArchetypeParams(
            name="negative_responder",
            response=(-0.10, -0.10, -0.10, 0.0),
            percent_female=50.0,
        ),
        "weak_responder": ArchetypeParams(
            name="weak_responder",
            response=(-0.05, 0.02, 0.03, 0.0),
            percent_female=62.0,
        ),
        "positive_responder": ArchetypeParams(
            name="positive_responder",
            response=(-0.02, 0.10, 0.12, 0.0),
            percent_female=17.0,
        ),
    }


class CohortConfig(_Strict):
    size: PositiveInt = 27
    personalized: int = Field(20, ge=0)
    control: int = Field(7, ge=0)
    archetype_mix: dict[str, int] = Field(
        default_factory=lambda: {
            "negative_responder": 4,
            "weak_responder": 9,
            "positive_responder": 5,
        }
    )
    archetypes: dict[str, ArchetypeParams] = Field(default_factory=default_archetypes)
    goal_mean: PositiveFloat = 139.0
    goal_sd: NonNegativeFloat = 62.0
    goal_min: PositiveFloat = 60.0
    goal_max: PositiveFloat = 420.0
    sessions_per_week: tuple[PositiveInt, PositiveInt] = (3, 5)
    age_mean: PositiveFloat = 57.0
    age_sd: NonNegativeFloat = 8.0
    hba1c_mean: PositiveFloat = 7.8
    hba1c_sd: NonNegativeFloat = 1.0
    hba1c_min: PositiveFloat = 6.5

    @model_validator(mode="after")
    def _consistent(self) -> "CohortConfig":
        if self.personalized + self.control != self.size:
            raise ValueError(
                f"arm split {self.personalized}/{self.control} does not sum to size {self.size}"
            )
        unknown = set(self.archetype_mix) - set(self.archetypes)
        if unknown:
            raise ValueError(f"archetype_mix names unknown archetypes {sorted(unknown)}")
        if any(v < 0 for v in self.archetype_mix.values()):
            raise ValueError("archetype_mix counts must be non-negative")
        if sum(self.archetype_mix.values()) > self.personalized:
            raise ValueError("archetype_mix exceeds the personalized arm size")
        if not self.archetypes:
            raise ValueError("at least one archetype is required")
        if self.goal_min > self.goal_max:
            raise ValueError("goal_min exceeds goal_max")
        lo, hi = self.sessions_per_week
        if lo > hi:
            raise ValueError("sessions_per_week range is reversed")
        return self


class PolicyConfig(_Strict):
    temperature: PositiveFloat = 5.0
    switch_threshold: Optional[PositiveInt] = None  # None -> 10 x column count
    ridge_lambda: NonNegativeFloat = 1e-6
    staleness_hours: PositiveFloat = 12.0
    achievement_cooldown_weeks: PositiveInt = 3
    significance_fraction: PositiveFloat = 1.0
    week_anchor: Literal["enrollment", "monday"] = "enrollment"


class HbA1cConfig(_Strict):
    k_glyc: NonNegativeFloat = 0.6
    weekly_rate: float = Field(0.08, ge=0.0, le=1.0)
    noise_sd: NonNegativeFloat = 0.1
    arm_effect: NonNegativeFloat = 0.2  # extra target drop for the personalized arm
    measure_every_weeks: PositiveInt = 13


class ForcedOutage(_Strict):
    """Transmission blackout for one patient, in hours since the run epoch."""

    patient: Union[int, str]
    start_hour: NonNegativeFloat
    hours: PositiveFloat


class SimulatorConfig(_Strict):
    sampling_period_minutes: PositiveFloat = 3.5
    transmit_period_hours: PositiveFloat = 2.5
    outage_prob: float = Field(0.02, ge=0.0, le=1.0)
    dropout_mean_weeks: Optional[PositiveFloat] = 20.0
    carryover: float = Field(0.25, ge=0.0, le=1.0)
    negative_carryover: float = Field(0.0, ge=0.0, le=1.0)
    set_point: PositiveFloat = 0.8
    set_point_rate: float = Field(1.0 / 60.0, ge=0.0, lt=1.0)
    max_fraction: PositiveFloat = 2.5
    min_daily_minutes: NonNegativeFloat = 20.0
    walk_chunk_minutes: PositiveFloat = 14.0
    walk_window_hours: tuple[float, float] = (8.5, 20.0)
    cadence_mean: PositiveFloat = 100.0
    cadence_sd: NonNegativeFloat = 10.0
    cadence_noise_sd: NonNegativeFloat = 2.0
    cadence_gain: NonNegativeFloat = 0.015
    fitness_decay: float = Field(0.02, gt=0.0, le=1.0)
    cadence_decline_per_week: NonNegativeFloat = 0.05
    hba1c: HbA1cConfig = Field(default_factory=HbA1cConfig)
    forced_outages: list[ForcedOutage] = Field(default_factory=list)

    @model_validator(mode="after")
    def _window(self) -> "SimulatorConfig":
        lo, hi = self.walk_window_hours
        if not 0 <= lo < hi <= 24:
            raise ValueError("walk_window_hours must satisfy 0 <= start < end <= 24")
        return self


class OutputConfig(_Strict):
    log: str = "events.jsonl"
    models: str = "models.jsonl"


class ExperimentConfig(_Strict):
    seed: int = Field(ge=0, lt=2**64)
    horizon_weeks: PositiveInt = 26
    epoch: date = date(2015, 1, 4)
    cohort: CohortConfig = Field(default_factory=CohortConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    simulator: SimulatorConfig = Field(default_factory=SimulatorConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _problems(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        out.append(f"{loc}: {err['msg']}")
    return out


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_problems(exc)) from None


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError([f"<file>: {path} does not exist"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<file>: line {exc.lineno}: {exc.msg}"]) from None
    return parse_config(data)
