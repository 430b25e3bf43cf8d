"""Domain types, the message catalog, and the reward/goal arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from enum import Enum
from typing import Optional


class CoachError(Exception):
    """Base class for every error raised by this package."""


class InvalidPlanError(CoachError, ValueError):
    pass


class InvalidRecordError(CoachError, ValueError):
    pass


REWARD_SMOOTHING = 10.0  # minutes, one minimal walk
REWARD_CAP = 5.0


class MessageKind(str, Enum):
    NEGATIVE = "negative"
    POSITIVE_SELF = "positive_self"
    POSITIVE_SOCIAL = "positive_social"
    NO_MESSAGE = "no_message"

    WEEKLY_REMINDER = "weekly_reminder"
    MAX_INCREASE = "max_increase"
    SIG_INCREASE = "sig_increase"
    MAX_SOCIAL = "max_social"
    SIG_SOCIAL = "sig_social"

    CONTROL_REMINDER = "control_reminder"

    @property
    def is_daily(self) -> bool:
        return self in DAILY_ACTIONS

    @property
    def is_weekly(self) -> bool:
        return self in WEEKLY_KINDS


# Order is load-bearing: it fixes the one-hot layout and every 4-vector.
DAILY_ACTIONS: tuple[MessageKind, ...] = (
    MessageKind.NEGATIVE,
    MessageKind.POSITIVE_SELF,
    MessageKind.POSITIVE_SOCIAL,
    MessageKind.NO_MESSAGE,
)
WEEKLY_KINDS: tuple[MessageKind, ...] = (
    MessageKind.WEEKLY_REMINDER,
    MessageKind.MAX_INCREASE,
    MessageKind.SIG_INCREASE,
    MessageKind.MAX_SOCIAL,
    MessageKind.SIG_SOCIAL,
)
ACHIEVEMENT_KINDS = frozenset(WEEKLY_KINDS[1:])


def action_index(kind: MessageKind) -> int:
    try:
        return DAILY_ACTIONS.index(kind)
    except ValueError:
        raise CoachError(f"{kind.value!r} is not a daily action") from None


_REMINDER = "Please remember to exercise this week to reach your activity goals."
_GOAL_PREFIX = "You have so far achieved {pct}% of your weekly activity goal. "

TEMPLATES: dict[MessageKind, str] = {
    MessageKind.NEGATIVE: (
        "You need to exercise to reach your activity goals. "
        "Please remember to exercise tomorrow"
    ),
    MessageKind.POSITIVE_SELF: _GOAL_PREFIX
    + "Your exercise level is in accordance with your plan. Keep up the good work",
    MessageKind.POSITIVE_SOCIAL: _GOAL_PREFIX
    + "You are exercising more than the average person in your group. "
    "Keep up the good work",
    MessageKind.NO_MESSAGE: "",
    MessageKind.WEEKLY_REMINDER: _REMINDER,
    MessageKind.MAX_INCREASE: (
        "Over the past week you increased your activity more than at any previous week."
    ),
    MessageKind.SIG_INCREASE: (
        "Over the past week you increased your activity more than most previous weeks."
    ),
    MessageKind.MAX_SOCIAL: (
        "You won the first place! Last week you increased your activity "
        "more than any other participant in the experiment."
    ),
    MessageKind.SIG_SOCIAL: (
        "Last week you increased your activity more than most participants "
        "of the experiment."
    ),
    MessageKind.CONTROL_REMINDER: _REMINDER,
}


class Gender(str, Enum):
    FEMALE = "female"
    MALE = "male"


class Arm(str, Enum):
    CONTROL = "control"
    PERSONALIZED = "personalized"


@dataclass(frozen=True)
class PatientProfile:
    id: str
    age: int
    gender: Gender
    weekly_goal: float
    sessions_per_week: int
    arm: Arm
    baseline_hba1c: float
    enrolled_on: date

    def __post_init__(self) -> None:
        if not self.weekly_goal > 0:
            raise InvalidPlanError(f"{self.id}: weekly_goal must be positive")
        if self.sessions_per_week < 1:
            raise InvalidPlanError(f"{self.id}: sessions_per_week must be >= 1")
        if not self.baseline_hba1c > 0:
            raise InvalidRecordError(f"{self.id}: baseline_hba1c must be positive")
        # tolerate plain strings from JSON payloads
        object.__setattr__(self, "gender", Gender(self.gender))
        object.__setattr__(self, "arm", Arm(self.arm))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "age": self.age,
            "gender": self.gender.value,
            "weekly_goal": self.weekly_goal,
            "sessions_per_week": self.sessions_per_week,
            "arm": self.arm.value,
            "baseline_hba1c": self.baseline_hba1c,
            "enrolled_on": self.enrolled_on.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatientProfile":
        return cls(
            id=d["id"],
            age=int(d["age"]),
            gender=Gender(d["gender"]),
            weekly_goal=float(d["weekly_goal"]),
            sessions_per_week=int(d["sessions_per_week"]),
            arm=Arm(d["arm"]),
            baseline_hba1c=float(d["baseline_hba1c"]),
            enrolled_on=date.fromisoformat(d["enrolled_on"]),
        )


MIN_SESSION_MINUTES = 10.0


@dataclass(frozen=True)
class WalkSession:
    """A detected walk. ``start`` is UTC seconds, ``duration`` minutes."""

    start: int
    duration: float
    cadence: float

    def __post_init__(self) -> None:
        if self.duration < MIN_SESSION_MINUTES:
            raise InvalidRecordError(
                f"walk session of {self.duration:.2f} min is below the "
                f"{MIN_SESSION_MINUTES:g}-minute floor"
            )
        if not self.cadence > 0:
            raise InvalidRecordError("cadence must be positive")

    @property
    def end(self) -> float:
        return self.start + 60.0 * self.duration


@dataclass(frozen=True)
class DailyRecord:
    patient_id: str
    date: date
    minutes: float
    mean_cadence: Optional[float] = None
    message_sent: Optional[MessageKind] = None
    data_fresh: bool = True

    def __post_init__(self) -> None:
        if self.minutes < 0:
            raise InvalidRecordError("minutes must be non-negative")


def goal_fraction_percent(cum_minutes: float, weekly_goal: float) -> int:
    """Whole percent of the weekly goal achieved so far, rounded down."""
    if not weekly_goal > 0:
        raise InvalidPlanError("weekly_goal must be positive")
    if cum_minutes < 0:
        raise InvalidRecordError("cumulative minutes must be non-negative")
    return int(math.floor(100.0 * cum_minutes / weekly_goal))


def compute_reward(minutes_t: float, minutes_next: float) -> float:
    """Smoothed, capped day-over-day activity ratio used as the learning target.

    ``(minutes_next + c) / (minutes_t + c)`` with ``c = REWARD_SMOOTHING``,
    clamped to ``REWARD_CAP``. Equal activity on both days gives exactly 1.
    """
    if minutes_t < 0 or minutes_next < 0:
        raise InvalidRecordError("activity minutes must be non-negative")
    ratio = (minutes_next + REWARD_SMOOTHING) / (minutes_t + REWARD_SMOOTHING)
    return min(REWARD_CAP, ratio)


def render_message(kind: MessageKind, goal_pct: Optional[int] = None) -> str:
    kind = MessageKind(kind)
    template = TEMPLATES[kind]
    if kind in (MessageKind.POSITIVE_SELF, MessageKind.POSITIVE_SOCIAL):
        if goal_pct is None or goal_pct < 0:
            raise CoachError(f"{kind.value} needs a non-negative goal percentage")
        return template.format(pct=int(goal_pct))
    return template


def expected_week_fraction(day_of_week: int) -> float:
    """Share of the weekly plan expected by the end of plan-week day 1..7."""
    if not 1 <= day_of_week <= 7:
        raise CoachError(f"day_of_week must be in 1..7, got {day_of_week}")
    return day_of_week / 7.0


def plan_day_of_week(enrolled_on: date, today: date, anchor: str = "enrollment") -> int:
    """1-based day within the patient's plan week.

    ``anchor="enrollment"`` starts each plan week on the enrollment weekday;
    ``anchor="monday"`` uses calendar weeks.
    """
    if anchor == "monday":
        return today.isoweekday()
    if anchor != "enrollment":
        raise CoachError(f"unknown week anchor {anchor!r}")
    delta = (today - enrolled_on).days
    if delta < 0:
        raise CoachError("date precedes enrollment")
    return delta % 7 + 1
