"""Context attributes per patient-day and the Kesler-augmented design row.

Column layout (76 columns, fixed):

====  ==========================================================
0     intercept
1-10  standardized context, in ``CONTEXT_FIELDS`` order
11-14 action one-hot, in ``DAILY_ACTIONS`` order
15-54 action x context (action-major: 10 context columns per action)
55-61 last_day_minutes x {week_cum, goal_fraction,
      fraction_vs_expected, recency x 4}
62-65 week_cum_minutes x recency
66-69 goal_fraction x recency
70-75 recency x recency, the 6 unordered pairs
====  ==========================================================

Interactions are products of *standardized* context values.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields
from datetime import date, timedelta
from itertools import combinations
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    DAILY_ACTIONS,
    CoachError,
    DailyRecord,
    Gender,
    MessageKind,
    PatientProfile,
    action_index,
    expected_week_fraction,
    plan_day_of_week,
)

RECENCY_CAP = 14
SCALE_FLOOR = 1e-6

CONTEXT_FIELDS = (
    "last_day_minutes",
    "week_cum_minutes",
    "goal_fraction",
    "fraction_vs_expected",
    "age",
    "gender_female",
    "recency_negative",
    "recency_positive_self",
    "recency_positive_social",
    "recency_no_message",
)
N_CONTEXT = len(CONTEXT_FIELDS)
_LAST, _CUM, _GOAL, _VS_EXP = 0, 1, 2, 3
_RECENCY = (6, 7, 8, 9)


def _build_columns() -> tuple[tuple[str, ...], list[tuple[int, int]]]:
    names = ["intercept"]
    names += list(CONTEXT_FIELDS)
    names += [f"action_{a.value}" for a in DAILY_ACTIONS]
    names += [f"action_{a.value}*{c}" for a in DAILY_ACTIONS for c in CONTEXT_FIELDS]
    pairs: list[tuple[int, int]] = []
    pairs += [(_LAST, j) for j in (_CUM, _GOAL, _VS_EXP, *_RECENCY)]
    pairs += [(_CUM, j) for j in _RECENCY]
    pairs += [(_GOAL, j) for j in _RECENCY]
    pairs += list(combinations(_RECENCY, 2))
    names += [f"{CONTEXT_FIELDS[i]}*{CONTEXT_FIELDS[j]}" for i, j in pairs]
    return tuple(names), pairs


COLUMNS, _CONTEXT_PAIRS = _build_columns()
N_COLUMNS = len(COLUMNS)
assert N_COLUMNS == 76


def column_manifest() -> dict[str, int]:
    return {name: i for i, name in enumerate(COLUMNS)}


def manifest_hash(columns: Sequence[str] = COLUMNS) -> str:
    blob = json.dumps(list(columns), separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class ContextVector:
    last_day_minutes: float
    week_cum_minutes: float
    goal_fraction: float
    fraction_vs_expected: float
    age: float
    gender_female: float
    recency_negative: float
    recency_positive_self: float
    recency_positive_social: float
    recency_no_message: float

    def __post_init__(self) -> None:
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise CoachError("context values must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=float)

    def as_list(self) -> list[float]:
        return [float(v) for v in self.as_array()]

    @classmethod
    def from_array(cls, values: Iterable[float]) -> "ContextVector":
        values = [float(v) for v in values]
        if len(values) != N_CONTEXT:
            raise CoachError(f"context needs {N_CONTEXT} values, got {len(values)}")
        return cls(*values)


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls) -> "Standardization":
        return cls(np.zeros(N_CONTEXT), np.ones(N_CONTEXT))

    @classmethod
    def from_pool(cls, contexts: np.ndarray) -> "Standardization":
        """z-score statistics of a training pool (rows are raw contexts)."""
        contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
        mean = contexts.mean(axis=0)
        scale = np.maximum(contexts.std(axis=0), SCALE_FLOOR)
        return cls(mean, scale)

    def apply(self, contexts: np.ndarray) -> np.ndarray:
        return (np.asarray(contexts, dtype=float) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "scale": [float(v) for v in self.scale]}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardization":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


@dataclass(frozen=True)
class DesignRow:
    values: np.ndarray
    action: MessageKind
    target: Optional[float] = None


def recency_features(
    message_log: Sequence[tuple[date, MessageKind]], today: date
) -> tuple[float, float, float, float]:
    """Days since each daily action was last sent, capped at ``RECENCY_CAP``."""
    last_seen: dict[MessageKind, date] = {}
    previous: Optional[date] = None
    for when, kind in message_log:
        if previous is not None and when < previous:
            raise CoachError("message log must be sorted by date")
        if when >= today:
            raise CoachError("message log contains entries dated today or later")
        previous = when
        kind = MessageKind(kind)
        if kind.is_daily:
            last_seen[kind] = when
    out = []
    for kind in DAILY_ACTIONS:
        if kind in last_seen:
            out.append(float(min(RECENCY_CAP, (today - last_seen[kind]).days)))
        else:
            out.append(float(RECENCY_CAP))
    return tuple(out)  # type: ignore[return-value]


def build_context(
    profile: PatientProfile,
    records: Sequence[DailyRecord],
    message_log: Sequence[tuple[date, MessageKind]],
    today: date,
    week_anchor: str = "enrollment",
) -> ContextVector:
    if profile is None:
        raise CoachError("a patient profile is required")
    dow = plan_day_of_week(profile.enrolled_on, today, week_anchor)
    week_start = today - timedelta(days=dow - 1)
    yesterday = today - timedelta(days=1)

    last_day = 0.0
    week_cum = 0.0
    for rec in records:
        if rec.date == yesterday:
            last_day += rec.minutes
        if week_start <= rec.date < today:
            week_cum += rec.minutes

    goal_fraction = week_cum / profile.weekly_goal
    vs_expected = goal_fraction / expected_week_fraction(dow)
    female = 1.0 if profile.gender == Gender.FEMALE else 0.0
    return ContextVector(
        last_day,
        week_cum,
        goal_fraction,
        vs_expected,
        float(profile.age),
        female,
        *recency_features(message_log, today),
    )


def _expand(z: np.ndarray, actions: np.ndarray) -> np.ndarray:
    n = z.shape[0]
    out = np.zeros((n, N_COLUMNS))
    out[:, 0] = 1.0
    out[:, 1 : 1 + N_CONTEXT] = z
    onehot = np.zeros((n, len(DAILY_ACTIONS)))
    onehot[np.arange(n), actions] = 1.0
    out[:, 11:15] = onehot
    out[:, 15:55] = (onehot[:, :, None] * z[:, None, :]).reshape(n, -1)
    left = [i for i, _ in _CONTEXT_PAIRS]
    right = [j for _, j in _CONTEXT_PAIRS]
    out[:, 55:] = z[:, left] * z[:, right]
    return out


def design_matrix(
    contexts: np.ndarray,
    actions: Sequence[int],
    standardization: Optional[Standardization] = None,
) -> np.ndarray:
    """Vectorized ``kesler_augment`` over raw contexts and action indices."""
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    actions = np.asarray(actions, dtype=int)
    std = standardization or Standardization.identity()
    return _expand(std.apply(contexts), actions)


def kesler_augment(
    context: ContextVector,
    action: MessageKind,
    standardization: Optional[Standardization] = None,
    target: Optional[float] = None,
) -> DesignRow:
    idx = action_index(MessageKind(action))
    row = design_matrix(context.as_array()[None, :], [idx], standardization)[0]
    return DesignRow(values=row, action=MessageKind(action), target=target)
