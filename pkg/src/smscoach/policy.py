"""Message selection: initial policy, Boltzmann over the learned model, and the gates."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from statistics import median
from typing import Optional, Sequence

import numpy as np

from .core import (
    DAILY_ACTIONS,
    Arm,
    CoachError,
    DailyRecord,
    MessageKind,
    PatientProfile,
    expected_week_fraction,
    plan_day_of_week,
)
from .features import COLUMNS, N_COLUMNS, ContextVector, build_context, design_matrix
from .regression import ManifestMismatchError, ModelState

DEFAULT_TEMPERATURE = 5.0
STALENESS_SECONDS = 12 * 3600
NO_MESSAGE_SHARE = 0.2


class PolicyMode:
    INITIAL = "initial"
    LEARNED = "learned"


@dataclass
class PolicyState:
    rng: np.random.Generator
    temperature: float = DEFAULT_TEMPERATURE
    switch_threshold: int = 10 * N_COLUMNS
    mode: str = PolicyMode.INITIAL
    model: Optional[ModelState] = None
    staleness_seconds: int = STALENESS_SECONDS

    def __post_init__(self) -> None:
        if not self.temperature > 0:
            raise CoachError("temperature must be positive")

    def observe_training_size(self, n_rows: int) -> bool:
        """Enter learned mode once enough rows exist. Returns True on the switch."""
        if self.mode == PolicyMode.INITIAL and n_rows >= self.switch_threshold:
            self.mode = PolicyMode.LEARNED
            return True
        return False

    def publish(self, model: ModelState) -> None:
        self.model = model


@dataclass
class Decision:
    patient_id: str
    date: date
    action: Optional[MessageKind]
    mode: str
    action_probabilities: Optional[np.ndarray] = None
    predicted_rewards: Optional[np.ndarray] = None
    context: Optional[ContextVector] = None
    expected_fraction: Optional[float] = None
    draws: tuple[float, ...] = ()

    @property
    def suppressed(self) -> bool:
        return self.action is None


@dataclass
class PatientHistory:
    """What the server knows about one patient at decision time."""

    records: Sequence[DailyRecord] = ()
    message_log: Sequence[tuple[date, MessageKind]] = ()
    last_upload: Optional[int] = None  # UTC seconds


def initial_probabilities(expected_fraction: float) -> np.ndarray:
    f = _check_fraction(expected_fraction)
    keep = 1.0 - NO_MESSAGE_SHARE
    return np.array([keep * (1 - f), keep * f / 2, keep * f / 2, NO_MESSAGE_SHARE])


def initial_action_from_draws(expected_fraction: float, draws: Sequence[float]) -> MessageKind:
    """Map three uniforms to an action under the initial rule."""
    f = _check_fraction(expected_fraction)
    u_skip, u_goal, u_pick = draws
    if u_skip < NO_MESSAGE_SHARE:
        return MessageKind.NO_MESSAGE
    if u_goal > f:
        return MessageKind.NEGATIVE
    return MessageKind.POSITIVE_SELF if u_pick < 0.5 else MessageKind.POSITIVE_SOCIAL


def initial_select(expected_fraction: float, rng: np.random.Generator) -> MessageKind:
    return initial_action_from_draws(expected_fraction, rng.random(3))


def _check_fraction(f: float) -> float:
    if not 0.0 <= f <= 1.0:
        raise CoachError(f"expected fraction must lie in [0, 1], got {f}")
    return float(f)


def predict_changes(model: ModelState, context: ContextVector) -> np.ndarray:
    """Predicted reward of each daily action for one context."""
    if tuple(model.manifest) != COLUMNS:
        raise ManifestMismatchError("model manifest does not match the design layout")
    ctx = np.repeat(context.as_array()[None, :], len(DAILY_ACTIONS), axis=0)
    rows = design_matrix(ctx, np.arange(len(DAILY_ACTIONS)), model.standardization)
    return model.predict(rows)


def boltzmann_probabilities(predictions: Sequence[float], temperature: float) -> np.ndarray:
    preds = np.asarray(predictions, dtype=float)
    if not np.all(np.isfinite(preds)):
        raise CoachError("predictions must be finite")
    if not temperature > 0:
        raise CoachError("temperature must be positive")
    z = (preds - preds.max()) / temperature
    w = np.exp(z)
    return w / w.sum()


def sample_index(probabilities: Sequence[float], u: float) -> int:
    """Inverse-CDF pick; the uniform alone decides, index order never breaks ties."""
    cdf = np.cumsum(probabilities)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, len(cdf) - 1)


def boltzmann_select(
    predictions: Sequence[float], temperature: float, rng: np.random.Generator
) -> tuple[MessageKind, np.ndarray]:
    probs = boltzmann_probabilities(predictions, temperature)
    return DAILY_ACTIONS[sample_index(probs, rng.random())], probs


def is_fresh(last_upload: Optional[int], now: int, staleness_seconds: int = STALENESS_SECONDS) -> bool:
    return last_upload is not None and now - last_upload < staleness_seconds


def daily_decide(
    policy: PolicyState,
    profile: PatientProfile,
    history: PatientHistory,
    today: date,
    now: int,
    week_anchor: str = "enrollment",
) -> Decision:
    if profile.arm != Arm.PERSONALIZED:
        raise CoachError(f"{profile.id} is not in the personalized arm")
    if not is_fresh(history.last_upload, now, policy.staleness_seconds):
        return Decision(profile.id, today, None, policy.mode)

    context = build_context(profile, history.records, history.message_log, today, week_anchor)
    f = expected_week_fraction(plan_day_of_week(profile.enrolled_on, today, week_anchor))
    if policy.mode == PolicyMode.LEARNED:
        if policy.model is None:
            raise CoachError("learned mode without a published model")
        preds = predict_changes(policy.model, context)
        probs = boltzmann_probabilities(preds, policy.temperature)
        u = float(policy.rng.random())
        action = DAILY_ACTIONS[sample_index(probs, u)]
        return Decision(
            profile.id, today, action, policy.mode, probs, preds, context, f, (u,)
        )
    draws = tuple(float(u) for u in policy.rng.random(3))
    action = initial_action_from_draws(f, draws)
    return Decision(
        profile.id, today, action, policy.mode, initial_probabilities(f), None, context, f, draws
    )


@dataclass
class WeeklyRules:
    cooldown_weeks: int = 3
    significance_fraction: float = 1.0


def weekly_summary_decide(
    profile: PatientProfile,
    weekly_history: Sequence[float],
    cohort_increases: Sequence[float],
    achievements_log: Sequence[int],
    rules: Optional[WeeklyRules] = None,
) -> MessageKind:
    """Pick the weekly summary for the week that just ended.

    ``weekly_history`` holds this patient's weekly totals, oldest first, ending
    with the week being summarized (its index is ``len(weekly_history) - 1``).
    ``cohort_increases`` holds this week's increases for every personalized
    patient with a baseline week, including this one. ``achievements_log``
    lists the week indices of earlier achievement messages.
    """
    rules = rules or WeeklyRules()
    week = len(weekly_history) - 1
    if week < 1:
        return MessageKind.WEEKLY_REMINDER
    if achievements_log and week - max(achievements_log) < rules.cooldown_weeks:
        return MessageKind.WEEKLY_REMINDER
    this_week = weekly_history[-1]
    if this_week < rules.significance_fraction * profile.weekly_goal:
        return MessageKind.WEEKLY_REMINDER

    increases = [b - a for a, b in zip(weekly_history[:-1], weekly_history[1:])]
    current, prior = increases[-1], increases[:-1]
    if current <= 0:
        return MessageKind.WEEKLY_REMINDER
    others = list(cohort_increases)
    if all(current > p for p in prior):
        return MessageKind.MAX_INCREASE
    if others and current >= max(others) and sum(1 for c in others if c == current) == 1:
        return MessageKind.MAX_SOCIAL
    if prior and current > median(prior):
        return MessageKind.SIG_INCREASE
    if others and current > median(others):
        return MessageKind.SIG_SOCIAL
    return MessageKind.WEEKLY_REMINDER


def control_decide(profile: PatientProfile, today: date) -> Optional[MessageKind]:
    if profile.arm != Arm.CONTROL:
        raise CoachError(f"{profile.id} is not in the control arm")
    if (today - profile.enrolled_on).days % 7 == 0:
        return MessageKind.CONTROL_REMINDER
    return None


__all__ = [
    "Decision",
    "PatientHistory",
    "PolicyMode",
    "PolicyState",
    "WeeklyRules",
    "boltzmann_probabilities",
    "boltzmann_select",
    "control_decide",
    "daily_decide",
    "initial_action_from_draws",
    "initial_probabilities",
    "initial_select",
    "is_fresh",
    "predict_changes",
    "sample_index",
    "weekly_summary_decide",
]
