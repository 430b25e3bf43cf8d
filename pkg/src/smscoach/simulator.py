"""Synthetic cohort: behavior response, walk sensing, transmission and HbA1c drift.

Each simulated patient carries a slowly moving *habit* (expected minutes of
walking on an unprompted day). The morning message scales the day's
propensity by ``1 + response * freshness``, where freshness discounts a
message repeated within a few days. Part of a positive response persists in
the habit (``carryover``); without prompts the habit relaxes toward a lower
set point, so an unprompted patient slowly loses activity.

Walking cadence declines slightly with time and rises with accumulated
positive responses (a *fitness* state).
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .config import ArchetypeParams, ExperimentConfig, HbA1cConfig, SimulatorConfig
from .core import (
    DAILY_ACTIONS,
    MIN_SESSION_MINUTES,
    Arm,
    CoachError,
    Gender,
    MessageKind,
    PatientProfile,
    WalkSession,
)

SECONDS_PER_DAY = 86_400


def stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Independent generator for a named purpose, derived from the root seed."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key, index)))


@dataclass(frozen=True)
class TrueWalk:
    start: float  # UTC seconds
    duration: float  # minutes
    cadence: float

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise CoachError("walk duration must be positive")

    @property
    def end(self) -> float:
        return self.start + 60.0 * self.duration


@dataclass(frozen=True)
class SimPatientState:
    profile: PatientProfile
    archetype: ArchetypeParams
    propensity: float
    habit: float
    habit0: float
    hba1c: float
    cadence_base: float
    last_upload: Optional[int] = None
    dropout_week: Optional[float] = None
    sampling_phase: float = 0.0  # seconds
    fitness: float = 0.0
    days: int = 0

    def __post_init__(self) -> None:
        if self.propensity < 0:
            raise CoachError("propensity must be non-negative")
        if not self.habit > 0:
            raise CoachError("habit must be positive")
        if not self.hba1c > 0:
            raise CoachError("hba1c must be positive")

    @property
    def daily_goal(self) -> float:
        return self.profile.weekly_goal / 7.0


def freshness(days_since_same_message: float, tau: float) -> float:
    """Share of a message's effect left after it was last sent ``days`` ago."""
    if days_since_same_message < 0:
        raise CoachError("days since message must be non-negative")
    if math.isinf(days_since_same_message):
        return 1.0
    return 1.0 - math.exp(-days_since_same_message / tau)


def message_effect(
    archetype: ArchetypeParams, message: Optional[MessageKind], days_since_same_message: float
) -> float:
    if message is None or message == MessageKind.NO_MESSAGE:
        return 0.0
    message = MessageKind(message)
    if not message.is_daily:
        return 0.0
    response = archetype.response[DAILY_ACTIONS.index(message)]
    return response * freshness(days_since_same_message, archetype.habituation_tau)


def expected_propensity(
    state: SimPatientState,
    message: Optional[MessageKind],
    days_since_same_message: float,
) -> float:
    """Noise-free propensity for the day (before the upper cap)."""
    return state.habit * (1.0 + message_effect(state.archetype, message, days_since_same_message))


def cadence_level(state: SimPatientState, dynamics: SimulatorConfig) -> float:
    aged = state.cadence_base - dynamics.cadence_decline_per_week * state.days / 7.0
    return aged * math.exp(dynamics.cadence_gain * state.fitness)


def step_patient(
    state: SimPatientState,
    message: Optional[MessageKind],
    days_since_same_message: float,
    rng: np.random.Generator,
    dynamics: SimulatorConfig,
    day_start: int,
) -> tuple[list[TrueWalk], SimPatientState]:
    """Realize one day of walking after the morning message and advance the state.

    ``message`` is the morning message (``None`` when suppressed). The noise
    draw happens before any message-dependent branching, so two calls that
    differ only in the message see identical randomness.
    """
    sd = state.archetype.daily_noise_sd
    noise = math.exp(sd * rng.standard_normal() - 0.5 * sd * sd)
    effect = message_effect(state.archetype, message, days_since_same_message)
    cap = dynamics.max_fraction * max(state.daily_goal, state.habit0)
    propensity = min(cap, state.habit * (1.0 + effect) * noise)

    walks = realize_walks(propensity, day_start, cadence_level(state, dynamics), rng, dynamics)

    g = math.log1p(effect)
    persisted = dynamics.carryover * max(g, 0.0) + dynamics.negative_carryover * min(g, 0.0)
    log_h = math.log(state.habit)
    target = math.log(dynamics.set_point * state.habit0)
    log_h += persisted - dynamics.set_point_rate * (log_h - target)
    habit = min(cap, max(0.01 * state.daily_goal, math.exp(log_h)))
    fitness = state.fitness * (1.0 - dynamics.fitness_decay) + max(g, 0.0)
    new = replace(state, propensity=propensity, habit=habit, fitness=fitness, days=state.days + 1)
    return walks, new


def realize_walks(
    minutes: float,
    day_start: int,
    cadence: float,
    rng: np.random.Generator,
    dynamics: SimulatorConfig,
) -> list[TrueWalk]:
    """Turn a day's minutes into 0-3 non-overlapping walks.

    Below one chunk the patient takes a single chunk-sized walk with
    probability ``minutes / chunk`` (so the expectation is kept). Above it,
    one walk per started 2.5 chunks (at most 3) shares the minutes, and no
    piece is shorter than a chunk.
    """
    chunk = dynamics.walk_chunk_minutes
    if minutes <= 0:
        return []
    if minutes < chunk:
        if rng.random() >= minutes / chunk:
            return []
        durations = [chunk]
    else:
        k = max(1, min(3, int(minutes // (2.5 * chunk)) + 1, int(minutes // chunk)))
        if k == 1:
            durations = [minutes]
        else:
            share = rng.dirichlet(np.full(k, 8.0))
            spare = minutes - k * chunk
            durations = list(chunk + spare * share)

    lo, hi = dynamics.walk_window_hours
    slot = (hi - lo) * 3600.0 / len(durations)
    walks = []
    for i, d in enumerate(durations):
        span = min(d * 60.0, 0.95 * slot)
        start = day_start + lo * 3600.0 + i * slot + rng.random() * (slot - span)
        c = max(30.0, cadence + dynamics.cadence_noise_sd * rng.standard_normal())
        walks.append(TrueWalk(start=start, duration=span / 60.0, cadence=c))
    return walks


def sense_walks(
    true_walks: Sequence[TrueWalk], sampling_period: float = 3.5, phase: float = 0.0
) -> list[WalkSession]:
    """Apply the phone's duty-cycled detection to true walks.

    The accelerometer is sampled every ``sampling_period`` minutes (grid offset
    ``phase`` seconds). A walk is noticed at its first in-walk sample and then
    tracked to its end, so the measured session starts at that sample and loses
    less than one period of the true duration. Sessions under 10 minutes are
    discarded.
    """
    period = sampling_period * 60.0
    walks = sorted(true_walks, key=lambda w: w.start)
    for a, b in zip(walks, walks[1:]):
        if b.start < a.end:
            raise CoachError("true walks overlap")
    sessions = []
    for w in walks:
        first = phase + math.ceil((w.start - phase) / period) * period
        if first < w.start:  # the division can round down
            first += period
        if first >= w.end:
            continue
        measured = (w.end - first) / 60.0
        if measured >= MIN_SESSION_MINUTES:
            # round up so the logged start never precedes the walk
            sessions.append(WalkSession(start=math.ceil(first), duration=measured, cadence=w.cadence))
    return sessions


@dataclass(frozen=True)
class Upload:
    ts: int
    sessions: tuple[WalkSession, ...]


def slot_times(since: float, until: float, period_hours: float, origin: float = 0.0) -> list[int]:
    """Transmission slots on the grid ``origin + k * period``, in (since, until]."""
    period = period_hours * 3600.0
    k = math.floor((since - origin) / period) + 1
    out = []
    while origin + k * period <= until:
        out.append(int(round(origin + k * period)))
        k += 1
    return out


def transmit(
    sessions: Iterable[WalkSession],
    now: float,
    *,
    since: float,
    schedule_period: float = 2.5,
    origin: float = 0.0,
    outage_prob: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    blocked: Optional[Callable[[int], bool]] = None,
) -> tuple[list[Upload], list[WalkSession]]:
    """Run the upload slots in ``(since, now]``.

    Every successful slot produces an :class:`Upload` (possibly empty; it still
    proves the phone is alive). Sessions ride the first successful slot after
    they end; a failed slot leaves them in the backlog. Returns the uploads
    and the remaining backlog.
    """
    if outage_prob > 0 and rng is None:
        raise CoachError("an rng is required when outage_prob > 0")
    backlog = sorted(sessions, key=lambda s: (s.end, s.start))
    uploads = []
    for t in slot_times(since, now, schedule_period, origin):
        if blocked is not None and blocked(t):
            continue
        if outage_prob > 0 and rng.random() < outage_prob:
            continue
        ready = tuple(s for s in backlog if s.end <= t)
        if ready:
            backlog = [s for s in backlog if s.end > t]
        uploads.append(Upload(ts=t, sessions=ready))
    return uploads, backlog


def hba1c_step(
    hba1c: float,
    baseline: float,
    activity_fraction: float,
    rng: Optional[np.random.Generator],
    params: HbA1cConfig,
    personalized: bool = False,
) -> float:
    """One week of HbA1c drift toward ``baseline - k_glyc * min(1, activity)``.

    Personalized-arm patients aim ``arm_effect`` lower still.
    """
    if activity_fraction < 0:
        raise CoachError("activity fraction must be non-negative")
    target = baseline - params.k_glyc * min(1.0, activity_fraction)
    if personalized:
        target -= params.arm_effect
    value = hba1c + params.weekly_rate * (target - hba1c)
    if rng is not None and params.noise_sd > 0:
        value += params.noise_sd * rng.standard_normal()
    return max(value, 0.1)


def draw_dropout_week(
    mean_weeks: Optional[float], horizon_weeks: int, rng: np.random.Generator
) -> Optional[float]:
    """Week at which a phone stops transmitting, or None for the full run.

    Dropouts are uniform on [1, horizon]; the share of completers is set so
    the mean transmission length ``E[min(dropout, horizon)]`` equals
    ``mean_weeks``.
    """
    u, v = rng.random(), rng.random()
    if mean_weeks is None or mean_weeks >= horizon_weeks:
        return None
    h = float(horizon_weeks)
    mid = (1.0 + h) / 2.0
    if mean_weeks <= mid:
        return 1.0 + v * max(0.0, 2.0 * (mean_weeks - 1.0))
    p_complete = (mean_weeks - mid) / (h - mid)
    if u < p_complete:
        return None
    return 1.0 + v * (h - 1.0)


def _patient_id(i: int, width: int) -> str:
    return f"P{i + 1:0{width}d}"


def generate_cohort(config: ExperimentConfig) -> list[SimPatientState]:
    """Draw profiles, arms and archetypes for the configured cohort."""
    cc = config.cohort
    sim = config.simulator
    seed = config.seed
    rng = stream(seed, "cohort")
    width = max(2, len(str(cc.size)))

    arms = [Arm.PERSONALIZED] * cc.personalized + [Arm.CONTROL] * cc.control
    arms = [arms[i] for i in rng.permutation(len(arms))]

    names = sorted(cc.archetypes)
    planted: list[str] = []
    for name in names:
        planted += [name] * cc.archetype_mix.get(name, 0)
    planted += [names[int(rng.integers(len(names)))] for _ in range(cc.personalized - len(planted))]
    planted = [planted[i] for i in rng.permutation(len(planted))]
    control_types = [names[int(rng.integers(len(names)))] for _ in range(cc.control)]

    # lognormal goal with the configured mean and sd
    s2 = math.log(1.0 + (cc.goal_sd / cc.goal_mean) ** 2)
    mu = math.log(cc.goal_mean) - 0.5 * s2

    patients = []
    p_iter, c_iter = iter(planted), iter(control_types)
    for i, arm in enumerate(arms):
        prng = stream(seed, "profile", i)
        archetype = cc.archetypes[next(p_iter) if arm == Arm.PERSONALIZED else next(c_iter)]
        female = prng.random() < archetype.percent_female / 100.0
        age = int(round(min(85, max(30, cc.age_mean + cc.age_sd * prng.standard_normal()))))
        goal = float(np.clip(math.exp(mu + math.sqrt(s2) * prng.standard_normal()), cc.goal_min, cc.goal_max))
        goal = round(goal, 1)
        lo, hi = cc.sessions_per_week
        sessions = int(prng.integers(lo, hi + 1))
        baseline = max(cc.hba1c_min, cc.hba1c_mean + cc.hba1c_sd * prng.standard_normal())
        baseline = round(baseline, 2)
        cadence = max(60.0, sim.cadence_mean + sim.cadence_sd * prng.standard_normal())
        dropout = draw_dropout_week(sim.dropout_mean_weeks, config.horizon_weeks, prng)
        phase = prng.random() * sim.sampling_period_minutes * 60.0

        profile = PatientProfile(
            id=_patient_id(i, width),
            age=age,
            gender=Gender.FEMALE if female else Gender.MALE,
            weekly_goal=goal,
            sessions_per_week=sessions,
            arm=arm,
            baseline_hba1c=baseline,
            enrolled_on=config.epoch,
        )
        p0 = max(archetype.base_adherence * goal / 7.0, sim.min_daily_minutes, 0.01 * goal / 7.0)
        patients.append(
            SimPatientState(
                profile=profile,
                archetype=archetype,
                propensity=p0,
                habit=p0,
                habit0=p0,
                hba1c=baseline,
                cadence_base=cadence,
                dropout_week=dropout,
                sampling_phase=phase,
            )
        )
    return patients


def run_cohort(config: ExperimentConfig, seed: Optional[int] = None):
    """Simulate the full cohort through the engine loop; returns the run result."""
    from .engine import run_experiment

    if seed is not None:
        config = config.model_copy(update={"seed": seed})
    return run_experiment(config)


def day_start_ts(epoch_ts: int, day: int) -> int:
    return epoch_ts + day * SECONDS_PER_DAY


__all__ = [
    "SimPatientState",
    "TrueWalk",
    "Upload",
    "draw_dropout_week",
    "cadence_level",
    "expected_propensity",
    "freshness",
    "generate_cohort",
    "hba1c_step",
    "message_effect",
    "realize_walks",
    "run_cohort",
    "sense_walks",
    "slot_times",
    "step_patient",
    "stream",
    "transmit",
]
