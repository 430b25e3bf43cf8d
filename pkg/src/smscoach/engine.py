"""Experiment clock: transmit, finalize rewards, retrain, decide, message, respond.

One engine day ``d`` runs in this order:

1. upload slots in ``(08:00 of d-1, 08:00 of d]`` for every phone;
2. the server commits everything uploaded before midnight (the data cutoff);
3. scheduled HbA1c measurements;
4. rewards whose two days are complete are finalized into training rows;
5. on week boundaries, the weekly summary pass;
6. mode switch check, then a refit when the learned policy is active;
7. personalized decisions and messages at 08:00, in patient-id order;
8. control-arm reminders;
9. patients respond: the day's true walks are sensed into each phone's backlog.

A day's reward is only final once an upload stamped after the following
midnight has been committed, so a model fitted on day ``d`` sees only events
dated before ``d``.
"""

from __future__ import annotations

import calendar
import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Optional, Protocol, Union

import numpy as np

from . import ENGINE_VERSION
from .config import ExperimentConfig
from .core import (
    ACHIEVEMENT_KINDS,
    DAILY_ACTIONS,
    Arm,
    CoachError,
    DailyRecord,
    MessageKind,
    PatientProfile,
    WalkSession,
    action_index,
    compute_reward,
    goal_fraction_percent,
    render_message,
)
from .eventlog import FORMAT, FORMAT_VERSION, Event, EventLog, EventSink, dumps, jsonl_text, write_log
from .features import COLUMNS, N_COLUMNS, ContextVector, Standardization, build_context, design_matrix, manifest_hash
from .policy import (
    PatientHistory,
    PolicyMode,
    PolicyState,
    WeeklyRules,
    control_decide,
    daily_decide,
    weekly_summary_decide,
)
from .regression import ModelState, fit
from .simulator import (
    SECONDS_PER_DAY,
    SimPatientState,
    generate_cohort,
    hba1c_step,
    sense_walks,
    step_patient,
    stream,
    transmit,
)

log = logging.getLogger(__name__)

DECISION_HOUR = 8


def epoch_seconds(epoch: date) -> int:
    return calendar.timegm(epoch.timetuple())


class Transport(Protocol):
    def send(self, patient_id: str, text: str, ts: int) -> None: ...


class MockTransport:
    """Records outgoing texts instead of sending them."""

    def __init__(self) -> None:
        self.outbox: list[tuple[int, str, str]] = []

    def send(self, patient_id: str, text: str, ts: int) -> None:
        self.outbox.append((ts, patient_id, text))


# ---------------------------------------------------------------------------
# server-side view of the data
# ---------------------------------------------------------------------------


@dataclass
class _PatientData:
    minutes: dict[int, float] = field(default_factory=dict)
    cadence_sum: dict[int, float] = field(default_factory=dict)
    last_upload: Optional[int] = None  # any upload, for the staleness gate
    committed_upload: Optional[int] = None  # latest upload before the cutoff
    held: list[tuple[int, tuple[WalkSession, ...]]] = field(default_factory=list)
    last_sent: dict[MessageKind, date] = field(default_factory=dict)


class ServerView:
    """What the coaching server knows, rebuilt identically by the engine and by replay.

    Sessions are attributed to the day they start. Uploads arrive through
    :meth:`ingest` and become usable for features and rewards only after
    :meth:`commit` moves the cutoff past their upload time.
    """

    def __init__(self, profiles: list[PatientProfile], epoch_ts: int, week_anchor: str = "enrollment"):
        self.profiles = {p.id: p for p in profiles}
        self.epoch_ts = epoch_ts
        self.week_anchor = week_anchor
        self.data = {p.id: _PatientData() for p in profiles}

    def day_of(self, ts: float) -> int:
        return int((ts - self.epoch_ts) // SECONDS_PER_DAY)

    def date_of(self, day: int) -> date:
        return next(iter(self.profiles.values())).enrolled_on + timedelta(days=day)

    def mark_alive(self, pid: str, ts: int) -> None:
        d = self.data[pid]
        d.last_upload = ts if d.last_upload is None else max(d.last_upload, ts)

    def ingest(self, pid: str, ts: int, sessions: tuple[WalkSession, ...]) -> None:
        self.mark_alive(pid, ts)
        self.data[pid].held.append((ts, sessions))

    def commit(self, cutoff: int) -> None:
        for d in self.data.values():
            keep = []
            for ts, sessions in d.held:
                if ts >= cutoff:
                    keep.append((ts, sessions))
                    continue
                for s in sessions:
                    day = self.day_of(s.start)
                    d.minutes[day] = d.minutes.get(day, 0.0) + s.duration
                    d.cadence_sum[day] = d.cadence_sum.get(day, 0.0) + s.duration * s.cadence
                d.committed_upload = ts if d.committed_upload is None else max(d.committed_upload, ts)
            d.held = keep

    def record_message(self, pid: str, when: date, kind: MessageKind) -> None:
        self.data[pid].last_sent[kind] = when

    def minutes(self, pid: str, day: int) -> float:
        return self.data[pid].minutes.get(day, 0.0)

    def day_complete(self, pid: str, day: int) -> bool:
        up = self.data[pid].committed_upload
        return up is not None and up >= self.epoch_ts + (day + 1) * SECONDS_PER_DAY

    def history(self, pid: str, today: date) -> PatientHistory:
        d = self.data[pid]
        day = (today - self.date_of(0)).days
        records = [
            DailyRecord(pid, self.date_of(k), d.minutes[k])
            for k in range(day - 7, day)
            if k in d.minutes
        ]
        message_log = sorted(((w, k) for k, w in d.last_sent.items()), key=lambda e: (e[0], DAILY_ACTIONS.index(e[1])))
        return PatientHistory(records=records, message_log=message_log, last_upload=d.last_upload)

    def context(self, pid: str, today: date) -> ContextVector:
        h = self.history(pid, today)
        return build_context(self.profiles[pid], h.records, h.message_log, today, self.week_anchor)

    def week_total(self, pid: str, week: int) -> float:
        m = self.data[pid].minutes
        return sum(m.get(k, 0.0) for k in range(7 * week, 7 * week + 7))


# ---------------------------------------------------------------------------
# engine state
# ---------------------------------------------------------------------------


@dataclass
class TrainingPool:
    contexts: list[list[float]] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    targets: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.targets)

    def append(self, context: list[float], action: int, target: float) -> None:
        self.contexts.append(context)
        self.actions.append(action)
        self.targets.append(target)

    def refit(self, ridge_lambda: float, today: date, day: int) -> ModelState:
        ctx = np.asarray(self.contexts, dtype=float)
        std = Standardization.from_pool(ctx)
        X = design_matrix(ctx, self.actions, std)
        return fit(
            X,
            np.asarray(self.targets),
            ridge_lambda,
            manifest=COLUMNS,
            standardization=std,
            fitted_on=today,
            day=day,
        )


@dataclass
class _Pending:
    day: int
    seq: int
    action: MessageKind
    context: list[float]
    mode: str


@dataclass
class EngineState:
    config: ExperimentConfig
    day: int
    epoch_ts: int
    patients: list[SimPatientState]
    policy: PolicyState
    server: ServerView
    pool: TrainingPool
    sink: EventSink
    transport: Transport
    snapshots: list[ModelState] = field(default_factory=list)
    pending: dict[str, list[_Pending]] = field(default_factory=dict)
    backlog: dict[str, list[WalkSession]] = field(default_factory=dict)
    sent_day: dict[str, dict[MessageKind, int]] = field(default_factory=dict)
    today: dict[str, tuple[MessageKind, float]] = field(default_factory=dict)
    achievements: dict[str, list[int]] = field(default_factory=dict)
    weekly_true_minutes: dict[str, float] = field(default_factory=dict)
    measure_days: dict[str, list[int]] = field(default_factory=dict)
    last_slot_end: int = 0
    switch_day: Optional[int] = None
    closed: bool = False
    rngs: dict[str, np.random.Generator] = field(default_factory=dict)

    @property
    def horizon_days(self) -> int:
        return 7 * self.config.horizon_weeks

    def date_of(self, day: int) -> date:
        return self.config.epoch + timedelta(days=day)

    def ts(self, day: int, hour: float = 0.0) -> int:
        return self.epoch_ts + day * SECONDS_PER_DAY + int(round(hour * 3600))


def _measurement_days(horizon_weeks: int, every_weeks: int, rng: np.random.Generator) -> list[int]:
    """Baseline on day 0, then one visit in the last week of every full quarter."""
    days = [0]
    q = 1
    while every_weeks * q <= horizon_weeks:
        day = 7 * (every_weeks * q - 1) + int(rng.integers(0, 7))
        days.append(day)
        q += 1
    return days


def init_state(config: ExperimentConfig, transport: Optional[Transport] = None) -> EngineState:
    seed = config.seed
    epoch_ts = epoch_seconds(config.epoch)
    patients = generate_cohort(config)
    pc = config.policy
    policy = PolicyState(
        rng=stream(seed, "policy"),
        temperature=pc.temperature,
        switch_threshold=pc.switch_threshold or 10 * N_COLUMNS,
        staleness_seconds=int(round(pc.staleness_hours * 3600)),
    )
    profiles = [p.profile for p in patients]
    state = EngineState(
        config=config,
        day=0,
        epoch_ts=epoch_ts,
        patients=patients,
        policy=policy,
        server=ServerView(profiles, epoch_ts, pc.week_anchor),
        pool=TrainingPool(),
        sink=EventSink(),
        transport=transport or MockTransport(),
        last_slot_end=epoch_ts,
    )
    for i, p in enumerate(patients):
        pid = p.profile.id
        state.pending[pid] = []
        state.backlog[pid] = []
        state.sent_day[pid] = {}
        state.achievements[pid] = []
        state.weekly_true_minutes[pid] = 0.0
        state.rngs[f"behavior/{pid}"] = stream(seed, "behavior", i)
        state.rngs[f"transmit/{pid}"] = stream(seed, "transmit", i)
        state.rngs[f"hba1c/{pid}"] = stream(seed, "hba1c", i)
        state.measure_days[pid] = _measurement_days(
            config.horizon_weeks,
            config.simulator.hba1c.measure_every_weeks,
            stream(seed, "clinic", i),
        )

    state.sink.emit(0, epoch_ts, None, "manifest", run_manifest(config))
    for p in patients:
        # enrollment registers the phone, which counts as a first contact
        state.sink.emit(
            0,
            epoch_ts,
            p.profile.id,
            "patient_enrolled",
            {
                "profile": p.profile.to_dict(),
                "sim_archetype": p.archetype.name,
                "sim_dropout_week": p.dropout_week,
            },
        )
        state.server.mark_alive(p.profile.id, epoch_ts)
    return state


def run_manifest(config: ExperimentConfig) -> dict:
    return {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "engine_version": ENGINE_VERSION,
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "config": config.model_dump(mode="json"),
        "column_manifest_hash": manifest_hash(),
        "files": {"log": config.output.log, "models": config.output.models},
    }


# ---------------------------------------------------------------------------
# the day loop
# ---------------------------------------------------------------------------


def _blocked_fn(state: EngineState, sim: SimPatientState, index: int):
    cfg = state.config.simulator
    pid = sim.profile.id
    windows = []
    for o in cfg.forced_outages:
        if o.patient == pid or o.patient == index:
            start = state.epoch_ts + o.start_hour * 3600.0
            windows.append((start, start + o.hours * 3600.0))
    stop = None
    if sim.dropout_week is not None:
        stop = state.epoch_ts + sim.dropout_week * 7 * SECONDS_PER_DAY

    def blocked(t: int) -> bool:
        if stop is not None and t >= stop:
            return True
        return any(a <= t < b for a, b in windows)

    return blocked


def _transmit_all(state: EngineState, until: int) -> None:
    cfg = state.config.simulator
    uploads = []
    for i, sim in enumerate(state.patients):
        pid = sim.profile.id
        ups, backlog = transmit(
            state.backlog[pid],
            until,
            since=state.last_slot_end,
            schedule_period=cfg.transmit_period_hours,
            origin=state.epoch_ts,
            outage_prob=cfg.outage_prob,
            rng=state.rngs[f"transmit/{pid}"],
            blocked=_blocked_fn(state, sim, i),
        )
        state.backlog[pid] = backlog
        uploads += [(u.ts, pid, u) for u in ups]
    uploads.sort(key=lambda e: (e[0], e[1]))
    for ts, pid, up in uploads:
        day = state.server.day_of(ts)
        for s in up.sessions:
            state.sink.emit(
                day,
                ts,
                pid,
                "walk_session",
                {"start": s.start, "duration": s.duration, "cadence": s.cadence},
            )
        state.sink.emit(day, ts, pid, "upload", {"n_sessions": len(up.sessions)})
        state.server.ingest(pid, ts, up.sessions)
    state.last_slot_end = until


def _measure_hba1c(state: EngineState, day: int, now: int) -> None:
    for sim in state.patients:
        pid = sim.profile.id
        if day in state.measure_days[pid]:
            state.sink.emit(
                day,
                now,
                pid,
                "hba1c_measured",
                {
                    "value": round(sim.hba1c, 4),
                    "baseline": day == 0,
                    "initial": sim.profile.baseline_hba1c,
                },
            )


def _finalize_rewards(state: EngineState, day: int, now: int) -> None:
    server = state.server
    for sim in state.patients:
        pid = sim.profile.id
        still = []
        for p in state.pending[pid]:
            if not server.day_complete(pid, p.day):
                still.append(p)
                continue
            m_prev = server.minutes(pid, p.day - 1)
            m_curr = server.minutes(pid, p.day)
            y = compute_reward(m_prev, m_curr)
            a = action_index(p.action)
            state.pool.append(p.context, a, y)
            state.sink.emit(
                day,
                now,
                pid,
                "reward",
                {
                    "decision_day": p.day,
                    "decision_seq": p.seq,
                    "action": p.action.value,
                    "mode": p.mode,
                    "context": p.context,
                    "minutes_prev": m_prev,
                    "minutes": m_curr,
                    "reward": y,
                },
            )
        state.pending[pid] = still


def _weekly_pass(state: EngineState, day: int, now: int) -> None:
    week = day // 7 - 1
    rules = WeeklyRules(
        cooldown_weeks=state.config.policy.achievement_cooldown_weeks,
        significance_fraction=state.config.policy.significance_fraction,
    )
    server = state.server
    personalized = [s.profile for s in state.patients if s.profile.arm == Arm.PERSONALIZED]
    histories = {p.id: [server.week_total(p.id, w) for w in range(week + 1)] for p in personalized}
    increases = [h[-1] - h[-2] for h in histories.values() if len(h) >= 2]
    for profile in personalized:
        hist = histories[profile.id]
        kind = weekly_summary_decide(profile, hist, increases, state.achievements[profile.id], rules)
        if kind in ACHIEVEMENT_KINDS:
            state.achievements[profile.id].append(week)
        text = render_message(kind)
        state.transport.send(profile.id, text, now)
        state.sink.emit(
            day,
            now,
            profile.id,
            "weekly_summary",
            {
                "week": week,
                "kind": kind.value,
                "weekly_total": hist[-1],
                "increase": hist[-1] - hist[-2] if len(hist) >= 2 else None,
            },
        )
        state.sink.emit(day, now, profile.id, "message_sent", {"kind": kind.value, "text": text})


def _retrain(state: EngineState, day: int, now: int) -> None:
    model = state.pool.refit(state.config.policy.ridge_lambda, state.date_of(day), day)
    index = len(state.snapshots)
    state.snapshots.append(model)
    state.policy.publish(model)
    line = dumps(snapshot_record(model, index))
    state.sink.emit(
        day,
        now,
        None,
        "model_snapshot_ref",
        {
            "index": index,
            "n_rows": model.n_rows,
            "adjusted_r2": model.adjusted_r2,
            "r2": model.r2,
            "sha256": hashlib.sha256(line.encode("utf-8")).hexdigest(),
        },
    )


def snapshot_record(model: ModelState, index: int) -> dict:
    rec = model.to_dict()
    rec["index"] = index
    return rec


def _decide_all(state: EngineState, day: int, now: int) -> None:
    today = state.date_of(day)
    server = state.server
    for sim in state.patients:
        profile = sim.profile
        if profile.arm != Arm.PERSONALIZED:
            continue
        history = server.history(profile.id, today)
        decision = daily_decide(state.policy, profile, history, today, now, server.week_anchor)
        if decision.suppressed:
            continue
        ctx = decision.context.as_list()
        goal_pct = goal_fraction_percent(decision.context.week_cum_minutes, profile.weekly_goal)
        learned = decision.mode == PolicyMode.LEARNED
        ev = state.sink.emit(
            day,
            now,
            profile.id,
            "decision",
            {
                "mode": decision.mode,
                "action": decision.action.value,
                "context": ctx,
                "expected_fraction": decision.expected_fraction,
                "draws": list(decision.draws),
                "probabilities": [float(v) for v in decision.action_probabilities],
                "predictions": [float(v) for v in decision.predicted_rewards] if learned else None,
                "model_index": len(state.snapshots) - 1 if learned else None,
                "temperature": state.policy.temperature,
                "last_upload": history.last_upload,
                "goal_pct": goal_pct,
            },
        )
        kind = decision.action
        text = render_message(kind, goal_pct) if kind != MessageKind.NO_MESSAGE else ""
        if text:
            state.transport.send(profile.id, text, now)
        state.sink.emit(day, now, profile.id, "message_sent", {"kind": kind.value, "text": text})
        server.record_message(profile.id, today, kind)
        prev = state.sent_day[profile.id].get(kind)
        state.today[profile.id] = (kind, math.inf if prev is None else float(day - prev))
        state.sent_day[profile.id][kind] = day
        if day > 0:  # enrollment day has no previous day to compare against
            state.pending[profile.id].append(_Pending(day, ev.seq, kind, ctx, decision.mode))


def _control_all(state: EngineState, day: int, now: int) -> None:
    today = state.date_of(day)
    for sim in state.patients:
        profile = sim.profile
        if profile.arm != Arm.CONTROL:
            continue
        kind = control_decide(profile, today)
        if kind is None:
            continue
        text = render_message(kind)
        state.transport.send(profile.id, text, now)
        state.sink.emit(day, now, profile.id, "message_sent", {"kind": kind.value, "text": text})


def _respond_all(state: EngineState, day: int) -> None:
    cfg = state.config.simulator
    for i, sim in enumerate(state.patients):
        pid = sim.profile.id
        msg, days_since = state.today.get(pid, (None, math.inf))
        walks, new = step_patient(
            sim, msg, days_since, state.rngs[f"behavior/{pid}"], cfg, state.ts(day)
        )
        state.patients[i] = new
        state.weekly_true_minutes[pid] += sum(w.duration for w in walks)
        state.backlog[pid] += sense_walks(walks, cfg.sampling_period_minutes, sim.sampling_phase)


def _weekly_hba1c(state: EngineState) -> None:
    params = state.config.simulator.hba1c
    for i, sim in enumerate(state.patients):
        pid = sim.profile.id
        frac = state.weekly_true_minutes[pid] / sim.profile.weekly_goal
        value = hba1c_step(
            sim.hba1c,
            sim.profile.baseline_hba1c,
            frac,
            state.rngs[f"hba1c/{pid}"],
            params,
            personalized=sim.profile.arm == Arm.PERSONALIZED,
        )
        state.patients[i] = replace(sim, hba1c=value)
        state.weekly_true_minutes[pid] = 0.0


def _morning(state: EngineState, day: int) -> int:
    now = state.ts(day, DECISION_HOUR)
    _transmit_all(state, now)
    state.server.commit(state.ts(day))
    _measure_hba1c(state, day, now)
    _finalize_rewards(state, day, now)
    if day > 0 and day % 7 == 0:
        _weekly_pass(state, day, now)
    return now


def run_day(state: EngineState) -> EngineState:
    """Advance the experiment by one day (mutates and returns ``state``)."""
    if state.closed:
        raise CoachError("the run is already closed")
    day = state.day
    if day >= state.horizon_days:
        raise CoachError(f"day {day} is past the {state.config.horizon_weeks}-week horizon")
    now = _morning(state, day)
    state.today = {}
    if state.policy.observe_training_size(len(state.pool)):
        state.switch_day = day
        state.sink.emit(
            day, now, None, "mode_switch",
            {"mode": PolicyMode.LEARNED, "n_rows": len(state.pool), "threshold": state.policy.switch_threshold},
        )
    if state.policy.mode == PolicyMode.LEARNED:
        _retrain(state, day, now)
    _decide_all(state, day, now)
    _control_all(state, day, now)
    _respond_all(state, day)
    if day % 7 == 6:
        _weekly_hba1c(state)
    state.day = day + 1
    return state


def close_run(state: EngineState) -> EngineState:
    """Final morning: deliver the last uploads, finalize, summarize, close the log."""
    day = state.day
    now = _morning(state, day)
    models_text = jsonl_text(snapshot_record(m, i) for i, m in enumerate(state.snapshots))
    state.sink.emit(
        day,
        now,
        None,
        "run_closed",
        {
            "days": day,
            "n_training_rows": len(state.pool),
            "n_snapshots": len(state.snapshots),
            "switch_day": state.switch_day,
            "models_sha256": hashlib.sha256(models_text.encode("utf-8")).hexdigest(),
        },
    )
    state.closed = True
    return state


@dataclass
class RunResult:
    config: ExperimentConfig
    events: list[Event]
    snapshots: list[ModelState]
    state: EngineState

    @property
    def manifest(self) -> dict:
        return self.events[0].payload

    def log(self) -> EventLog:
        return EventLog(manifest=self.manifest, events=self.events[1:])

    def models_records(self) -> list[dict]:
        return [snapshot_record(m, i) for i, m in enumerate(self.snapshots)]

    def write(self, out_dir: Union[str, Path]) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        models_path = out / self.config.output.models
        models_path.write_text(jsonl_text(self.models_records()), encoding="utf-8", newline="\n")
        log_path = out / self.config.output.log
        write_log(log_path, self.events)
        return log_path, models_path


def run_experiment(config: ExperimentConfig, transport: Optional[Transport] = None) -> RunResult:
    """Run ``horizon_weeks * 7`` days plus the closing morning."""
    state = init_state(config, transport)
    for _ in range(state.horizon_days):
        run_day(state)
        if state.day % 28 == 0:
            log.info("seed %d: day %d, %d training rows, mode %s",
                     config.seed, state.day, len(state.pool), state.policy.mode)
    close_run(state)
    return RunResult(config, state.sink.events, state.snapshots, state)


__all__ = [
    "DECISION_HOUR",
    "EngineState",
    "MockTransport",
    "RunResult",
    "ServerView",
    "TrainingPool",
    "Transport",
    "close_run",
    "epoch_seconds",
    "init_state",
    "run_day",
    "run_experiment",
    "run_manifest",
    "snapshot_record",
]
