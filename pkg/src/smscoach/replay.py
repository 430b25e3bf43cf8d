"""Re-derive every logged decision, reward and model from the log alone.

Replay rebuilds the server's view of the data from the ``walk_session`` and
``upload`` events, recomputes each decision's context, probabilities and
action, each reward, and refits each model snapshot. Any disagreement raises
:class:`ReplayDivergence` naming the first divergent event.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .config import ConfigError, ExperimentConfig, parse_config
from .core import (
    DAILY_ACTIONS,
    Arm,
    MessageKind,
    PatientProfile,
    WalkSession,
    action_index,
    compute_reward,
    expected_week_fraction,
    plan_day_of_week,
)
from .engine import DECISION_HOUR, ServerView, TrainingPool, snapshot_record
from .eventlog import Event, EventLog, IntegrityError, LogFormatError, dumps, jsonl_text, read_jsonl, read_log
from .features import COLUMNS, ContextVector, build_context
from .policy import (
    PolicyMode,
    boltzmann_probabilities,
    initial_action_from_draws,
    initial_probabilities,
    is_fresh,
    predict_changes,
    sample_index,
)
from .regression import ModelState
from .simulator import SECONDS_PER_DAY

PROBABILITY_TOLERANCE = 1e-9
COEFFICIENT_TOLERANCE = 1e-9


class ReplayDivergence(IntegrityError):
    def __init__(self, seq: int, reason: str):
        self.seq = seq
        self.reason = reason
        super().__init__(f"replay diverges at seq {seq}: {reason}")


@dataclass(frozen=True)
class ReplayReport:
    decisions: int
    rewards: int
    models: int
    events: int


def _close(a: Sequence[float], b: Sequence[float], tol: float) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.abs(b))))


class _Replayer:
    def __init__(self, log: EventLog, snapshots: Optional[list[ModelState]], models_text: Optional[str]):
        self.log = log
        try:
            self.config: ExperimentConfig = parse_config(log.manifest.get("config"))
        except ConfigError as exc:
            raise LogFormatError(f"manifest carries an invalid config: {exc}") from None
        self.snapshots = snapshots
        self.models_text = models_text
        self.profiles: dict[str, PatientProfile] = {}
        self.server: Optional[ServerView] = None
        self.epoch_ts = 0
        self.pool = TrainingPool()
        self.buffer: dict[str, list[WalkSession]] = {}
        self.committed_day = -1
        self.mode = PolicyMode.INITIAL
        self.model_count = 0
        self.counts = {"decision": 0, "reward": 0}
        self.decisions: dict[int, tuple] = {}

    def fail(self, ev: Event, reason: str) -> None:
        raise ReplayDivergence(ev.seq, reason)

    # -- setup ---------------------------------------------------------

    def _start_server(self, epoch_ts: int) -> None:
        profiles = list(self.profiles.values())
        self.server = ServerView(profiles, epoch_ts, self.config.policy.week_anchor)
        for p in profiles:
            self.server.mark_alive(p.id, epoch_ts)

    def _commit_through(self, day: int) -> None:
        while self.committed_day < day:
            self.committed_day += 1
            self.server.commit(self.server.epoch_ts + self.committed_day * SECONDS_PER_DAY)

    # -- per-kind checks -----------------------------------------------

    def on_decision(self, ev: Event) -> None:
        pl, pid = ev.payload, ev.patient_id
        profile = self.profiles.get(pid)
        if profile is None or profile.arm != Arm.PERSONALIZED:
            self.fail(ev, f"decision for {pid!r}, who is not a personalized-arm patient")
        today = self.server.date_of(ev.day)
        if ev.ts != self.server.epoch_ts + ev.day * SECONDS_PER_DAY + DECISION_HOUR * 3600:
            self.fail(ev, "decision is not stamped at the morning decision time")
        history = self.server.history(pid, today)
        if not is_fresh(history.last_upload, ev.ts, int(self.config.policy.staleness_hours * 3600)):
            self.fail(ev, "decision was made for a patient whose data is stale")
        if pl.get("last_upload") != history.last_upload:
            self.fail(ev, "logged last upload time differs from the rebuilt one")
        ctx = build_context(profile, history.records, history.message_log, today, self.config.policy.week_anchor)
        if not _close(pl["context"], ctx.as_list(), PROBABILITY_TOLERANCE):
            self.fail(ev, "logged context differs from the context rebuilt from uploads")
        f = expected_week_fraction(plan_day_of_week(profile.enrolled_on, today, self.config.policy.week_anchor))
        if pl["mode"] != self.mode:
            self.fail(ev, f"decision mode {pl['mode']!r} but the policy is {self.mode!r}")
        draws = pl["draws"]
        if self.mode == PolicyMode.LEARNED:
            idx = pl.get("model_index")
            if idx != self.model_count - 1:
                self.fail(ev, f"decision uses model {idx}, the latest is {self.model_count - 1}")
            preds = predict_changes(self._snapshot(ev, idx), ContextVector.from_array(pl["context"]))
            if pl["predictions"] is None or not _close(pl["predictions"], preds, PROBABILITY_TOLERANCE):
                self.fail(ev, "logged predictions differ from the model's")
            probs = boltzmann_probabilities(preds, self.config.policy.temperature)
            if len(draws) != 1:
                self.fail(ev, "a learned decision carries exactly one draw")
            action = DAILY_ACTIONS[sample_index(probs, draws[0])]
        else:
            probs = initial_probabilities(f)
            if len(draws) != 3:
                self.fail(ev, "an initial-policy decision carries three draws")
            action = initial_action_from_draws(f, draws)
        if not math.isclose(pl["expected_fraction"], f, abs_tol=PROBABILITY_TOLERANCE):
            self.fail(ev, "logged expected week fraction is wrong")
        if not _close(pl["probabilities"], probs, PROBABILITY_TOLERANCE):
            self.fail(ev, "logged action probabilities differ from the recomputed ones")
        if MessageKind(pl["action"]) != action:
            self.fail(ev, f"logged action {pl['action']} but the draws select {action.value}")
        self.server.record_message(pid, today, action)
        self.decisions[ev.seq] = (pid, ev.day, pl["action"], pl["context"], pl["mode"])
        self.counts["decision"] += 1

    def on_reward(self, ev: Event) -> None:
        pl, pid = ev.payload, ev.patient_id
        d = pl["decision_day"]
        origin = self.decisions.pop(pl["decision_seq"], None)
        if origin != (pid, d, pl["action"], pl["context"], pl["mode"]):
            self.fail(ev, "reward does not match an open decision of this patient")
        if not self.server.day_complete(pid, d):
            self.fail(ev, f"reward for day {d} finalized before that day's data was complete")
        m_prev = self.server.minutes(pid, d - 1)
        m_curr = self.server.minutes(pid, d)
        y = compute_reward(m_prev, m_curr)
        if not (
            math.isclose(pl["minutes_prev"], m_prev, rel_tol=1e-12, abs_tol=1e-12)
            and math.isclose(pl["minutes"], m_curr, rel_tol=1e-12, abs_tol=1e-12)
            and math.isclose(pl["reward"], y, rel_tol=1e-12)
        ):
            self.fail(ev, "logged reward differs from the minutes rebuilt from uploads")
        self.pool.append(list(pl["context"]), action_index(MessageKind(pl["action"])), y)
        self.counts["reward"] += 1

    def on_mode_switch(self, ev: Event) -> None:
        threshold = self.config.policy.switch_threshold or 10 * len(COLUMNS)
        if len(self.pool) < threshold:
            self.fail(ev, f"switch with {len(self.pool)} rows, below the threshold {threshold}")
        self.mode = PolicyMode.LEARNED

    def on_model(self, ev: Event) -> None:
        pl = ev.payload
        if pl["index"] != self.model_count:
            self.fail(ev, f"snapshot index {pl['index']}, expected {self.model_count}")
        snap = self._snapshot(ev, pl["index"])
        line = dumps(snapshot_record(snap, pl["index"]))
        if hashlib.sha256(line.encode("utf-8")).hexdigest() != pl["sha256"]:
            self.fail(ev, "snapshot file entry does not match its logged hash")
        if snap.n_rows != len(self.pool):
            self.fail(ev, f"snapshot fitted on {snap.n_rows} rows, the log holds {len(self.pool)}")
        refit = self.pool.refit(self.config.policy.ridge_lambda, self.server.date_of(ev.day), ev.day)
        if not _close(refit.coefficients, snap.coefficients, COEFFICIENT_TOLERANCE):
            self.fail(ev, "refitting the logged training rows does not reproduce the snapshot")
        self.model_count += 1

    def on_closed(self, ev: Event) -> None:
        if self.models_text is not None:
            digest = hashlib.sha256(self.models_text.encode("utf-8")).hexdigest()
            if digest != ev.payload.get("models_sha256"):
                self.fail(ev, "models file does not match the hash recorded at close")
        if ev.payload.get("n_snapshots") != self.model_count:
            self.fail(ev, "snapshot count at close differs from the snapshot events")

    def _snapshot(self, ev: Event, index: int) -> ModelState:
        if self.snapshots is None:
            raise LogFormatError("learned-policy decisions need the model snapshots file")
        if not 0 <= index < len(self.snapshots):
            self.fail(ev, f"model {index} is missing from the snapshots file")
        return self.snapshots[index]

    # -- driver --------------------------------------------------------

    def run(self) -> ReplayReport:
        handlers = {
            "decision": self.on_decision,
            "reward": self.on_reward,
            "mode_switch": self.on_mode_switch,
            "model_snapshot_ref": self.on_model,
            "run_closed": self.on_closed,
        }
        for ev in self.log.events:
            if ev.kind == "patient_enrolled":
                if self.server is not None:
                    self.fail(ev, "enrollment after the run started")
                self.profiles[ev.patient_id] = PatientProfile.from_dict(ev.payload["profile"])
                self.epoch_ts = ev.ts
                continue
            if self.server is None:
                if not self.profiles:
                    raise LogFormatError("log has no enrolled patients")
                self._start_server(self.epoch_ts)
            if ev.kind == "walk_session":
                pl = ev.payload
                self.buffer.setdefault(ev.patient_id, []).append(
                    WalkSession(pl["start"], pl["duration"], pl["cadence"])
                )
                continue
            if ev.kind == "upload":
                sessions = tuple(self.buffer.pop(ev.patient_id, []))
                if len(sessions) != ev.payload["n_sessions"]:
                    self.fail(ev, "upload session count differs from the preceding walk events")
                self.server.ingest(ev.patient_id, ev.ts, sessions)
                continue
            self._commit_through(ev.day)
            handler = handlers.get(ev.kind)
            if handler is not None:
                handler(ev)
        return ReplayReport(self.counts["decision"], self.counts["reward"], self.model_count, len(self.log.events))


def replay(
    source: Union[EventLog, str, Path],
    snapshots: Optional[Sequence[ModelState]] = None,
) -> ReplayReport:
    """Verify a closed log. ``snapshots`` default to the models file next to the log."""
    log = source if isinstance(source, EventLog) else read_log(source)
    if not log.closed:
        raise IntegrityError("log was never closed; replay needs a complete run")
    models_text = None
    if snapshots is None and log.path is not None:
        name = log.manifest.get("files", {}).get("models", "models.jsonl")
        path = log.directory / name
        if path.exists():
            models_text = path.read_text(encoding="utf-8")
            snapshots = [ModelState.from_dict(r) for r in read_jsonl(path)]
    elif snapshots is not None:
        models_text = jsonl_text(snapshot_record(m, i) for i, m in enumerate(snapshots))
    return _Replayer(log, list(snapshots) if snapshots is not None else None, models_text).run()


__all__ = ["ReplayDivergence", "ReplayReport", "replay"]
