"""Flatten an event log into the tables every analysis reads."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from ..core import Arm, MessageKind, PatientProfile
from ..eventlog import Event, EventLog, read_jsonl, read_log
from ..regression import ModelState
from .stats import AnalysisError

SECONDS_PER_DAY = 86_400


@dataclass(frozen=True)
class RewardObs:
    patient_id: str
    day: int
    action: MessageKind
    mode: str
    reward: float
    context: tuple[float, ...] = ()


@dataclass(frozen=True)
class Hba1cObs:
    patient_id: str
    day: int
    value: float
    baseline: bool


@dataclass
class RunData:
    manifest: dict
    profiles: dict[str, PatientProfile] = field(default_factory=dict)
    archetypes: dict[str, str] = field(default_factory=dict)
    rewards: list[RewardObs] = field(default_factory=list)
    decisions: dict[tuple[str, int], MessageKind] = field(default_factory=dict)
    minutes: dict[str, dict[int, float]] = field(default_factory=dict)
    cadence: dict[str, dict[int, tuple[float, float]]] = field(default_factory=dict)
    last_upload_day: dict[str, int] = field(default_factory=dict)
    hba1c: list[Hba1cObs] = field(default_factory=list)
    switch_day: Optional[int] = None
    end_day: int = 0
    epoch_ts: int = 0
    snapshots: list[ModelState] = field(default_factory=list)

    def arm(self, arm: Arm) -> list[str]:
        return sorted(pid for pid, p in self.profiles.items() if p.arm == arm)

    @property
    def personalized(self) -> list[str]:
        return self.arm(Arm.PERSONALIZED)

    @property
    def control(self) -> list[str]:
        return self.arm(Arm.CONTROL)


def _epoch_ts(manifest: dict, events: Sequence[Event]) -> int:
    for ev in events:
        if ev.kind == "patient_enrolled":
            return ev.ts
    return 0


def load_run(
    source: Union[EventLog, str, Path, "RunData"],
    snapshots: Optional[Sequence[ModelState]] = None,
    load_models: bool = True,
) -> RunData:
    """Build :class:`RunData` from a log object or a log path.

    Model snapshots come from ``snapshots`` when given, else from the models
    file next to the log (if it exists and ``load_models`` is set).
    """
    if isinstance(source, RunData):
        return source
    log = source if isinstance(source, EventLog) else read_log(source)
    data = RunData(manifest=log.manifest)
    data.epoch_ts = _epoch_ts(log.manifest, log.events)
    minutes: dict[str, dict[int, float]] = defaultdict(lambda: defaultdict(float))
    cadence: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(lambda: [0.0, 0.0]))

    for ev in log.events:
        kind, pid, pl = ev.kind, ev.patient_id, ev.payload
        if kind == "patient_enrolled":
            data.profiles[pid] = PatientProfile.from_dict(pl["profile"])
            if "sim_archetype" in pl:
                data.archetypes[pid] = pl["sim_archetype"]
        elif kind == "walk_session":
            day = (pl["start"] - data.epoch_ts) // SECONDS_PER_DAY
            minutes[pid][day] += pl["duration"]
            cell = cadence[pid][day]
            cell[0] += pl["duration"] * pl["cadence"]
            cell[1] += pl["duration"]
        elif kind == "upload":
            data.last_upload_day[pid] = (ev.ts - data.epoch_ts) // SECONDS_PER_DAY
        elif kind == "decision":
            data.decisions[(pid, ev.day)] = MessageKind(pl["action"])
        elif kind == "reward":
            data.rewards.append(
                RewardObs(
                    pid,
                    pl["decision_day"],
                    MessageKind(pl["action"]),
                    pl["mode"],
                    float(pl["reward"]),
                    tuple(pl.get("context", ())),
                )
            )
        elif kind == "hba1c_measured":
            data.hba1c.append(Hba1cObs(pid, ev.day, float(pl["value"]), bool(pl["baseline"])))
        elif kind == "mode_switch":
            data.switch_day = ev.day
        elif kind == "run_closed":
            data.end_day = int(pl["days"])
    if not data.end_day and log.events:
        data.end_day = max(e.day for e in log.events)

    data.minutes = {p: dict(d) for p, d in minutes.items()}
    data.cadence = {p: {k: (v[0], v[1]) for k, v in d.items()} for p, d in cadence.items()}

    if snapshots is not None:
        data.snapshots = list(snapshots)
    elif load_models and log.path is not None:
        name = log.manifest.get("files", {}).get("models", "models.jsonl")
        path = log.directory / name
        if path.exists():
            data.snapshots = [ModelState.from_dict(r) for r in read_jsonl(path)]
    return data


def require(condition: bool, message: str) -> None:
    if not condition:
        raise AnalysisError(message)


__all__ = ["Hba1cObs", "RewardObs", "RunData", "load_run", "require"]
