import hashlib
from collections import Counter, defaultdict

import pytest

from conftest import small_config
from smscoach.core import Arm, CoachError, compute_reward
from smscoach.engine import DECISION_HOUR, MockTransport, init_state, run_day, run_experiment
from smscoach.eventlog import jsonl_text
from smscoach.features import COLUMNS
from smscoach.simulator import SECONDS_PER_DAY


def _arms(log):
    return {e.patient_id: e.payload["profile"]["arm"] for e in log.of_kind("patient_enrolled")}


def test_log_shape(small_run):
    events = small_run.events
    assert events[0].kind == "manifest" and events[-1].kind == "run_closed"
    assert [e.seq for e in events] == list(range(len(events)))
    ts = [e.ts for e in events]
    assert ts == sorted(ts)
    assert small_run.manifest["config_hash"] == small_run.config.config_hash()


def test_decisions_at_morning_for_personalized_only(small_run):
    log = small_run.log()
    arms = _arms(log)
    epoch = log.of_kind("patient_enrolled")[0].ts
    per_day = Counter()
    for ev in log.of_kind("decision"):
        assert arms[ev.patient_id] == Arm.PERSONALIZED.value
        assert ev.ts == epoch + ev.day * SECONDS_PER_DAY + DECISION_HOUR * 3600
        per_day[(ev.patient_id, ev.day)] += 1
        assert sum(ev.payload["probabilities"]) == pytest.approx(1.0)
    assert max(per_day.values()) == 1


def test_control_gets_weekly_reminders_only(small_run):
    log = small_run.log()
    arms = _arms(log)
    for ev in log.of_kind("message_sent"):
        if arms[ev.patient_id] == Arm.CONTROL.value:
            assert ev.payload["kind"] == "control_reminder"
            assert ev.day % 7 == 0


def test_rewards_match_uploaded_minutes(small_run):
    """Recompute every reward from the walk sessions alone."""
    log = small_run.log()
    epoch = log.of_kind("patient_enrolled")[0].ts
    minutes = defaultdict(float)
    for ev in log.of_kind("walk_session"):
        day = (ev.payload["start"] - epoch) // SECONDS_PER_DAY
        minutes[(ev.patient_id, day)] += ev.payload["duration"]
    decisions = {ev.seq: ev for ev in log.of_kind("decision")}
    rewards = log.of_kind("reward")
    assert rewards
    seen = set()
    for ev in rewards:
        pl = ev.payload
        d = pl["decision_day"]
        assert d > 0  # enrollment day has no baseline
        assert ev.day > d
        origin = decisions[pl["decision_seq"]]
        assert (origin.patient_id, origin.day, origin.payload["action"]) == (ev.patient_id, d, pl["action"])
        assert pl["decision_seq"] not in seen
        seen.add(pl["decision_seq"])
        want = compute_reward(minutes[(ev.patient_id, d - 1)], minutes[(ev.patient_id, d)])
        assert pl["reward"] == pytest.approx(want, rel=1e-12)


def test_mode_switch_and_snapshots(small_run):
    log = small_run.log()
    switches = log.of_kind("mode_switch")
    assert len(switches) == 1
    sw = switches[0]
    assert sw.payload["n_rows"] >= small_run.config.policy.switch_threshold
    modes = [(ev.day, ev.payload["mode"]) for ev in log.of_kind("decision")]
    assert all(m == "initial" for d, m in modes if d < sw.day)
    assert all(m == "learned" for d, m in modes if d >= sw.day)
    refs = log.of_kind("model_snapshot_ref")
    assert len(refs) == len(small_run.snapshots) == small_run.config.horizon_weeks * 7 - sw.day
    assert [r.payload["index"] for r in refs] == list(range(len(refs)))
    assert all(tuple(m.manifest) == COLUMNS for m in small_run.snapshots)
    text = jsonl_text(small_run.models_records())
    closed = log.events[-1].payload
    assert closed["models_sha256"] == hashlib.sha256(text.encode()).hexdigest()


def test_written_files(small_written, small_run):
    log_path, models_path = small_written
    assert hashlib.sha256(models_path.read_bytes()).hexdigest() == small_run.log().events[-1].payload["models_sha256"]
    assert log_path.read_text(encoding="utf-8").count("\n") == len(small_run.events)


def test_transport_receives_texts():
    transport = MockTransport()
    result = run_experiment(small_config(seed=2, horizon_weeks=2), transport)
    sent = [(e.ts, e.patient_id, e.payload["text"]) for e in result.events if e.kind == "message_sent" and e.payload["text"]]
    assert sorted(transport.outbox) == sorted(sent)


def test_runs_are_deterministic_and_seed_sensitive():
    a = run_experiment(small_config(seed=3, horizon_weeks=2)).events
    b = run_experiment(small_config(seed=3, horizon_weeks=2)).events
    c = run_experiment(small_config(seed=4, horizon_weeks=2)).events
    assert a == b
    assert a != c


def test_baseline_hba1c_for_everyone(small_run):
    log = small_run.log()
    baseline = [e for e in log.of_kind("hba1c_measured") if e.payload["baseline"]]
    assert {e.patient_id for e in baseline} == set(_arms(log))
    assert all(e.day == 0 for e in baseline)


def test_cannot_run_past_horizon():
    state = init_state(small_config(horizon_weeks=1))
    for _ in range(7):
        run_day(state)
    with pytest.raises(CoachError):
        run_day(state)
