import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smscoach.config import HbA1cConfig, SimulatorConfig, default_archetypes, parse_config
from smscoach.core import Arm, CoachError, MessageKind, WalkSession
from smscoach.simulator import (
    TrueWalk,
    draw_dropout_week,
    freshness,
    generate_cohort,
    hba1c_step,
    expected_propensity,
    message_effect,
    realize_walks,
    sense_walks,
    slot_times,
    step_patient,
    stream,
    transmit,
)

DYN = SimulatorConfig()
HOUR = 3600


def test_streams_are_reproducible_and_distinct():
    a = stream(7, "behavior/P01").random(5)
    assert np.array_equal(a, stream(7, "behavior/P01").random(5))
    assert not np.array_equal(a, stream(7, "behavior/P02").random(5))
    assert not np.array_equal(a, stream(8, "behavior/P01").random(5))
    assert not np.array_equal(stream(7, "profile", 0).random(5), stream(7, "profile", 1).random(5))


def test_freshness():
    assert freshness(1, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-15)
    assert freshness(0, 1.0) == 0.0
    assert freshness(math.inf, 1.0) == 1.0
    with pytest.raises(CoachError):
        freshness(-1, 1.0)


def test_message_effects():
    pos = default_archetypes()["positive_responder"]
    assert message_effect(pos, None, 1) == 0.0
    assert message_effect(pos, MessageKind.NO_MESSAGE, 1) == 0.0
    assert message_effect(pos, MessageKind.WEEKLY_REMINDER, 1) == 0.0
    assert message_effect(pos, MessageKind.POSITIVE_SOCIAL, math.inf) == pytest.approx(0.12)
    # repeating the same message the next day keeps only part of the effect
    assert message_effect(pos, MessageKind.POSITIVE_SOCIAL, 1) < 0.12


def test_hba1c_step_oracle():
    params = HbA1cConfig(noise_sd=0.0)
    # target 8 - 0.6 * 0.5 = 7.7; one step of 8% toward it
    assert hba1c_step(8.0, 8.0, 0.5, None, params) == pytest.approx(7.976, abs=1e-12)
    assert hba1c_step(8.0, 8.0, 0.5, None, params, personalized=True) == pytest.approx(7.96, abs=1e-12)
    assert hba1c_step(8.0, 8.0, 3.0, None, params) == hba1c_step(8.0, 8.0, 1.0, None, params)
    with pytest.raises(CoachError):
        hba1c_step(8.0, 8.0, -0.1, None, params)


def test_dropout_mean():
    rng = np.random.default_rng(0)
    weeks = [draw_dropout_week(20.0, 26, rng) for _ in range(40_000)]
    mean = np.mean([26.0 if w is None else w for w in weeks])
    assert mean == pytest.approx(20.0, abs=0.1)
    assert draw_dropout_week(None, 26, rng) is None
    low = [draw_dropout_week(5.0, 26, rng) for _ in range(20_000)]
    assert np.mean(low) == pytest.approx(5.0, abs=0.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 600), st.integers(0, 2**32 - 1))
def test_realized_walks(minutes, seed):
    walks = realize_walks(minutes, 0, 100.0, np.random.default_rng(seed), DYN)
    assert len(walks) <= 3
    lo, hi = DYN.walk_window_hours
    for a, b in zip(walks, walks[1:]):
        assert a.end <= b.start
    for w in walks:
        assert lo * HOUR <= w.start and w.end <= hi * HOUR + 1e-6
        assert w.duration >= DYN.walk_chunk_minutes - 1e-9 or minutes < DYN.walk_chunk_minutes
    total = sum(w.duration for w in walks)
    assert total <= minutes + 1e-9 or minutes < DYN.walk_chunk_minutes
    # only days too long to fit the daytime window are clipped
    if DYN.walk_chunk_minutes <= minutes <= 300:
        assert total == pytest.approx(minutes, rel=1e-9)


def test_short_days_keep_expected_minutes():
    rng = np.random.default_rng(3)
    total = sum(sum(w.duration for w in realize_walks(7.0, 0, 100.0, rng, DYN)) for _ in range(20_000))
    assert total / 20_000 == pytest.approx(7.0, rel=0.03)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0, 3600), st.floats(0.5, 60)), max_size=4),
    st.floats(0, 210),
)
def test_sensing_properties(spec, phase):
    t, walks = 0.0, []
    for gap, d in spec:
        t += gap
        walks.append(TrueWalk(t, d, 90.0))
        t += d * 60
    sessions = sense_walks(walks, 3.5, phase)
    for s in sessions:
        owner = [w for w in walks if w.start <= s.start < w.end]
        assert len(owner) == 1
        assert s.duration >= 10
        assert 0 <= owner[0].duration - s.duration <= 3.5
    detected = {next(w for w in walks if w.start <= s.start < w.end) for s in sessions}
    assert all(w in detected for w in walks if w.duration >= 13.5)


def test_overlapping_walks_rejected():
    with pytest.raises(CoachError):
        sense_walks([TrueWalk(0, 20, 90), TrueWalk(600, 20, 90)])


def test_slots_and_transmit():
    assert slot_times(0, 10 * HOUR, 2.5) == [9000, 18000, 27000, 36000]
    assert slot_times(9000, 18000, 2.5) == [18000]
    s1 = WalkSession(0, 30.0, 100.0)  # ends at 1800
    s2 = WalkSession(20_000, 30.0, 100.0)  # ends at 21800
    ups, backlog = transmit([s1, s2], 30_000, since=0, schedule_period=2.5)
    assert [u.ts for u in ups] == [9000, 18000, 27000]
    assert ups[0].sessions == (s1,) and ups[1].sessions == () and ups[2].sessions == (s2,)
    assert backlog == []
    # a blocked slot defers the session to the next one
    ups, _ = transmit([s1], 20_000, since=0, blocked=lambda t: t == 9000)
    assert [(u.ts, len(u.sessions)) for u in ups] == [(18000, 1)]
    with pytest.raises(CoachError):
        transmit([], 1, since=0, outage_prob=0.5)


def test_step_noise_independent_of_message():
    sim = generate_cohort(parse_config({"seed": 2}))[0]
    _, none = step_patient(sim, None, math.inf, np.random.default_rng(5), DYN, 0)
    _, neg = step_patient(sim, MessageKind.NEGATIVE, math.inf, np.random.default_rng(5), DYN, 0)
    # same noise draw, so the propensities differ by exactly the message effect
    effect = message_effect(sim.archetype, MessageKind.NEGATIVE, math.inf)
    assert neg.propensity == pytest.approx(none.propensity * (1 + effect), rel=1e-12)


def test_habit_stays_within_cap():
    sim = generate_cohort(parse_config({"seed": 4}))[3]
    rng = np.random.default_rng(0)
    cap = DYN.max_fraction * max(sim.daily_goal, sim.habit0)
    for _ in range(200):
        _, sim = step_patient(sim, MessageKind.POSITIVE_SELF, math.inf, rng, DYN, 0)
        assert 0 < sim.habit <= cap and sim.propensity <= cap


def test_cohort_composition():
    cfg = parse_config({"seed": 11})
    cohort = generate_cohort(cfg)
    assert len(cohort) == 27
    arms = Counter(s.profile.arm for s in cohort)
    assert arms == {Arm.PERSONALIZED: 20, Arm.CONTROL: 7}
    planted = Counter(s.archetype for s in cohort if s.profile.arm == Arm.PERSONALIZED)
    archetypes = cfg.cohort.archetypes
    for name, n in cfg.cohort.archetype_mix.items():
        assert planted[archetypes[name]] >= n
    assert all(60 <= s.profile.weekly_goal <= 420 for s in cohort)
    assert [s.profile for s in cohort] == [s.profile for s in generate_cohort(cfg)]


def test_freshness_two_day_tau():
    # same message two days running with tau = 2 keeps 1 - e^(-1/2) of the effect
    assert freshness(1, 2.0) == pytest.approx(1 - math.exp(-0.5), rel=1e-15)
    assert freshness(1, 2.0) == pytest.approx(0.393, abs=5e-4)


@given(st.floats(0, 100), st.floats(0.01, 100), st.floats(0.1, 10))
def test_freshness_range_and_monotone(days, extra, tau):
    f = freshness(days, tau)
    assert 0 <= f < 1 or (f == 1.0 and days / tau > 30)
    assert freshness(days + extra, tau) >= f


def test_archetype_directions():
    cohort = generate_cohort(parse_config({"seed": 0}))
    arch = default_archetypes()
    pos = next(s for s in cohort if s.archetype == arch["positive_responder"])
    neg = next(s for s in cohort if s.archetype == arch["negative_responder"])
    assert expected_propensity(pos, MessageKind.POSITIVE_SOCIAL, 7) > expected_propensity(pos, None, 7)
    for kind in (MessageKind.NEGATIVE, MessageKind.POSITIVE_SELF, MessageKind.POSITIVE_SOCIAL):
        assert expected_propensity(neg, kind, 7) <= expected_propensity(neg, None, 7)


def test_hba1c_fixed_points():
    params = HbA1cConfig(noise_sd=0.0)
    h = 8.0
    for _ in range(400):
        h = hba1c_step(h, 8.0, 0.0, None, params)
    assert h == pytest.approx(8.0)
    h = 8.0
    for _ in range(400):
        h = hba1c_step(h, 8.0, 1.0, None, params)
    assert h == pytest.approx(8.0 - 0.6, abs=1e-9)


def test_two_followups_in_half_a_year():
    from smscoach.engine import init_state

    state = init_state(parse_config({"seed": 0}))
    assert all(len(days) == 3 and days[0] == 0 for days in state.measure_days.values())
    assert all(days[2] < 182 for days in state.measure_days.values())


def test_cohort_dropout_mean():
    lengths = []
    for seed in range(50):
        for s in generate_cohort(parse_config({"seed": seed})):
            lengths.append(26.0 if s.dropout_week is None else min(s.dropout_week, 26.0))
    assert np.mean(lengths) == pytest.approx(20.0, abs=2.0)


def test_messages_have_no_side_channel():
    """With zero responses the two arms walk alike."""
    from scipy import stats

    from smscoach.analysis.dataset import load_run
    from smscoach.engine import run_experiment

    flat = {k: {**v.model_dump(), "response": [0, 0, 0, 0]} for k, v in default_archetypes().items()}
    diffs = []
    for seed in range(50):
        cfg = parse_config({"seed": seed, "horizon_weeks": 3, "cohort": {"archetypes": flat}})
        data = load_run(run_experiment(cfg).log())
        arm_means = []
        for ids in (data.personalized, data.control):
            per = [sum(data.minutes.get(p, {}).values()) / data.profiles[p].weekly_goal for p in ids]
            arm_means.append(np.mean(per))
        diffs.append(arm_means)
    a, b = np.array(diffs).T
    assert stats.ttest_rel(a, b).pvalue > 0.01
