from datetime import date

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import profile
from smscoach.core import (
    DAILY_ACTIONS,
    REWARD_CAP,
    TEMPLATES,
    CoachError,
    DailyRecord,
    InvalidPlanError,
    InvalidRecordError,
    MessageKind,
    PatientProfile,
    WalkSession,
    action_index,
    compute_reward,
    expected_week_fraction,
    goal_fraction_percent,
    plan_day_of_week,
    render_message,
)

minutes = st.floats(0, 600, allow_nan=False)


@pytest.mark.parametrize(
    "prev, curr, want",
    [(20.0, 30.0, 4 / 3), (0.0, 0.0, 1.0), (30.0, 20.0, 0.75), (0.0, 100.0, 5.0), (0.0, 40.0, 5.0)],
)
def test_reward_values(prev, curr, want):
    assert compute_reward(prev, curr) == pytest.approx(want, rel=1e-15)


def test_reward_rejects_negative_minutes():
    with pytest.raises(InvalidRecordError):
        compute_reward(-1.0, 10.0)


@given(minutes, minutes)
def test_reward_bounds(a, b):
    r = compute_reward(a, b)
    assert 0 < r <= REWARD_CAP
    if a == b:
        assert r == 1.0


@given(minutes, minutes, st.floats(0, 100))
def test_reward_monotone_in_next_day(a, b, extra):
    assert compute_reward(a, b + extra) >= compute_reward(a, b)


def test_goal_percent_floors():
    assert goal_fraction_percent(75, 150) == 50
    assert goal_fraction_percent(149.99, 300) == 49
    assert goal_fraction_percent(0, 60) == 0
    with pytest.raises(InvalidPlanError):
        goal_fraction_percent(10, 0)


def test_templates_render():
    assert render_message(MessageKind.POSITIVE_SELF, 42) == (
        "You have so far achieved 42% of your weekly activity goal. "
        "Your exercise level is in accordance with your plan. Keep up the good work"
    )
    assert render_message(MessageKind.NEGATIVE).startswith("You need to exercise")
    assert render_message(MessageKind.NO_MESSAGE) == ""
    assert TEMPLATES[MessageKind.CONTROL_REMINDER] == TEMPLATES[MessageKind.WEEKLY_REMINDER]
    with pytest.raises(CoachError):
        render_message(MessageKind.POSITIVE_SOCIAL)


def test_action_order_and_index():
    assert [k.value for k in DAILY_ACTIONS] == ["negative", "positive_self", "positive_social", "no_message"]
    assert [action_index(k) for k in DAILY_ACTIONS] == [0, 1, 2, 3]
    with pytest.raises(CoachError):
        action_index(MessageKind.WEEKLY_REMINDER)


def test_plan_week():
    start = date(2015, 1, 4)  # a Sunday
    assert plan_day_of_week(start, start) == 1
    assert plan_day_of_week(start, date(2015, 1, 10)) == 7
    assert plan_day_of_week(start, date(2015, 1, 11)) == 1
    assert plan_day_of_week(start, date(2015, 1, 5), "monday") == 1
    with pytest.raises(CoachError):
        plan_day_of_week(start, date(2015, 1, 3))
    assert expected_week_fraction(7) == 1.0
    with pytest.raises(CoachError):
        expected_week_fraction(0)


def test_walk_session_floor():
    WalkSession(0, 10.0, 100.0)
    with pytest.raises(InvalidRecordError):
        WalkSession(0, 9.99, 100.0)
    with pytest.raises(InvalidRecordError):
        DailyRecord("P01", date(2015, 1, 4), -1.0)


def test_profile_roundtrip_and_validation():
    p = profile()
    assert PatientProfile.from_dict(p.to_dict()) == p
    with pytest.raises(InvalidPlanError):
        profile(goal=0.0)
