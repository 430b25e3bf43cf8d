"""Per-patient linear trends in activity and walking cadence, and r2-weighted arm averages."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

from .dataset import RunData, load_run
from .stats import AnalysisError, line_fit

log = logging.getLogger(__name__)

MIN_POINTS = 3
WEIGHTING = "r2"


@dataclass(frozen=True)
class SlopeEstimate:
    patient_id: str
    slope: float  # units per day
    r2: float
    n_points: int
    group: str = ""


def activity_slope(
    patient_id: str, days: Sequence[float], fractions: Sequence[float], group: str = ""
) -> SlopeEstimate:
    """Least-squares slope of the daily fraction of target against the day index."""
    if len(days) < MIN_POINTS:
        raise AnalysisError(f"{patient_id}: {len(days)} points, need at least {MIN_POINTS}")
    fit = line_fit(days, fractions)
    return SlopeEstimate(patient_id, fit.slope, fit.r2, fit.n_points, group)


def cadence_slope(
    patient_id: str, weeks: Sequence[float], cadences: Sequence[float], group: str = ""
) -> SlopeEstimate:
    """Slope of weekly mean cadence, converted from per-week to per-day."""
    if len(weeks) < MIN_POINTS:
        raise AnalysisError(f"{patient_id}: {len(weeks)} weeks, need at least {MIN_POINTS}")
    fit = line_fit(weeks, cadences)
    return SlopeEstimate(patient_id, fit.slope / 7.0, fit.r2, fit.n_points, group)


def arm_average(slopes: Sequence[SlopeEstimate]) -> float:
    """``sum(slope * r2) / sum(r2)``; patients with r2 = 0 drop out by the formula."""
    total = sum(s.r2 for s in slopes)
    if not total > 0:
        raise AnalysisError("no slope carries positive weight")
    return sum(s.slope * s.r2 for s in slopes) / total


def covered_days(data: RunData, pid: str) -> int:
    """Days whose data is complete: everything before the last upload's day."""
    last = data.last_upload_day.get(pid)
    if last is None:
        return 0
    return min(last, data.end_day)


def daily_fraction_series(data: RunData, pid: str, start: int, stop: int) -> tuple[list[int], list[float]]:
    per_day = data.profiles[pid].weekly_goal / 7.0
    mins = data.minutes.get(pid, {})
    days = list(range(start, stop))
    return days, [mins.get(d, 0.0) / per_day for d in days]


def _try(fn, *args) -> Optional[SlopeEstimate]:
    try:
        return fn(*args)
    except AnalysisError as exc:
        log.info("slope skipped: %s", exc)
        return None


def activity_slopes(source, min_points: int = MIN_POINTS) -> dict[str, list[SlopeEstimate]]:
    """Slopes grouped as ``control``, ``initial`` and ``learned``.

    Personalized patients are split at the policy switch day; control
    patients contribute their whole covered run.
    """
    data = load_run(source)
    out: dict[str, list[SlopeEstimate]] = {"control": [], "initial": [], "learned": []}
    switch = data.switch_day
    for pid in data.control:
        days, frac = daily_fraction_series(data, pid, 0, covered_days(data, pid))
        s = _try(activity_slope, pid, days, frac, "control") if len(days) >= min_points else None
        if s:
            out["control"].append(s)
    for pid in data.personalized:
        end = covered_days(data, pid)
        cut = min(switch, end) if switch is not None else end
        for group, (a, b) in (("initial", (0, cut)), ("learned", (cut, end))):
            if group == "learned" and switch is None:
                continue
            days, frac = daily_fraction_series(data, pid, a, b)
            s = _try(activity_slope, pid, days, frac, group) if len(days) >= min_points else None
            if s:
                out[group].append(s)
    return out


def weekly_cadence(data: RunData, pid: str) -> tuple[list[int], list[float]]:
    """Duration-weighted mean cadence per covered week that has sessions."""
    end = covered_days(data, pid)
    cells = data.cadence.get(pid, {})
    weeks, values = [], []
    for w in range(end // 7):
        num = sum(cells[d][0] for d in range(7 * w, 7 * w + 7) if d in cells)
        den = sum(cells[d][1] for d in range(7 * w, 7 * w + 7) if d in cells)
        if den > 0:
            weeks.append(w)
            values.append(num / den)
    return weeks, values


def cadence_slopes(source) -> dict[str, list[SlopeEstimate]]:
    data = load_run(source)
    out: dict[str, list[SlopeEstimate]] = {"control": [], "personalized": []}
    for group, ids in (("control", data.control), ("personalized", data.personalized)):
        for pid in ids:
            weeks, values = weekly_cadence(data, pid)
            s = _try(cadence_slope, pid, weeks, values, group)
            if s:
                out[group].append(s)
    return out


def summarize(groups: dict[str, list[SlopeEstimate]]) -> dict[str, Optional[float]]:
    out = {}
    for name, slopes in groups.items():
        try:
            out[name] = arm_average(slopes)
        except AnalysisError:
            out[name] = None
    return out


__all__ = [
    "MIN_POINTS",
    "SlopeEstimate",
    "activity_slope",
    "activity_slopes",
    "arm_average",
    "cadence_slope",
    "cadence_slopes",
    "covered_days",
    "daily_fraction_series",
    "summarize",
    "weekly_cadence",
]
