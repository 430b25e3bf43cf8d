"""HbA1c change against time, starting level, activity target and study arm."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import Arm
from ..regression import SingularDesignError, fit
from .dataset import RunData, load_run
from .stats import AnalysisError, LineFit, f_sf, line_fit

HBA1C_COLUMNS = ("intercept", "days", "initial", "target", "personalized")


@dataclass(frozen=True)
class Hba1cRecord:
    patient_id: str
    reduction: float  # initial - current, percent points
    days: int
    initial: float
    target: float  # weekly minutes
    personalized: bool


@dataclass(frozen=True)
class Hba1cModel:
    columns: tuple[str, ...]
    coefficients: tuple[float, ...]
    r2: float
    f_statistic: float
    p_value: float
    n: int

    def coefficient(self, name: str) -> float:
        return self.coefficients[self.columns.index(name)]

    @property
    def arm_effect(self) -> float:
        """Extra reduction attributed to the personalized arm (positive favors it)."""
        return self.coefficient("personalized")


def relative_reduction(h0: float, ht: float) -> float:
    if not h0 > 0:
        raise AnalysisError("initial HbA1c must be positive")
    return (h0 - ht) / h0


def hba1c_records(source) -> list[Hba1cRecord]:
    """One record per follow-up measurement, paired with the patient's baseline."""
    data: RunData = load_run(source)
    baseline = {o.patient_id: o for o in data.hba1c if o.baseline}
    out = []
    for obs in data.hba1c:
        if obs.baseline or obs.patient_id not in baseline:
            continue
        base = baseline[obs.patient_id]
        profile = data.profiles[obs.patient_id]
        out.append(
            Hba1cRecord(
                obs.patient_id,
                base.value - obs.value,
                obs.day - base.day,
                base.value,
                profile.weekly_goal,
                profile.arm == Arm.PERSONALIZED,
            )
        )
    return out


def hba1c_model(records: Sequence[Hba1cRecord]) -> Hba1cModel:
    """Unpenalized least squares of the reduction on the covariates, with the overall F test."""
    p = len(HBA1C_COLUMNS) - 1
    if len(records) < p + 2:
        raise AnalysisError(f"need at least {p + 2} records, got {len(records)}")
    X = np.array(
        [[1.0, r.days, r.initial, r.target, float(r.personalized)] for r in records]
    )
    y = np.array([r.reduction for r in records])
    try:
        model = fit(X, y, 0.0, manifest=HBA1C_COLUMNS)
    except SingularDesignError as exc:
        raise AnalysisError(f"HbA1c design is singular ({exc})") from None
    n = len(records)
    r2 = float(model.r2)
    dof = n - p - 1
    if r2 >= 1.0:
        f_stat, p_value = float("inf"), 0.0
    else:
        f_stat = (r2 / p) / ((1.0 - r2) / dof)
        p_value = f_sf(f_stat, p, dof)
    return Hba1cModel(
        HBA1C_COLUMNS,
        tuple(float(c) for c in model.coefficients),
        r2,
        f_stat,
        p_value,
        n,
    )


def arm_trend(points: Sequence[tuple[float, float]]) -> LineFit:
    """Plain line through (days, relative reduction) points of one arm."""
    if len(points) < 2:
        raise AnalysisError("need at least two points for a trend")
    days, values = zip(*points)
    return line_fit(days, values)


def arm_points(source, arm: Optional[Arm] = None) -> list[tuple[float, float]]:
    data = load_run(source)
    want = None if arm is None else (arm == Arm.PERSONALIZED)
    return [
        (float(r.days), relative_reduction(r.initial, r.initial - r.reduction))
        for r in hba1c_records(data)
        if want is None or r.personalized == want
    ]


__all__ = [
    "HBA1C_COLUMNS",
    "Hba1cModel",
    "Hba1cRecord",
    "arm_points",
    "arm_trend",
    "hba1c_model",
    "hba1c_records",
    "relative_reduction",
]
