"""Small statistics kernel: regularized incomplete beta, F tail, one-way ANOVA, line fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import CoachError


class AnalysisError(CoachError):
    pass


_EPS = 1e-16
_TINY = 1e-300


def _beta_cf(a: float, b: float, x: float, max_iter: int = 500) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        step = d * c
        h *= step
        if abs(step - 1.0) < _EPS:
            return h
    raise AnalysisError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise AnalysisError("betainc needs a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise AnalysisError("betainc needs 0 <= x <= 1")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail ``P(F > f)`` of the F distribution."""
    if df1 <= 0 or df2 <= 0:
        raise AnalysisError("degrees of freedom must be positive")
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


@dataclass(frozen=True)
class AnovaResult:
    f: float
    p: float
    df_between: int
    df_within: int


def one_way_anova(groups: Sequence[Sequence[float]]) -> AnovaResult:
    if len(groups) < 2:
        raise AnalysisError("one-way ANOVA needs at least two groups")
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if any(a.size < 2 for a in arrays):
        raise AnalysisError("every ANOVA group needs at least two observations")
    n = sum(a.size for a in arrays)
    k = len(arrays)
    grand = np.concatenate(arrays).mean()
    ss_between = float(sum(a.size * (a.mean() - grand) ** 2 for a in arrays))
    ss_within = float(sum(((a - a.mean()) ** 2).sum() for a in arrays))
    df_b, df_w = k - 1, n - k
    if ss_within == 0.0:
        if ss_between == 0.0:
            raise AnalysisError("all observations are identical; F is undefined")
        return AnovaResult(math.inf, 0.0, df_b, df_w)
    f = (ss_between / df_b) / (ss_within / df_w)
    return AnovaResult(f, f_sf(f, df_b, df_w), df_b, df_w)


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r2: float
    n_points: int


def line_fit(x: Sequence[float], y: Sequence[float]) -> LineFit:
    """Ordinary least-squares line. ``r2`` is 1 for an exact fit, 0 when ``y`` is flat."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise AnalysisError("x and y differ in length")
    if x.size < 2:
        raise AnalysisError("a line needs at least two points")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise AnalysisError("x values are all equal")
    yc = y - y.mean()
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean() - slope * x.mean())
    syy = float(yc @ yc)
    if syy == 0.0:
        # flat series: nothing to explain, so it carries no weight
        r2 = 0.0
    else:
        resid = yc - slope * xc
        r2 = max(0.0, 1.0 - float(resid @ resid) / syy)
    return LineFit(slope, intercept, min(r2, 1.0), int(x.size))
