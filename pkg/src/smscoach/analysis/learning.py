"""Model stability and predictiveness across the daily retrains."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..features import design_matrix
from ..regression import ModelState, adjusted_r2, stability
from .stats import AnalysisError


@dataclass(frozen=True)
class LearningPoint:
    day: Optional[int]
    n_rows: int
    stability: Optional[float]  # None for the first snapshot
    adjusted_r2: Optional[float]


def _pool_adjusted_r2(model: ModelState, contexts, actions, targets) -> Optional[float]:
    n = model.n_rows
    if n > len(targets):
        raise AnalysisError(f"snapshot trained on {n} rows but only {len(targets)} are available")
    X = design_matrix(np.asarray(contexts)[:n], np.asarray(actions)[:n], model.standardization)
    y = np.asarray(targets, dtype=float)[:n]
    resid = y - model.predict(X)
    tss = float(((y - y.mean()) ** 2).sum())
    if not tss > 0 or n <= X.shape[1]:
        return None
    return adjusted_r2(float(resid @ resid), tss, n, X.shape[1] - 1)


def learning_curve(
    snapshots: Sequence[ModelState],
    rows: Optional[tuple[Sequence, Sequence[int], Sequence[float]]] = None,
) -> list[LearningPoint]:
    """Stability between consecutive snapshots and each snapshot's adjusted R2.

    Without ``rows`` the adjusted R2 stored with the snapshot is used. With
    ``rows = (contexts, actions, targets)`` in training order it is recomputed
    on the first ``n_rows`` rows, i.e. the pool the snapshot was fitted on.
    """
    if len(snapshots) < 2:
        raise AnalysisError("a learning curve needs at least two snapshots")
    out = []
    prev = None
    for snap in snapshots:
        stab = None if prev is None else stability(prev, snap)
        adj = snap.adjusted_r2 if rows is None else _pool_adjusted_r2(snap, *rows)
        out.append(LearningPoint(snap.day, snap.n_rows, stab, adj))
        prev = snap
    return out


def lognormal_ratio_variance(sd: float) -> float:
    """Variance of ``exp(a - b)`` for independent ``a, b ~ N(-sd^2/2, sd^2)``.

    This is the day-over-day reward spread that multiplicative daily noise of
    log-sd ``sd`` produces on its own.
    """
    s2 = sd * sd
    return math.exp(4 * s2) - math.exp(2 * s2)


def noise_ceiling(reward_variance: float, noise_variance: float) -> float:
    """Largest R2 any model can reach when ``noise_variance`` of the rewards is unexplainable."""
    if not reward_variance > 0:
        raise AnalysisError("reward variance must be positive")
    return min(1.0, max(0.0, 1.0 - noise_variance / reward_variance))


def tracks_ceiling(values: Sequence[float], ceiling: float, tolerance: float = 0.05) -> bool:
    """Nondecreasing within ``tolerance``, where reaching ``ceiling`` counts as done.

    Every value must stay within ``tolerance`` of ``min(best so far, ceiling)``.
    """
    best = -math.inf
    for v in values:
        if v < min(best, ceiling) - tolerance:
            return False
        best = max(best, v)
    return True


def quartile_means(values: Sequence[float]) -> tuple[float, float]:
    """Means of the first and the last quarter of a series."""
    if len(values) < 4:
        raise AnalysisError("need at least four values for quartiles")
    q = len(values) // 4
    return float(np.mean(values[:q])), float(np.mean(values[-q:]))


__all__ = [
    "LearningPoint",
    "learning_curve",
    "lognormal_ratio_variance",
    "noise_ceiling",
    "quartile_means",
    "tracks_ceiling",
]
