"""Per-message effect tables, the previous/current pair grid and response vectors."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import DAILY_ACTIONS, MessageKind
from .dataset import RunData, load_run, require
from .stats import AnovaResult, one_way_anova

PHASES = ("initial", "learned")


@dataclass(frozen=True)
class EffectTable:
    phase: str
    means: dict[MessageKind, Optional[float]]
    counts: dict[MessageKind, int]
    weights: dict[MessageKind, float]
    weighted_total: float

    def rows(self) -> list[dict]:
        out = [
            {
                "phase": self.phase,
                "message": k.value,
                "n": self.counts[k],
                "weight": self.weights[k],
                "mean_change": self.means[k],
            }
            for k in DAILY_ACTIONS
        ]
        out.append(
            {
                "phase": self.phase,
                "message": "weighted_total",
                "n": sum(self.counts.values()),
                "weight": 1.0,
                "mean_change": self.weighted_total,
            }
        )
        return out


def message_effect_table(source, phase: str) -> EffectTable:
    """Mean reward after each daily message within one policy phase.

    The weighted total uses each message's empirical frequency in the phase,
    which makes it the grand mean of the phase's rewards.
    """
    require(phase in PHASES, f"unknown policy phase {phase!r}")
    data = load_run(source)
    groups: dict[MessageKind, list[float]] = {k: [] for k in DAILY_ACTIONS}
    for r in data.rewards:
        if r.mode == phase:
            groups[r.action].append(r.reward)
    n = sum(len(v) for v in groups.values())
    require(n > 0, f"no rewards recorded in the {phase} phase")
    means = {k: (float(np.mean(v)) if v else None) for k, v in groups.items()}
    counts = {k: len(v) for k, v in groups.items()}
    weights = {k: counts[k] / n for k in DAILY_ACTIONS}
    total = sum(weights[k] * means[k] for k in DAILY_ACTIONS if means[k] is not None)
    return EffectTable(phase, means, counts, weights, float(total))


def phase_anova(source) -> AnovaResult:
    """One-way F-test of rewards between the initial and learned phases."""
    data = load_run(source)
    groups = [[r.reward for r in data.rewards if r.mode == ph] for ph in PHASES]
    return one_way_anova(groups)


@dataclass(frozen=True)
class PairGrid:
    means: list[list[Optional[float]]]  # [previous][current]
    counts: list[list[int]]

    def cell(self, previous: MessageKind, current: MessageKind) -> Optional[float]:
        return self.means[DAILY_ACTIONS.index(previous)][DAILY_ACTIONS.index(current)]

    def rows(self) -> list[dict]:
        return [
            {
                "previous": p.value,
                "current": c.value,
                "n": self.counts[i][j],
                "mean_change": self.means[i][j],
            }
            for i, p in enumerate(DAILY_ACTIONS)
            for j, c in enumerate(DAILY_ACTIONS)
        ]


def pair_effect_grid(source) -> PairGrid:
    """Mean reward of message ``c`` on day ``t`` when message ``p`` went out on ``t - 1``.

    Both phases are pooled. Cells without observations stay ``None``.
    """
    data = load_run(source)
    k = len(DAILY_ACTIONS)
    sums = [[0.0] * k for _ in range(k)]
    counts = [[0] * k for _ in range(k)]
    for r in data.rewards:
        prev = data.decisions.get((r.patient_id, r.day - 1))
        if prev is None:
            continue
        i, j = DAILY_ACTIONS.index(prev), DAILY_ACTIONS.index(r.action)
        sums[i][j] += r.reward
        counts[i][j] += 1
    means = [
        [sums[i][j] / counts[i][j] if counts[i][j] else None for j in range(k)] for i in range(k)
    ]
    return PairGrid(means, counts)


def repeat_contrast(grid: PairGrid, kind: MessageKind) -> Optional[tuple[float, float]]:
    """``(repeated cell, mean of the other-previous cells)`` for one current message."""
    j = DAILY_ACTIONS.index(kind)
    repeated = grid.means[j][j]
    others = [grid.means[i][j] for i in range(len(DAILY_ACTIONS)) if i != j and grid.means[i][j] is not None]
    if repeated is None or not others:
        return None
    return repeated, float(np.mean(others))


@dataclass(frozen=True)
class ResponseVector:
    patient_id: str
    mean_change: tuple[Optional[float], ...]
    counts: tuple[int, ...]

    @property
    def complete(self) -> bool:
        return all(c > 0 for c in self.counts)


def response_vectors(source, patient_ids: Optional[Sequence[str]] = None) -> list[ResponseVector]:
    """Average reward after each daily message, per patient, over the whole run."""
    data: RunData = load_run(source)
    ids = list(patient_ids) if patient_ids is not None else data.personalized
    acc: dict[str, dict[MessageKind, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in data.rewards:
        acc[r.patient_id][r.action].append(r.reward)
    out = []
    for pid in ids:
        groups = acc.get(pid, {})
        means = tuple(float(np.mean(groups[k])) if groups.get(k) else None for k in DAILY_ACTIONS)
        counts = tuple(len(groups.get(k, ())) for k in DAILY_ACTIONS)
        out.append(ResponseVector(pid, means, counts))
    return out


__all__ = [
    "EffectTable",
    "PHASES",
    "PairGrid",
    "ResponseVector",
    "message_effect_table",
    "pair_effect_grid",
    "phase_anova",
    "repeat_contrast",
    "response_vectors",
]
