"""k-means with k-means++ seeding, restarts, and label-permutation scoring."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from ..core import DAILY_ACTIONS, Gender, PatientProfile
from .effects import ResponseVector
from .stats import AnalysisError


@dataclass(frozen=True)
class KMeansFit:
    labels: np.ndarray
    centers: np.ndarray
    wcss: float


def _plus_plus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [X[int(rng.integers(n))]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # every point already sits on a center
            centers.append(centers[-1])
            continue
        idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
        idx = min(idx, n - 1)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def kmeans(X: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300) -> KMeansFit:
    X = np.asarray(X, dtype=float)
    centers = _plus_plus(X, k, rng)
    labels = np.full(X.shape[0], -1)
    for _ in range(max_iter):
        dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = dist.argmin(axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = X[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    wcss = float(((X - centers[labels]) ** 2).sum())
    return KMeansFit(labels, centers, wcss)


def best_of(X: np.ndarray, k: int, restarts: int, seed: int) -> KMeansFit:
    """Lowest-WCSS fit over ``restarts`` seeded runs, with labels in a canonical order."""
    if restarts < 1:
        raise AnalysisError("restarts must be >= 1")
    X = np.asarray(X, dtype=float)
    if X.shape[0] < k:
        raise AnalysisError(f"need at least {k} vectors to form {k} clusters, got {X.shape[0]}")
    rng = np.random.default_rng(seed)
    best: Optional[KMeansFit] = None
    for _ in range(restarts):
        fit = kmeans(X, k, rng)
        if best is None or fit.wcss < best.wcss - 1e-12:
            best = fit
    return _canonical(best)


def _canonical(fit: KMeansFit) -> KMeansFit:
    # populated clusters first, ordered by center; makes labels independent of input order
    k = len(fit.centers)
    sizes = np.bincount(fit.labels, minlength=k)
    order = sorted(range(k), key=lambda j: (sizes[j] == 0, tuple(np.round(fit.centers[j], 12))))
    remap = np.empty(k, dtype=int)
    remap[order] = np.arange(k)
    return KMeansFit(remap[fit.labels], fit.centers[order], fit.wcss)


@dataclass(frozen=True)
class ClusterResult:
    patient_ids: tuple[str, ...]
    labels: tuple[int, ...]
    centers: np.ndarray
    wcss: float
    excluded: tuple[str, ...]

    @property
    def assignments(self) -> dict[str, int]:
        return dict(zip(self.patient_ids, self.labels))

    @property
    def sizes(self) -> list[int]:
        return [self.labels.count(j) for j in range(len(self.centers))]

    def mean_rows(self) -> list[dict]:
        rows = []
        for j, c in enumerate(self.centers):
            row = {"cluster": j, "n": self.sizes[j]}
            row.update({k.value: float(v) for k, v in zip(DAILY_ACTIONS, c)})
            rows.append(row)
        return rows

    def demographics(self, profiles: Mapping[str, PatientProfile]) -> list[dict]:
        rows = []
        for j in range(len(self.centers)):
            members = [profiles[p] for p, lab in zip(self.patient_ids, self.labels) if lab == j]
            if members:
                female = 100.0 * sum(m.gender == Gender.FEMALE for m in members) / len(members)
                age = float(np.mean([m.age for m in members]))
            else:
                female = age = None
            rows.append({"cluster": j, "n": len(members), "percent_female": female, "mean_age": age})
        return rows


def cluster_patients(
    vectors: Sequence[ResponseVector], k: int = 3, restarts: int = 10, seed: int = 0
) -> ClusterResult:
    """Cluster complete response vectors; incomplete ones are reported as excluded."""
    complete = [v for v in vectors if v.complete]
    excluded = tuple(v.patient_id for v in vectors if not v.complete)
    if len(complete) < k:
        raise AnalysisError(f"need at least {k} complete response vectors, got {len(complete)}")
    X = np.array([v.mean_change for v in complete], dtype=float)
    fit = best_of(X, k, restarts, seed)
    return ClusterResult(
        tuple(v.patient_id for v in complete),
        tuple(int(x) for x in fit.labels),
        fit.centers,
        fit.wcss,
        excluded,
    )


def best_permutation(labels: Sequence[int], truth: Sequence[str]) -> tuple[float, dict[int, str]]:
    """Accuracy under the best one-to-one map from cluster labels to true names."""
    if len(labels) != len(truth):
        raise AnalysisError("labels and truth differ in length")
    if not labels:
        raise AnalysisError("nothing to score")
    clusters = sorted(set(labels))
    names = sorted(set(truth))
    best_acc, best_map = -1.0, {}
    slots = names + [None] * max(0, len(clusters) - len(names))
    for perm in itertools.permutations(slots, len(clusters)):
        mapping = dict(zip(clusters, perm))
        acc = sum(mapping[l] == t for l, t in zip(labels, truth)) / len(labels)
        if acc > best_acc:
            best_acc, best_map = acc, mapping
    return best_acc, best_map


def sign_pattern(vector: Sequence[float], reference_index: int = 3) -> tuple[int, ...]:
    """Signs of each message's mean relative to the reference column (no message)."""
    ref = vector[reference_index]
    return tuple(int(np.sign(v - ref)) for i, v in enumerate(vector) if i != reference_index)


__all__ = [
    "ClusterResult",
    "KMeansFit",
    "best_of",
    "best_permutation",
    "cluster_patients",
    "kmeans",
    "sign_pattern",
]
