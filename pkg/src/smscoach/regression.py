"""Ridge-regularized least squares, adjusted R-squared and coefficient stability."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .core import CoachError
from .features import Standardization

DEFAULT_RIDGE = 1e-6
SNAPSHOT_VERSION = 1


class SingularDesignError(CoachError):
    pass


class ManifestMismatchError(CoachError):
    pass


class UndefinedStatisticError(CoachError):
    pass


@dataclass(frozen=True)
class ModelState:
    coefficients: np.ndarray
    manifest: tuple[str, ...]
    standardization: Optional[Standardization]
    ridge_lambda: float
    n_rows: int
    adjusted_r2: Optional[float]
    r2: Optional[float] = None
    fitted_on: Optional[date] = None
    day: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if len(self.coefficients) != len(self.manifest):
            raise ManifestMismatchError("coefficient length differs from manifest length")
        if self.n_rows < 1:
            raise CoachError("a model needs at least one training row")

    def predict(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        if rows.shape[-1] != len(self.coefficients):
            raise ManifestMismatchError(
                f"row width {rows.shape[-1]} != model width {len(self.coefficients)}"
            )
        return rows @ self.coefficients

    def to_dict(self) -> dict:
        return {
            "version": SNAPSHOT_VERSION,
            "day": self.day,
            "fitted_on": self.fitted_on.isoformat() if self.fitted_on else None,
            "n_rows": self.n_rows,
            "ridge_lambda": self.ridge_lambda,
            "adjusted_r2": self.adjusted_r2,
            "r2": self.r2,
            "manifest": list(self.manifest),
            "coefficients": [float(c) for c in self.coefficients],
            "standardization": (
                self.standardization.to_dict() if self.standardization else None
            ),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelState":
        if d.get("version") != SNAPSHOT_VERSION:
            raise CoachError(f"unsupported model snapshot version {d.get('version')!r}")
        std = d.get("standardization")
        return cls(
            coefficients=np.asarray(d["coefficients"], dtype=float),
            manifest=tuple(d["manifest"]),
            standardization=Standardization.from_dict(std) if std else None,
            ridge_lambda=float(d["ridge_lambda"]),
            n_rows=int(d["n_rows"]),
            adjusted_r2=d.get("adjusted_r2"),
            r2=d.get("r2"),
            fitted_on=date.fromisoformat(d["fitted_on"]) if d.get("fitted_on") else None,
            day=d.get("day"),
        )


def adjusted_r2(residual_ss: float, total_ss: float, n: int, p: int) -> float:
    """``1 - (rss / (n - p - 1)) / (tss / (n - 1))`` for ``p`` predictors."""
    if n <= p + 1:
        raise UndefinedStatisticError(f"adjusted R2 undefined for n={n}, p={p}")
    if not total_ss > 0:
        raise UndefinedStatisticError("adjusted R2 undefined for zero total variance")
    return 1.0 - (residual_ss / (n - p - 1)) / (total_ss / (n - 1))


def fit(
    X: np.ndarray,
    y: np.ndarray,
    ridge_lambda: float = DEFAULT_RIDGE,
    *,
    manifest: Optional[Sequence[str]] = None,
    standardization: Optional[Standardization] = None,
    fitted_on: Optional[date] = None,
    day: Optional[int] = None,
) -> ModelState:
    """Solve ``(X'X + lambda*D) b = X'y`` where ``D`` skips column 0 (the intercept).

    Parameters
    ----------
    X : (n, p) array
        Design matrix whose first column is the intercept.
    y : (n,) array
        Targets.
    ridge_lambda : float
        Penalty on every non-intercept coefficient. With ``0`` a rank-deficient
        design raises :class:`SingularDesignError`.

    Returns
    -------
    ModelState
        Coefficients plus in-sample R2 and adjusted R2 (``None`` when the
        adjusted statistic is undefined, i.e. ``n <= p``).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise CoachError("fit needs at least one row")
    if y.shape != (X.shape[0],):
        raise CoachError("target length differs from row count")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise CoachError("rows and targets must be finite")
    if ridge_lambda < 0:
        raise CoachError("ridge_lambda must be non-negative")
    n, k = X.shape
    if manifest is None:
        manifest = ["intercept"] + [f"x{i}" for i in range(1, k)]
    if len(manifest) != k:
        raise ManifestMismatchError("manifest length differs from column count")

    gram = X.T @ X
    if ridge_lambda > 0:
        idx = np.arange(1, k)
        gram[idx, idx] += ridge_lambda
    elif np.linalg.matrix_rank(X) < k:
        raise SingularDesignError("design is rank deficient; use ridge_lambda > 0")
    try:
        factor = linalg.cho_factor(gram, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise SingularDesignError(str(exc)) from None
    beta = linalg.cho_solve(factor, X.T @ y, check_finite=False)

    resid = y - X @ beta
    rss = float(resid @ resid)
    centered = y - y.mean()
    tss = float(centered @ centered)
    if tss > 0:
        r2 = 1.0 - rss / tss
        try:
            adj = adjusted_r2(rss, tss, n, k - 1)
        except UndefinedStatisticError:
            adj = None
    else:
        # constant target: nothing to explain
        r2, adj = 0.0, 0.0
    return ModelState(
        coefficients=beta,
        manifest=tuple(manifest),
        standardization=standardization,
        ridge_lambda=float(ridge_lambda),
        n_rows=n,
        adjusted_r2=adj,
        r2=r2,
        fitted_on=fitted_on,
        day=day,
    )


def stability(model_prev: ModelState, model_curr: ModelState) -> float:
    """L1 distance between coefficient magnitudes of two consecutive models."""
    if tuple(model_prev.manifest) != tuple(model_curr.manifest):
        raise ManifestMismatchError("models were fitted on different column manifests")
    return float(
        np.sum(np.abs(np.abs(model_curr.coefficients) - np.abs(model_prev.coefficients)))
    )
