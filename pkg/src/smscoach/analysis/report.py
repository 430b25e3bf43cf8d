"""CSV tables, a JSON summary and a markdown report for one run."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Callable, Optional, Union

from ..core import DAILY_ACTIONS, Arm, MessageKind
from .clustering import best_permutation, cluster_patients, sign_pattern
from .dataset import RunData, load_run
from .effects import PHASES, message_effect_table, pair_effect_grid, phase_anova, repeat_contrast, response_vectors
from .glycemic import arm_points, arm_trend, hba1c_model, hba1c_records
from .learning import learning_curve
from .slopes import activity_slopes, cadence_slopes, summarize
from .stats import AnalysisError

log = logging.getLogger(__name__)

# shorter segments give wild slopes that the r2 weighting does not tame
SLOPE_MIN_DAYS = 28
CLUSTER_K = 3
CLUSTER_RESTARTS = 10
CLUSTER_SEED = 0

SECTIONS = ("table", "pairs", "clusters", "slopes", "learning", "hba1c")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(rows: list[dict], columns: Optional[list[str]] = None) -> str:
    columns = columns or (list(rows[0]) if rows else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


class _Out:
    def __init__(self, out_dir: Optional[Path]):
        self.dir = out_dir
        self.files: list[Path] = []

    def table(self, name: str, rows: list[dict], columns: Optional[list[str]] = None) -> None:
        if self.dir is None:
            return
        path = self.dir / name
        path.write_text(csv_text(rows, columns), encoding="utf-8", newline="\n")
        self.files.append(path)


def _table(data: RunData, out: _Out) -> dict:
    rows, summary = [], {}
    for phase in PHASES:
        try:
            t = message_effect_table(data, phase)
        except AnalysisError as exc:
            summary[phase] = {"notice": str(exc)}
            continue
        rows.extend(t.rows())
        summary[phase] = {k.value: t.means[k] for k in DAILY_ACTIONS} | {"weighted_total": t.weighted_total}
    if not rows:
        raise AnalysisError("no rewards in either policy phase")
    out.table("message_effects.csv", rows, ["phase", "message", "n", "weight", "mean_change"])
    try:
        a = phase_anova(data)
        summary["anova"] = {"f": a.f, "p_value": a.p, "df_between": a.df_between, "df_within": a.df_within}
    except AnalysisError as exc:
        summary["anova"] = {"notice": str(exc)}
    return summary


def _pairs(data: RunData, out: _Out) -> dict:
    grid = pair_effect_grid(data)
    out.table("pair_grid.csv", grid.rows(), ["previous", "current", "n", "mean_change"])
    contrast = repeat_contrast(grid, MessageKind.POSITIVE_SOCIAL)
    return {
        "repeat_positive_social": None if contrast is None else contrast[0],
        "other_then_positive_social": None if contrast is None else contrast[1],
    }


def _clusters(data: RunData, out: _Out) -> dict:
    vectors = response_vectors(data)
    out.table(
        "response_vectors.csv",
        [
            {"patient_id": v.patient_id, "complete": v.complete}
            | {f"{k.value}": m for k, m in zip(DAILY_ACTIONS, v.mean_change)}
            | {f"n_{k.value}": c for k, c in zip(DAILY_ACTIONS, v.counts)}
            for v in vectors
        ],
    )
    result = cluster_patients(vectors, CLUSTER_K, CLUSTER_RESTARTS, CLUSTER_SEED)
    out.table("cluster_means.csv", result.mean_rows())
    out.table("cluster_demographics.csv", result.demographics(data.profiles))
    truth = [data.archetypes.get(p) for p in result.patient_ids]
    assign = [
        {"patient_id": p, "cluster": lab, "archetype": data.archetypes.get(p)}
        for p, lab in zip(result.patient_ids, result.labels)
    ]
    out.table("cluster_assignments.csv", assign, ["patient_id", "cluster", "archetype"])
    summary = {
        "sizes": result.sizes,
        "excluded": list(result.excluded),
        "sign_patterns": [list(sign_pattern(c)) for c in result.centers],
    }
    if all(t is not None for t in truth):
        acc, mapping = best_permutation(list(result.labels), truth)
        summary["archetype_accuracy"] = acc
        summary["cluster_archetypes"] = {str(j): name for j, name in mapping.items()}
    return summary


def _slopes(data: RunData, out: _Out) -> dict:
    act = activity_slopes(data, SLOPE_MIN_DAYS)
    cad = cadence_slopes(data)
    rows = [
        {"measure": measure, "group": s.group, "patient_id": s.patient_id, "slope": s.slope, "r2": s.r2, "n_points": s.n_points}
        for measure, groups in (("activity_fraction", act), ("cadence", cad))
        for slopes in groups.values()
        for s in slopes
    ]
    out.table("slopes.csv", rows, ["measure", "group", "patient_id", "slope", "r2", "n_points"])
    summary = {"activity_fraction": summarize(act), "cadence": summarize(cad), "weighting": "r2", "min_days": SLOPE_MIN_DAYS}
    out.table(
        "slope_summary.csv",
        [
            {"measure": m, "group": g, "weighted_slope": v}
            for m in ("activity_fraction", "cadence")
            for g, v in summary[m].items()
        ],
        ["measure", "group", "weighted_slope"],
    )
    return summary


def _learning(data: RunData, out: _Out) -> dict:
    points = learning_curve(data.snapshots)
    out.table(
        "learning_curve.csv",
        [{"day": p.day, "n_rows": p.n_rows, "stability": p.stability, "adjusted_r2": p.adjusted_r2} for p in points],
        ["day", "n_rows", "stability", "adjusted_r2"],
    )
    return {
        "snapshots": len(points),
        "first_adjusted_r2": points[0].adjusted_r2,
        "last_adjusted_r2": points[-1].adjusted_r2,
    }


def _hba1c(data: RunData, out: _Out) -> dict:
    records = hba1c_records(data)
    out.table(
        "hba1c_records.csv",
        [
            {"patient_id": r.patient_id, "days": r.days, "initial": r.initial, "reduction": r.reduction,
             "target": r.target, "personalized": r.personalized}
            for r in records
        ],
        ["patient_id", "days", "initial", "reduction", "target", "personalized"],
    )
    model = hba1c_model(records)
    out.table(
        "hba1c_model.csv",
        [{"term": c, "coefficient": v} for c, v in zip(model.columns, model.coefficients)],
        ["term", "coefficient"],
    )
    summary = {
        "coefficients": dict(zip(model.columns, model.coefficients)),
        "r2": model.r2,
        "f": model.f_statistic,
        "p_value": model.p_value,
        "n": model.n,
    }
    for arm in (Arm.PERSONALIZED, Arm.CONTROL):
        try:
            t = arm_trend(arm_points(data, arm))
            summary[f"trend_{arm.value}"] = {"slope": t.slope, "r2": t.r2}
        except AnalysisError as exc:
            summary[f"trend_{arm.value}"] = {"notice": str(exc)}
    return summary


_RUNNERS: dict[str, Callable[[RunData, _Out], dict]] = {
    "table": _table,
    "pairs": _pairs,
    "clusters": _clusters,
    "slopes": _slopes,
    "learning": _learning,
    "hba1c": _hba1c,
}


def analyze(
    source: Union[RunData, str, Path],
    out_dir: Optional[Union[str, Path]] = None,
    which: str = "all",
) -> tuple[dict, list[Path]]:
    """Run one section (or ``all``) and write its CSVs plus ``summary.json``.

    A single requested section that cannot be computed raises
    :class:`AnalysisError`; under ``all`` such sections are reported as notices.
    """
    if which != "all" and which not in _RUNNERS:
        raise AnalysisError(f"unknown analysis {which!r}; choose from {', '.join(SECTIONS)} or all")
    data = load_run(source)
    out = _Out(Path(out_dir) if out_dir is not None else None)
    if out.dir is not None:
        out.dir.mkdir(parents=True, exist_ok=True)
    summary: dict = {"seed": data.manifest.get("seed"), "config_hash": data.manifest.get("config_hash")}
    for name in SECTIONS if which == "all" else (which,):
        try:
            summary[name] = _RUNNERS[name](data, out)
        except AnalysisError as exc:
            if which != "all":
                raise
            log.warning("%s skipped: %s", name, exc)
            summary[name] = {"notice": str(exc)}
    if out.dir is not None:
        path = out.dir / "summary.json"
        path.write_text(json.dumps(_finite(summary), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
        out.files.append(path)
    return summary, out.files


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _fmt(v, digits: int = 4) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.{digits}g}"
    return str(v)


def report_markdown(source) -> str:
    """Markdown summary of every analysis section."""
    data = load_run(source)
    s, _ = analyze(data)
    lines = [
        f"# Run report (seed {s['seed']})",
        "",
        f"- patients: {len(data.profiles)} ({len(data.personalized)} personalized, {len(data.control)} control)",
        f"- days: {data.end_day}; policy switch day: {_fmt(data.switch_day)}",
        f"- training rows: {len(data.rewards)}; model snapshots: {len(data.snapshots)}",
        "",
        "## Change in activity after each message",
        "",
    ]
    tab = s["table"]
    if "notice" in tab:
        lines.append(f"_{tab['notice']}_")
    else:
        lines += ["| phase | " + " | ".join(k.value for k in DAILY_ACTIONS) + " | weighted |",
                  "|---" * (len(DAILY_ACTIONS) + 2) + "|"]
        for phase in PHASES:
            row = tab.get(phase, {})
            if "notice" in row:
                lines.append(f"| {phase} | " + " | ".join("n/a" for _ in DAILY_ACTIONS) + " | n/a |")
                continue
            lines.append(
                f"| {phase} | " + " | ".join(_fmt(row[k.value]) for k in DAILY_ACTIONS) + f" | {_fmt(row['weighted_total'])} |"
            )
        an = tab.get("anova", {})
        if "p_value" in an:
            lines += ["", f"Phase ANOVA: F = {_fmt(an['f'])}, p = {_fmt(an['p_value'])}"]

    pairs = s["pairs"]
    lines += ["", "## Repeated messages", ""]
    if "notice" in pairs:
        lines.append(f"_{pairs['notice']}_")
    else:
        lines.append(
            f"positive_social after positive_social: {_fmt(pairs['repeat_positive_social'])}; "
            f"after any other message: {_fmt(pairs['other_then_positive_social'])}"
        )

    cl = s["clusters"]
    lines += ["", "## Response clusters", ""]
    if "notice" in cl:
        lines.append(f"_{cl['notice']}_")
    else:
        lines.append(f"sizes {cl['sizes']}, excluded {len(cl['excluded'])}")
        for j, pat in enumerate(cl["sign_patterns"]):
            name = cl.get("cluster_archetypes", {}).get(str(j))
            lines.append(f"- cluster {j}: sign pattern {tuple(pat)}" + (f" ({name})" if name else ""))
        if "archetype_accuracy" in cl:
            lines.append(f"- archetype recovery accuracy: {_fmt(cl['archetype_accuracy'])}")

    sl = s["slopes"]
    lines += ["", "## Slopes (r2-weighted, per day)", ""]
    if "notice" in sl:
        lines.append(f"_{sl['notice']}_")
    else:
        for measure in ("activity_fraction", "cadence"):
            parts = ", ".join(f"{g} {_fmt(v)}" for g, v in sl[measure].items())
            lines.append(f"- {measure}: {parts}")

    lc = s["learning"]
    lines += ["", "## Learning curve", ""]
    if "notice" in lc:
        lines.append(f"_{lc['notice']}_")
    else:
        lines.append(
            f"{lc['snapshots']} snapshots; adjusted R2 from {_fmt(lc['first_adjusted_r2'])} to {_fmt(lc['last_adjusted_r2'])}"
        )

    hb = s["hba1c"]
    lines += ["", "## HbA1c", ""]
    if "notice" in hb:
        lines.append(f"_{hb['notice']}_")
    else:
        coef = ", ".join(f"{k} {_fmt(v)}" for k, v in hb["coefficients"].items())
        lines.append(f"reduction model (n = {hb['n']}): {coef}; R2 {_fmt(hb['r2'])}, p {_fmt(hb['p_value'])}")
    return "\n".join(lines) + "\n"


__all__ = ["SECTIONS", "SLOPE_MIN_DAYS", "analyze", "csv_text", "report_markdown"]
