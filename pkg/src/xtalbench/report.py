"""Aggregate report tables from scored runs.

Emits CSV and aligned plain-text variants of: per-material/radius error
tables (one per protocol shape), the transfer-degradation table, the
error-error correlation-shift tables in both directions, the compliance /
hallucination table and a rotation-consistency table.  All numbers are
written with fixed precision so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path

from .lattice import radius_label
from .metrics import (
    group_stats,
    correlation_shift,
    per_example_mean,
    prediction_consistency,
    transfer_report,
)
from .protocols import AggregateError
from .runner import ScoreRow

SE_TABLE_COLUMNS = ("n_atoms", "cell_volume", "a", "b", "c", "density")
CE_TABLE_COLUMNS = ("n_atoms", "a_p", "b_p", "c_p")
CE_ANGLE_COLUMNS = ("alpha_p", "beta_p", "gamma_p")


class ReportError(Exception):
    """Refusal to mix incompatible runs in one report."""


def _fmt(value: float | None, spec: str = ".2f") -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    if value == math.inf:
        return "inf"
    return format(value, spec)


def _write_table(path_base: Path, header: list[str], rows: list[list[str]],
                 title: str) -> None:
    with open(path_base.with_suffix(".csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    widths = [
        max(len(str(cell)) for cell in column)
        for column in zip(header, *rows)
    ] if rows else [len(h) for h in header]
    with open(path_base.with_suffix(".txt"), "w", encoding="utf-8") as fh:
        fh.write(title + "\n")
        fh.write("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
        for row in rows:
            fh.write(
                "  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() + "\n"
            )


def _mean_by_group(scores: list[ScoreRow], getter) -> dict:
    sums: dict = defaultdict(list)
    for score in scores:
        for key, value in getter(score):
            sums[key].append(value)
    return {key: sum(vals) / len(vals) for key, vals in sums.items()}


def error_table(scores: list[ScoreRow], out_base: Path) -> None:
    """Per-material x radius mean errors in the protocol's table shape."""
    protocol = scores[0].protocol
    columns = SE_TABLE_COLUMNS if protocol == "SE" else CE_TABLE_COLUMNS
    angle_columns = () if protocol == "SE" else CE_ANGLE_COLUMNS

    cells = _mean_by_group(
        scores,
        lambda s: (
            [((s.material, s.radius_nm, prop), err)
             for prop, err in s.percent_errors.items() if prop in columns]
            + [((s.material, s.radius_nm, f"abs_{prop}"), err)
               for prop, err in s.angle_errors.items() if prop in angle_columns]
        ),
    )
    materials = sorted({s.material for s in scores})
    radii = sorted({s.radius_nm for s in scores})
    header = ["material"]
    for radius in radii:
        label = radius_label(radius)
        header += [f"{label}:%d_{c}" for c in columns]
        header += [f"{label}:|d_{c}|" for c in angle_columns]
    rows = []
    for material in materials:
        row = [material]
        for radius in radii:
            for prop in columns:
                row.append(_fmt(cells.get((material, radius, prop))))
            for prop in angle_columns:
                row.append(_fmt(cells.get((material, radius, f"abs_{prop}"))))
        rows.append(row)
    _write_table(
        out_base, header, rows,
        f"Mean percent errors per material and radius ({protocol} protocol)",
    )


def transfer_table(
    se_scores: list[ScoreRow], se_agg: AggregateError,
    ce_scores: list[ScoreRow], ce_agg: AggregateError,
    out_base: Path, endpoint: str,
) -> None:
    all_percent_errors = [
        err
        for score in se_scores + ce_scores
        for err in score.percent_errors.values()
    ]
    report = transfer_report(se_agg.error, ce_agg.error, all_percent_errors)
    t_se = sum(s.latency_s for s in se_scores) / len(se_scores)
    t_ce = sum(s.latency_s for s in ce_scores) / len(ce_scores)
    header = ["model", "SE", "CE", "T", "G_max", "t_SE", "t_CE",
              "fail_SE", "fail_CE"]
    rows = [[
        endpoint,
        _fmt(report.se_error),
        _fmt(report.ce_error),
        _fmt(report.transfer_ratio) if not report.diverged else "inf",
        _fmt(report.g_max),
        _fmt(t_se),
        _fmt(t_ce),
        _fmt(se_agg.failure_rate),
        _fmt(ce_agg.failure_rate),
    ]]
    _write_table(out_base, header, rows, "Transfer degradation (T = CE/SE)")


def _error_rows(scores: list[ScoreRow]) -> list[dict[str, float]]:
    rows = []
    for score in scores:
        row = dict(score.percent_errors)
        row.update({f"abs_{k}": v for k, v in score.angle_errors.items()})
        if score.percent_errors:
            row["mean_error"] = per_example_mean(score.percent_errors)
        rows.append(row)
    return rows


def correlation_tables(
    se_scores: list[ScoreRow], ce_scores: list[ScoreRow], out_base: Path,
    top: int = 14,
) -> None:
    se_rows = _error_rows(se_scores)
    ce_rows = _error_rows(ce_scores)
    forward, notes = correlation_shift(se_rows, ce_rows, top=top)
    reverse, _ = correlation_shift(ce_rows, se_rows, top=top)

    header = ["direction", "pair", "rho_source", "rho_target", "delta"]
    rows = []
    for direction, shifts in (("SE->CE", forward), ("CE->SE", reverse)):
        for shift in shifts:
            rows.append([
                direction,
                f"{shift.pair[0]}<->{shift.pair[1]}",
                _fmt(shift.rho_source, "+.4f"),
                _fmt(shift.rho_target, "+.4f"),
                _fmt(shift.delta, "+.4f"),
            ])
    _write_table(
        out_base, header, rows,
        f"Largest error-error correlation shifts (top {top} pairs, alphabetical)",
    )
    if notes:
        with open(out_base.with_suffix(".notes.txt"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(notes) + "\n")


def compliance_table(scores: list[ScoreRow], out_base: Path) -> None:
    """Mean +/- std physics compliance and hallucination per material."""
    by_material: dict[str, tuple[list[float], list[float]]] = defaultdict(
        lambda: ([], [])
    )
    for score in scores:
        by_material[score.material][0].append(score.s_phys)
        by_material[score.material][1].append(score.s_hall)
    header = ["material", "compliance_mean", "compliance_std",
              "hallucination_mean", "hallucination_std"]
    rows = []
    for material in sorted(by_material):
        phys, hall = by_material[material]
        phys_stats = group_stats(phys)
        hall_stats = group_stats(hall)
        rows.append([
            material,
            _fmt(phys_stats.mean),
            _fmt(phys_stats.std if phys_stats.std is not None else None),
            _fmt(hall_stats.mean),
            _fmt(hall_stats.std if hall_stats.std is not None else None),
        ])
    _write_table(
        out_base, header, rows,
        "Physical-law compliance and hallucination score per material",
    )


def consistency_table(scores: list[ScoreRow], out_base: Path) -> None:
    """Rotation consistency per (material, radius) from per-pose losses."""
    groups: dict[tuple[str, float], list[float]] = defaultdict(list)
    for score in scores:
        if score.loss is not None:
            groups[(score.material, score.radius_nm)].append(score.loss)
    header = ["material", "radius", "c_pred", "n_poses"]
    rows = []
    for material, radius in sorted(groups):
        losses = groups[(material, radius)]
        rows.append([
            material,
            radius_label(radius),
            _fmt(prediction_consistency(losses), ".4f"),
            str(len(losses)),
        ])
    _write_table(out_base, header, rows, "Prediction consistency across rotations")


def build_report(
    out_dir: str | Path,
    endpoint: str,
    se: tuple[list[ScoreRow], AggregateError] | None = None,
    ce: tuple[list[ScoreRow], AggregateError] | None = None,
) -> list[Path]:
    """Write every table supported by the provided runs; returns paths."""
    if se is None and ce is None:
        raise ReportError("need at least one scored run")
    for scores, _ in filter(None, (se, ce)):
        endpoints = {s.endpoint for s in scores}
        if endpoints != {endpoint}:
            raise ReportError(
                f"scores mix endpoints {sorted(endpoints)}; expected {endpoint}"
            )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    if se is not None:
        error_table(se[0], out_dir / "errors_se")
        consistency_table(se[0], out_dir / "consistency_se")
        written += [out_dir / "errors_se.csv", out_dir / "consistency_se.csv"]
    if ce is not None:
        error_table(ce[0], out_dir / "errors_ce")
        consistency_table(ce[0], out_dir / "consistency_ce")
        written += [out_dir / "errors_ce.csv", out_dir / "consistency_ce.csv"]
    if se is not None and ce is not None:
        transfer_table(se[0], se[1], ce[0], ce[1], out_dir / "transfer", endpoint)
        correlation_tables(se[0], ce[0], out_dir / "correlation_shift")
        written += [out_dir / "transfer.csv", out_dir / "correlation_shift.csv"]

    both = (se[0] if se else []) + (ce[0] if ce else [])
    compliance_table(both, out_dir / "compliance_hallucination")
    written.append(out_dir / "compliance_hallucination.csv")
    return written
