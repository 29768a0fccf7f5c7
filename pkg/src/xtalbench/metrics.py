"""Scoring functions for model predictions against reference records.

Covers percent errors, space-group matching, group statistics, rotation
consistency, tiered physics-compliance and hallucination scores, angle
absolute errors, per-example means, format faithfulness, transfer ratios and
error-error correlation shifts.  All functions are pure; tier boundaries are
inclusive exactly as documented (delta = 0.10 still scores 1.0, 0.25 still
scores 0.5).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields as dataclass_fields

from .annotation import AnnotationRecord, NUMERIC_FIELDS

# Properties entering the hallucination score.
HALLUCINATION_PROPERTIES = (
    "n_atoms",
    "cell_volume",
    "a",
    "b",
    "c",
    "density",
    "a_p",
    "b_p",
    "c_p",
)

ANGLE_PROPERTIES = ("alpha_p", "beta_p", "gamma_p")

# Per-example loss property sets, per protocol report shape.
SE_LOSS_PROPERTIES = ("n_atoms", "cell_volume", "a", "b", "c", "density")
CE_LOSS_PROPERTIES = ("n_atoms", "a_p", "b_p", "c_p")


class MetricError(Exception):
    """Undefined metric input (zero reference, empty list, ...)."""


@dataclass
class PredictionRecord:
    """Partially populated mirror of :class:`AnnotationRecord`.

    Every field is optional; ``parse_ok`` is False only when nothing could be
    extracted, in which case all fields are None.
    """

    n_atoms: float | None = None
    cell_volume: float | None = None
    a: float | None = None
    b: float | None = None
    c: float | None = None
    mean_nn_distance: float | None = None
    density: float | None = None
    a_p: float | None = None
    b_p: float | None = None
    c_p: float | None = None
    alpha_p: float | None = None
    beta_p: float | None = None
    gamma_p: float | None = None
    space_group: str | None = None
    description: str | None = None
    raw_response: str | None = None
    parse_ok: bool = False

    def get(self, name: str):
        return getattr(self, name)

    def non_null_fields(self) -> set[str]:
        schema = set(NUMERIC_FIELDS) | {"space_group", "description"}
        return {
            f.name
            for f in dataclass_fields(self)
            if f.name in schema and getattr(self, f.name) is not None
        }

    def as_dict(self) -> dict[str, object]:
        return {
            f.name: getattr(self, f.name)
            for f in dataclass_fields(self)
            if f.name != "raw_response"
        }


def percent_error(gen: float, ref: float) -> float:
    """100 |gen - ref| / |ref|; the reference must be nonzero."""
    if ref == 0:
        raise MetricError("percent error undefined for a zero reference")
    return 100.0 * abs(gen - ref) / abs(ref)


def normalize_space_group(symbol: str) -> str:
    """Canonical comparison form of a Hermann-Mauguin symbol.

    Strips whitespace and underscores and rewrites overline digits
    (combining-macron or combining-overline forms) as a leading hyphen.
    Letter case is preserved.
    """
    out: list[str] = []
    for ch in symbol:
        if ch.isspace() or ch == "_":
            continue
        if ch in ("̄", "̅"):  # combining macron / overline
            if out and out[-1].isdigit():
                out.insert(len(out) - 1, "-")
            continue
        out.append(ch)
    return "".join(out)


def _extract_sg_number(symbol: str) -> int | None:
    m = re.search(r"(?:no\.?|#)\s*(\d{1,3})", symbol, flags=re.IGNORECASE)
    if m:
        return int(m.group(1))
    return None


def space_group_match(gen: str | None, ref: str) -> int:
    """1 iff the normalized symbols (or the IT numbers, when both carry one)
    agree; an absent prediction scores 0."""
    if gen is None:
        return 0
    gen_n = _extract_sg_number(gen)
    ref_n = _extract_sg_number(ref)
    if gen_n is not None and ref_n is not None and gen_n == ref_n:
        return 1
    # Strip any parenthetical number before symbol comparison.
    gen_sym = re.sub(r"\((?:no\.?|#)?\s*\d{1,3}\)", "", gen, flags=re.IGNORECASE)
    return int(normalize_space_group(gen_sym) == normalize_space_group(ref))


@dataclass(frozen=True)
class GroupStats:
    n: int
    mean: float
    std: float | None          # sample std (n-1 divisor); None when n < 2
    ci95_half_width: float | None

    @property
    def ci95(self) -> tuple[float, float] | None:
        if self.ci95_half_width is None:
            return None
        return (self.mean - self.ci95_half_width, self.mean + self.ci95_half_width)


def group_stats(errors: list[float]) -> GroupStats:
    """Mean, sample standard deviation and 1.96-sigma/sqrt(n) CI half-width."""
    n = len(errors)
    if n == 0:
        raise MetricError("group statistics need at least one value")
    mean = sum(errors) / n
    if n < 2:
        return GroupStats(n=n, mean=mean, std=None, ci95_half_width=None)
    var = sum((e - mean) ** 2 for e in errors) / (n - 1)
    std = math.sqrt(var)
    return GroupStats(n=n, mean=mean, std=std, ci95_half_width=1.96 * std / math.sqrt(n))


def prediction_consistency(rotation_errors: list[float]) -> float:
    """1 - min(sigma/mu, 1) over a rotation-specific error set.

    A zero-mean error set is maximally consistent by convention (1.0).
    """
    stats = group_stats(rotation_errors)
    if stats.mean == 0:
        return 1.0
    std = stats.std if stats.std is not None else 0.0
    return 1.0 - min(std / stats.mean, 1.0)


def _tier_compliance(delta: float) -> float:
    if delta <= 0.10:
        return 1.0
    if delta <= 0.25:
        return 0.5
    return 0.0


def physics_compliance(pred: PredictionRecord | None, ref: AnnotationRecord) -> float:
    """Tiered adherence over density and the four lattice-edge ratios.

    Each evaluable property scores 1.0 / 0.5 / 0.0 by relative deviation
    (boundaries at 0.10 and 0.25, inclusive); a ratio whose generated
    denominator is zero counts as an error (0.0).  Missing or unparsed
    records score 0.0 outright.
    """
    if pred is None or not pred.parse_ok:
        return 0.0

    def ratio(num, den):
        if num is None or den is None:
            return None  # not evaluable
        if den == 0:
            return math.nan  # evaluable, but an error
        return num / den

    checks = [
        (pred.density, ref.density),
        (ratio(pred.b, pred.a), ref.b / ref.a),
        (ratio(pred.c, pred.a), ref.c / ref.a),
        (ratio(pred.b_p, pred.a_p), ref.b_p / ref.a_p),
        (ratio(pred.c_p, pred.a_p), ref.c_p / ref.a_p),
    ]
    scores: list[float] = []
    for gen, reference in checks:
        if gen is None:
            continue
        if isinstance(gen, float) and math.isnan(gen):
            scores.append(0.0)
            continue
        delta = abs(gen - reference) / reference
        scores.append(_tier_compliance(delta))
    if not scores:
        return 0.0
    return sum(scores) / len(scores)


def _tier_hallucination(gen: float, ref: float) -> float:
    if gen <= 0:
        return 1.0  # non-physical
    rel = abs(gen - ref) / abs(ref)
    if rel > 0.25:
        return 1.0
    if rel > 0.10:
        return 0.5
    return 0.0


def hallucination_score(pred: PredictionRecord | None, ref: AnnotationRecord) -> float:
    """Tiered outlier frequency over the nine percent-error properties.

    A missing response scores 1.0; a parsed record with no checkable
    property scores 0.0.
    """
    if pred is None or not pred.parse_ok:
        return 1.0
    checks: list[float] = []
    for name in HALLUCINATION_PROPERTIES:
        gen = pred.get(name)
        if gen is None:
            continue
        checks.append(_tier_hallucination(float(gen), float(getattr(ref, name))))
    if not checks:
        return 0.0
    return sum(checks) / len(checks)


def angle_abs_error(gen: float, ref: float) -> float:
    """Plain |gen - ref| in degrees; no modular wrap (references sit in
    (0, 180))."""
    return abs(gen - ref)


def per_example_mean(errors: dict[str, float]) -> float:
    """Arithmetic mean of the percent errors present in one example."""
    if not errors:
        raise MetricError("per-example mean needs at least one property")
    return sum(errors.values()) / len(errors)


def format_faithfulness(
    pred: PredictionRecord | None, ref: AnnotationRecord
) -> tuple[float, float, float]:
    """(S_presence, S_type, S_format) against the reference field set.

    Presence is the covered fraction of reference fields; type agreement is
    judged number-vs-string over the intersection (0 when empty); the
    composite weighs them 0.7 / 0.3.
    """
    ref_fields = set(ref.as_dict())
    if pred is None:
        return (0.0, 0.0, 0.0)
    gen_fields = pred.non_null_fields()
    common = ref_fields & gen_fields
    presence = len(common) / len(ref_fields)
    if not common:
        return (presence, 0.0, 0.7 * presence)

    def kind(value) -> str:
        return "number" if isinstance(value, (int, float)) else "string"

    matches = sum(
        1 for name in common if kind(pred.get(name)) == kind(getattr(ref, name))
    )
    s_type = matches / len(common)
    return (presence, s_type, 0.7 * presence + 0.3 * s_type)


def property_errors(
    pred: PredictionRecord | None, ref: AnnotationRecord
) -> tuple[dict[str, float], dict[str, float]]:
    """Percent errors and angle absolute errors for the extracted fields.

    Missing generated values are simply absent (hallucination owns
    missingness); angle properties go to the second map as plain degrees.
    """
    percents: dict[str, float] = {}
    angles: dict[str, float] = {}
    if pred is None or not pred.parse_ok:
        return percents, angles
    for name in HALLUCINATION_PROPERTIES:
        gen = pred.get(name)
        if gen is None:
            continue
        percents[name] = percent_error(float(gen), float(getattr(ref, name)))
    for name in ANGLE_PROPERTIES:
        gen = pred.get(name)
        if gen is None:
            continue
        angles[name] = angle_abs_error(float(gen), float(getattr(ref, name)))
    return percents, angles


def pearson(xs: list[float], ys: list[float]) -> float:
    """Two-pass mean-centered Pearson correlation coefficient."""
    if len(xs) != len(ys):
        raise MetricError("correlation inputs must be paired")
    n = len(xs)
    if n < 2:
        raise MetricError("correlation needs at least two pairs")
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    if sxx == 0 or syy == 0:
        raise MetricError("correlation undefined for a zero-variance column")
    return sxy / math.sqrt(sxx * syy)


@dataclass(frozen=True)
class CorrelationShift:
    pair: tuple[str, str]
    rho_source: float
    rho_target: float

    @property
    def delta(self) -> float:
        return self.rho_target - self.rho_source


def correlation_shift(
    errors_source: list[dict[str, float]],
    errors_target: list[dict[str, float]],
    top: int = 14,
    min_samples: int = 3,
) -> tuple[list[CorrelationShift], list[str]]:
    """Largest shifts in pairwise error-error correlations between protocols.

    Takes per-instance property-error tables (one dict per instance), computes
    Pearson coefficients per property pair under each protocol over the
    instances where both members are present, and returns the ``top`` pairs by
    absolute shift, listed alphabetically, plus notes for skipped pairs.
    """

    def table_rho(table: list[dict[str, float]], a: str, b: str) -> float | None:
        xs = [row[a] for row in table if a in row and b in row]
        ys = [row[b] for row in table if a in row and b in row]
        if len(xs) < min_samples:
            return None
        try:
            return pearson(xs, ys)
        except MetricError:
            return None

    columns: set[str] = set()
    for row in errors_source + errors_target:
        columns.update(row)
    ordered = sorted(columns)

    shifts: list[CorrelationShift] = []
    notes: list[str] = []
    for i, a in enumerate(ordered):
        for b in ordered[i + 1 :]:
            rho_s = table_rho(errors_source, a, b)
            rho_t = table_rho(errors_target, a, b)
            if rho_s is None or rho_t is None:
                notes.append(f"{a}<->{b}: skipped (insufficient or degenerate data)")
                continue
            shifts.append(CorrelationShift((a, b), rho_s, rho_t))

    shifts.sort(key=lambda s: -abs(s.delta))
    selected = shifts[:top]
    selected.sort(key=lambda s: s.pair)
    return selected, notes


@dataclass(frozen=True)
class TransferReport:
    se_error: float
    ce_error: float
    transfer_ratio: float      # math.inf when SE = 0 and CE > 0
    diverged: bool             # True on the infinite-ratio path
    g_max: float               # largest single-prediction absolute error


def transfer_report(
    se_error: float, ce_error: float, all_property_errors: list[float]
) -> TransferReport:
    """T = CE/SE plus the largest absolute per-property error observed."""
    if se_error > 0:
        ratio, diverged = ce_error / se_error, False
    elif ce_error > 0:
        ratio, diverged = math.inf, True
    else:
        ratio, diverged = 0.0, False
    g_max = max(all_property_errors, default=0.0)
    return TransferReport(
        se_error=se_error,
        ce_error=ce_error,
        transfer_ratio=ratio,
        diverged=diverged,
        g_max=g_max,
    )
