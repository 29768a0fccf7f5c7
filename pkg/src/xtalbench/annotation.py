"""Structured property records for supercells, plus XYZ file round trips.

The record schema mirrors what the benchmark asks models to produce: atom
count, box volume and edges, mean nearest-neighbor distance, density,
primitive-cell parameters, space group and a templated description.  The
labeled-line text form doubles as the on-disk annotation file and the prompt
context block, with floats at full round-trip precision.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .lattice import Supercell
from .materials import MaterialSpec, element_data

AMU_PER_A3_TO_G_PER_CM3 = 1.66053906660

# Unit suffix per numeric field in the text form (empty string: bare number).
FIELD_UNITS = {
    "n_atoms": "",
    "cell_volume": "A^3",
    "a": "A",
    "b": "A",
    "c": "A",
    "mean_nn_distance": "A",
    "density": "g/cm^3",
    "a_p": "A",
    "b_p": "A",
    "c_p": "A",
    "alpha_p": "deg",
    "beta_p": "deg",
    "gamma_p": "deg",
}

NUMERIC_FIELDS = tuple(FIELD_UNITS)
STRING_FIELDS = ("space_group", "description")
FIELD_ORDER = NUMERIC_FIELDS + STRING_FIELDS


class XYZFormatError(Exception):
    """Malformed XYZ file content."""


@dataclass(frozen=True)
class AnnotationRecord:
    n_atoms: int
    cell_volume: float
    a: float
    b: float
    c: float
    mean_nn_distance: float
    density: float
    a_p: float
    b_p: float
    c_p: float
    alpha_p: float
    beta_p: float
    gamma_p: float
    space_group: str
    description: str

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValueError("record needs at least one atom")
        for name in ("cell_volume", "a", "b", "c", "density"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("alpha_p", "beta_p", "gamma_p"):
            if not 0.0 < getattr(self, name) < 180.0:
                raise ValueError(f"{name} outside (0, 180) degrees")

    def to_text(self) -> str:
        """Labeled-line form, one `field: value [unit]` per line, fixed order."""
        lines = []
        for name in FIELD_ORDER:
            value = getattr(self, name)
            unit = FIELD_UNITS.get(name, "")
            if unit:
                lines.append(f"{name}: {value!r} {unit}")
            elif name in NUMERIC_FIELDS:
                lines.append(f"{name}: {value!r}")
            else:
                lines.append(f"{name}: {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AnnotationRecord":
        values: dict[str, object] = {}
        for line in text.splitlines():
            if ":" not in line:
                continue
            key, _, rest = line.partition(":")
            key = key.strip()
            rest = rest.strip()
            if key == "n_atoms":
                values[key] = int(rest.split()[0])
            elif key in NUMERIC_FIELDS:
                values[key] = float(rest.split()[0])
            elif key in STRING_FIELDS:
                values[key] = rest
        missing = [n for n in FIELD_ORDER if n not in values]
        if missing:
            raise ValueError(f"annotation text missing fields: {missing}")
        return cls(**values)  # type: ignore[arg-type]

    def as_dict(self) -> dict[str, object]:
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}


def bounding_box_edges(cell: Supercell) -> tuple[float, float, float]:
    """Axis-aligned extents padded by twice the largest covalent radius.

    This is the finite-cluster stand-in for supercell edges (a, b, c): atoms
    are treated as balls, so each extent gains one maximal radius per side.
    """
    r_max = max(element_data(el).covalent_radius for el in set(cell.elements))
    spans = cell.positions.max(axis=0) - cell.positions.min(axis=0)
    return tuple(float(s) + 2.0 * r_max for s in spans)


def mean_nn_distance(positions: np.ndarray) -> float:
    """Mean over atoms of the distance to the nearest other atom (O(N^2))."""
    if len(positions) < 2:
        raise ValueError("nearest-neighbor distance needs at least two atoms")
    dist = cdist(positions, positions)
    np.fill_diagonal(dist, np.inf)
    return float(dist.min(axis=1).mean())


def render_description(cell: Supercell, spec: MaterialSpec) -> str:
    """Deterministic one-paragraph description of a supercell."""
    system = spec.lattice_system.replace("cubic-FCC", "face-centered cubic")
    return (
        f"Spherical {spec.formula} nanocluster of radius {cell.radius_nm:g} nm "
        f"containing {cell.n_atoms} atoms. The parent crystal is {system} with "
        f"space group {spec.space_group} and primitive cell "
        f"a={spec.a0:g} A, b={spec.b0:g} A, c={spec.c0:g} A."
    )


def annotate(cell: Supercell, spec: MaterialSpec) -> AnnotationRecord:
    """Compute the full property record for one (possibly rotated) supercell."""
    if len(cell) == 0:
        raise ValueError("cannot annotate an empty cell")
    a, b, c = bounding_box_edges(cell)
    volume = a * b * c
    total_mass = sum(element_data(el).mass for el in cell.elements)
    return AnnotationRecord(
        n_atoms=cell.n_atoms,
        cell_volume=volume,
        a=a,
        b=b,
        c=c,
        mean_nn_distance=mean_nn_distance(cell.positions),
        density=total_mass / volume * AMU_PER_A3_TO_G_PER_CM3,
        a_p=spec.a0,
        b_p=spec.b0,
        c_p=spec.c0,
        alpha_p=spec.alpha0,
        beta_p=spec.beta0,
        gamma_p=spec.gamma0,
        space_group=spec.space_group,
        description=render_description(cell, spec),
    )


def write_xyz(cell: Supercell, path: str | Path) -> None:
    """Write the bit-exact XYZ contract: count, comment, 6-decimal rows."""
    lines = [
        str(cell.n_atoms),
        f"material={cell.material} R={cell.radius_nm:g} pose={cell.pose}",
    ]
    for el, pos in cell.atoms():
        lines.append(f"{el} {pos[0]:.6f} {pos[1]:.6f} {pos[2]:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_comment(comment: str) -> dict[str, str]:
    out = {}
    for token in comment.split():
        if "=" in token:
            key, _, value = token.partition("=")
            out[key] = value
    return out


def read_xyz(path: str | Path) -> Supercell:
    """Read an XYZ file written by :func:`write_xyz`.

    The center is reconstructed as the position centroid, which downstream
    consumers (prompt payloads, re-annotation) never rely on.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if len(lines) < 2:
        raise XYZFormatError(f"{path}: truncated header")
    try:
        count = int(lines[0].strip())
    except ValueError as exc:
        raise XYZFormatError(f"{path}: line 1: bad atom count") from exc
    meta = _parse_comment(lines[1])
    atom_lines = [ln for ln in lines[2:] if ln.strip()]
    if len(atom_lines) != count:
        raise XYZFormatError(
            f"{path}: line 1 declares {count} atoms but {len(atom_lines)} rows follow"
        )
    elements: list[str] = []
    rows: list[list[float]] = []
    for i, line in enumerate(atom_lines, start=3):
        parts = line.split()
        if len(parts) != 4:
            raise XYZFormatError(f"{path}: line {i}: expected `El x y z`")
        try:
            rows.append([float(v) for v in parts[1:]])
        except ValueError as exc:
            raise XYZFormatError(f"{path}: line {i}: bad coordinate") from exc
        elements.append(parts[0])
    positions = np.array(rows)
    return Supercell(
        material=meta.get("material", ""),
        radius_nm=float(meta.get("R", 0) or 0),
        elements=tuple(elements),
        positions=positions,
        center=positions.mean(axis=0),
        pose=int(meta.get("pose", 0) or 0),
    )
