"""Bundled material and element definitions.

The ten unit cells and the per-element constants (mass, covalent radius,
display color) ship as YAML files under ``xtalbench/data/``.  Everything is
validated on load and immutable afterwards, so the loaded registry can be
shared freely between threads.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass

import yaml

LATTICE_SYSTEMS = (
    "cubic-FCC",
    "cubic",
    "tetragonal",
    "hexagonal",
    "rhombohedral",
    "triclinic",
)

CANONICAL_RADII_NM = (0.7, 0.8, 0.9, 1.0)


class MaterialsError(Exception):
    """Malformed bundled data or unknown lookup key."""


@dataclass(frozen=True)
class ElementData:
    symbol: str
    mass: float          # amu
    covalent_radius: float  # Angstrom
    color: tuple[int, int, int]

    def __post_init__(self):
        if self.mass <= 0:
            raise MaterialsError(f"{self.symbol}: mass must be positive")
        if self.covalent_radius <= 0:
            raise MaterialsError(f"{self.symbol}: covalent radius must be positive")


@dataclass(frozen=True)
class MaterialSpec:
    """Primitive-cell parameters plus the atomic basis of one material.

    Lengths are Angstrom, angles degrees.  ``basis`` holds
    ``(element, (fx, fy, fz))`` fractional positions, each component in
    ``[0, 1)``; for ``cubic-FCC`` entries the fractions refer to the FCC
    primitive frame rather than the conventional cube.
    """

    name: str
    formula: str
    a0: float
    b0: float
    c0: float
    alpha0: float
    beta0: float
    gamma0: float
    space_group: str
    space_group_number: int
    lattice_system: str
    basis: tuple[tuple[str, tuple[float, float, float]], ...]

    def __post_init__(self):
        for label, value in (("a0", self.a0), ("b0", self.b0), ("c0", self.c0)):
            if value <= 0:
                raise MaterialsError(f"{self.name}: {label} must be positive")
        for label, value in (
            ("alpha0", self.alpha0),
            ("beta0", self.beta0),
            ("gamma0", self.gamma0),
        ):
            if not 0.0 < value < 180.0:
                raise MaterialsError(f"{self.name}: {label} outside (0, 180) degrees")
        if not 1 <= self.space_group_number <= 230:
            raise MaterialsError(f"{self.name}: space-group number outside [1, 230]")
        if self.lattice_system not in LATTICE_SYSTEMS:
            raise MaterialsError(
                f"{self.name}: unknown lattice system {self.lattice_system!r}"
            )
        if not self.basis:
            raise MaterialsError(f"{self.name}: empty basis")
        for element, frac in self.basis:
            if len(frac) != 3 or any(not 0.0 <= f < 1.0 for f in frac):
                raise MaterialsError(
                    f"{self.name}: basis coordinate for {element} outside [0, 1)"
                )

    @property
    def elements(self) -> tuple[str, ...]:
        """Distinct element symbols in basis order of first appearance."""
        seen: list[str] = []
        for element, _ in self.basis:
            if element not in seen:
                seen.append(element)
        return tuple(seen)


def _read_data(filename: str):
    ref = importlib.resources.files("xtalbench").joinpath("data", filename)
    return yaml.safe_load(ref.read_text(encoding="utf-8"))


def load_elements() -> dict[str, ElementData]:
    """Load the bundled element table, keyed by symbol."""
    raw = _read_data("elements.yaml")
    table: dict[str, ElementData] = {}
    for symbol, fields in raw.items():
        try:
            table[symbol] = ElementData(
                symbol=symbol,
                mass=float(fields["mass"]),
                covalent_radius=float(fields["covalent_radius"]),
                color=tuple(int(c) for c in fields["color"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MaterialsError(f"element {symbol}: malformed entry ({exc})") from exc
    return table


_ELEMENTS: dict[str, ElementData] | None = None


def element_data(symbol: str) -> ElementData:
    """Constants for one element; raises :class:`MaterialsError` if unknown."""
    global _ELEMENTS
    if _ELEMENTS is None:
        _ELEMENTS = load_elements()
    try:
        return _ELEMENTS[symbol]
    except KeyError:
        raise MaterialsError(f"unknown element symbol {symbol!r}") from None


def load_materials() -> list[MaterialSpec]:
    """Load and validate the ten bundled materials, sorted by name.

    Also enforces the closure property: every element appearing in any basis
    has an entry in the element table.
    """
    raw = _read_data("materials.yaml")
    specs: list[MaterialSpec] = []
    for name in sorted(raw):
        fields = raw[name]
        try:
            spec = MaterialSpec(
                name=name,
                formula=str(fields["formula"]),
                a0=float(fields["a0"]),
                b0=float(fields["b0"]),
                c0=float(fields["c0"]),
                alpha0=float(fields["alpha0"]),
                beta0=float(fields["beta0"]),
                gamma0=float(fields["gamma0"]),
                space_group=str(fields["space_group"]),
                space_group_number=int(fields["space_group_number"]),
                lattice_system=str(fields["lattice_system"]),
                basis=tuple(
                    (str(el), (float(f[0]), float(f[1]), float(f[2])))
                    for el, f in fields["basis"]
                ),
            )
        except MaterialsError:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise MaterialsError(f"material {name}: malformed entry ({exc})") from exc
        for element in spec.elements:
            element_data(element)  # raises on a missing element entry
        specs.append(spec)
    return specs


def material(name: str) -> MaterialSpec:
    """Look up a single bundled material by name."""
    for spec in load_materials():
        if spec.name == name:
            return spec
    raise MaterialsError(f"unknown material {name!r}")
