"""Spherical supercell construction from primitive-cell parameters.

A supercell is the set of lattice translations of the atomic basis whose
Cartesian position lies within a target radius of the first basis atom.  The
enumeration box is derived from the inverse lattice matrix applied to the
sphere's bounding box, padded by one cell, so no retained atom can be missed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .materials import MaterialSpec

log = logging.getLogger(__name__)

NM_TO_ANGSTROM = 10.0

# Supercells larger than this many primitive cells get flagged: the corpus
# convention caps the multiplicity determinant at 8.
VOLUME_CAP = 8

# Positions closer than this are treated as the same lattice point.
DUPLICATE_TOL = 1e-6


class GenerationError(Exception):
    """Degenerate cell parameters or an empty supercell."""


def radius_label(radius_nm: float) -> str:
    """Directory/id label for a radius: 0.7 nm -> 'R7', 1.0 nm -> 'R10'."""
    return f"R{radius_nm * 10:g}"


def lattice_matrix(spec: MaterialSpec) -> np.ndarray:
    """3x3 matrix whose columns are the lattice vectors a1, a2, a3 (Angstrom).

    ``cubic-FCC`` cells use the primitive vectors (a/2)(0,1,1), (a/2)(1,0,1),
    (a/2)(1,1,0); all other systems use the standard construction with a1
    along x and a2 in the xy-plane.
    """
    if spec.lattice_system == "cubic-FCC":
        a = spec.a0
        cols = np.array(
            [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]
        ).T * (a / 2.0)
        return cols

    a, b, c = spec.a0, spec.b0, spec.c0
    alpha, beta, gamma = (
        math.radians(spec.alpha0),
        math.radians(spec.beta0),
        math.radians(spec.gamma0),
    )
    sin_gamma = math.sin(gamma)
    if abs(sin_gamma) < 1e-12:
        raise GenerationError(f"{spec.name}: gamma makes a1 and a2 collinear")
    a1 = np.array([a, 0.0, 0.0])
    a2 = np.array([b * math.cos(gamma), b * sin_gamma, 0.0])
    cx = c * math.cos(beta)
    cy = c * (math.cos(alpha) - math.cos(beta) * math.cos(gamma)) / sin_gamma
    cz_sq = c * c - cx * cx - cy * cy
    if cz_sq <= 0.0:
        raise GenerationError(f"{spec.name}: angles give a degenerate cell")
    a3 = np.array([cx, cy, math.sqrt(cz_sq)])
    matrix = np.column_stack([a1, a2, a3])
    if abs(np.linalg.det(matrix)) < 1e-12:
        raise GenerationError(f"{spec.name}: degenerate lattice matrix")
    return matrix


@dataclass(frozen=True)
class MultiplicityMatrix:
    """Diagonal integer multiplicity diag(s1, s2, s3).

    ``exceeds_volume_cap`` is set when no det <= 8 diagonal covers the target
    sphere; coverage wins over the cap, which is then only audited.
    """

    s1: int
    s2: int
    s3: int
    exceeds_volume_cap: bool = False

    def __post_init__(self):
        if min(self.s1, self.s2, self.s3) < 1:
            raise ValueError("multiplicity entries must be positive")

    @property
    def det(self) -> int:
        return self.s1 * self.s2 * self.s3

    def as_matrix(self) -> np.ndarray:
        return np.diag([self.s1, self.s2, self.s3])


def slab_widths(lattice: np.ndarray) -> np.ndarray:
    """Perpendicular distance between opposite cell faces, per axis."""
    a1, a2, a3 = lattice[:, 0], lattice[:, 1], lattice[:, 2]
    volume = abs(np.linalg.det(lattice))
    return np.array(
        [
            volume / np.linalg.norm(np.cross(a2, a3)),
            volume / np.linalg.norm(np.cross(a3, a1)),
            volume / np.linalg.norm(np.cross(a1, a2)),
        ]
    )


def select_multiplicity(lattice: np.ndarray, radius_nm: float) -> MultiplicityMatrix:
    """Smallest diagonal multiplicity whose cell block contains the sphere.

    The scaled parallelepiped contains a sphere of radius R iff each pair of
    opposite faces is at least 2R apart, so every diagonal entry is minimized
    independently; ties in det cannot occur.
    """
    if radius_nm <= 0:
        raise GenerationError("radius must be positive")
    diameter = 2.0 * radius_nm * NM_TO_ANGSTROM
    widths = slab_widths(lattice)
    # Guard the exact-multiple boundary against float noise before ceil.
    entries = [max(1, math.ceil(diameter / w - 1e-9)) for w in widths]
    s = MultiplicityMatrix(*entries)
    if s.det > VOLUME_CAP:
        s = MultiplicityMatrix(*entries, exceeds_volume_cap=True)
        log.warning(
            "multiplicity det %d exceeds the volume cap %d at R=%.2f nm; "
            "sphere coverage takes precedence",
            s.det,
            VOLUME_CAP,
            radius_nm,
        )
    return s


@dataclass(frozen=True, eq=False)
class Supercell:
    """Atoms of one spherical supercell.

    ``positions`` is an (N, 3) float array in Angstrom, paired row-wise with
    ``elements``; ``center`` is the sphere center (position of the first basis
    atom of the origin cell, possibly rotated downstream).
    """

    material: str
    radius_nm: float
    elements: tuple[str, ...]
    positions: np.ndarray
    center: np.ndarray
    multiplicity: MultiplicityMatrix | None = None
    pose: int = 0

    def __post_init__(self):
        self.positions.setflags(write=False)
        self.center.setflags(write=False)

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def n_atoms(self) -> int:
        return len(self.elements)

    def atoms(self):
        """Iterate (element, position) pairs."""
        return zip(self.elements, self.positions)


def generate_supercell(spec: MaterialSpec, radius_nm: float) -> Supercell:
    """Build the spherical supercell of ``spec`` with the given radius (nm).

    Atoms are every lattice translation of the basis within ``radius_nm`` of
    the first basis atom, ordered lexicographically by (n1, n2, n3, basis
    index).  Raises :class:`GenerationError` when the result would be empty.
    """
    if radius_nm <= 0:
        raise GenerationError(f"{spec.name}: radius must be positive")
    lattice = lattice_matrix(spec)
    radius = radius_nm * NM_TO_ANGSTROM
    multiplicity = select_multiplicity(lattice, radius_nm)

    fracs = np.array([f for _, f in spec.basis])
    center = lattice @ fracs[0]

    inv = np.linalg.inv(lattice)
    corners = center[None, :] + radius * np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    )
    corner_fracs = corners @ inv.T
    lo = np.floor(corner_fracs.min(axis=0)).astype(int) - 1
    hi = np.ceil(corner_fracs.max(axis=0)).astype(int) + 1

    n1, n2, n3 = (np.arange(lo[i], hi[i] + 1) for i in range(3))
    grid = np.stack(np.meshgrid(n1, n2, n3, indexing="ij"), axis=-1).reshape(-1, 3)
    # (cells, basis, 3) -> flatten in (n, basis-index) lexicographic order.
    cart = np.einsum("ij,cbj->cbi", lattice, grid[:, None, :] + fracs[None, :, :])
    cart = cart.reshape(-1, 3)
    basis_index = np.tile(np.arange(len(fracs)), len(grid))

    keep = np.linalg.norm(cart - center, axis=1) <= radius
    kept = cart[keep]
    kept_basis = basis_index[keep]

    seen: set[tuple[float, float, float]] = set()
    rows: list[int] = []
    for i, pos in enumerate(kept):
        key = tuple(np.round(pos / DUPLICATE_TOL).astype(np.int64) * DUPLICATE_TOL)
        if key in seen:
            continue
        seen.add(key)
        rows.append(i)

    if not rows:
        raise GenerationError(
            f"{spec.name}: no atoms within R={radius_nm} nm of the cell origin"
        )
    elements = tuple(spec.basis[b][0] for b in kept_basis[rows])
    return Supercell(
        material=spec.name,
        radius_nm=radius_nm,
        elements=elements,
        positions=kept[rows].copy(),
        center=center.copy(),
        multiplicity=multiplicity,
    )
