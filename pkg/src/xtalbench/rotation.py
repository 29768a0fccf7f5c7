"""Quasi-uniform rotation axes and rigid rotations about the centroid.

Axes come from the Fibonacci-sphere construction; each axis carries a fixed
rotation angle (30 degrees unless overridden) realized through Rodrigues'
formula.  Rotations are applied about the unweighted geometric centroid of
the atom set (the corpus convention, mass plays no role).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .lattice import Supercell

log = logging.getLogger(__name__)

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0
DEFAULT_ANGLE_DEG = 30.0

#: Poses per supercell in the canonical corpus: native + nine axis rotations.
POSES_PER_CELL = 10


@dataclass(frozen=True)
class RotationAxis:
    index: int
    unit_vector: tuple[float, float, float]
    angle_deg: float = DEFAULT_ANGLE_DEG

    @property
    def angle_rad(self) -> float:
        return math.radians(self.angle_deg)


def fibonacci_axes(n: int, angle_deg: float = DEFAULT_ANGLE_DEG) -> list[RotationAxis]:
    """The n Fibonacci-sphere axes, k = 0..n-1.

    z_k = 1 - (2k+1)/n, r_k = sqrt(1 - z_k^2), phi_k = 2 pi k / golden ratio.
    """
    if n < 1:
        raise ValueError("axis count must be >= 1")
    axes = []
    for k in range(n):
        z = 1.0 - (2.0 * k + 1.0) / n
        r = math.sqrt(max(0.0, 1.0 - z * z))
        phi = (2.0 * math.pi * k / GOLDEN_RATIO) % (2.0 * math.pi)
        axes.append(
            RotationAxis(
                index=k,
                unit_vector=(r * math.cos(phi), r * math.sin(phi), z),
                angle_deg=angle_deg,
            )
        )
    return axes


def rodrigues(axis: RotationAxis) -> np.ndarray:
    """Proper rotation matrix about ``axis`` by its angle.

    R = I cos(t) + (1 - cos(t)) u u^T + sin(t) [u]_x.  A slightly non-unit
    axis (within 1e-6) is normalized; anything worse is rejected.
    """
    u = np.asarray(axis.unit_vector, dtype=float)
    norm = np.linalg.norm(u)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"axis norm {norm} too far from 1")
    if abs(norm - 1.0) > 1e-12:
        log.warning("normalizing axis %d (norm %.2e off unit)", axis.index, norm - 1.0)
    u = u / norm
    theta = axis.angle_rad
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cross = np.array(
        [
            [0.0, -u[2], u[1]],
            [u[2], 0.0, -u[0]],
            [-u[1], u[0], 0.0],
        ]
    )
    return cos_t * np.eye(3) + (1.0 - cos_t) * np.outer(u, u) + sin_t * cross


def centroid(positions: np.ndarray) -> np.ndarray:
    """Unweighted mean position (the corpus' "center of mass")."""
    return positions.mean(axis=0)


def rotate_about_centroid(
    cell: Supercell, rotation: np.ndarray, pose: int | None = None
) -> Supercell:
    """Rotate all atoms (and the sphere center) about the geometric centroid."""
    if len(cell) == 0:
        raise ValueError("cannot rotate an empty cell")
    if np.array_equal(rotation, np.eye(3)):
        # Exact identity stays bit-identical (no centroid round trip).
        rotated = cell.positions.copy()
        new_center = cell.center.copy()
    else:
        c = centroid(cell.positions)
        rotated = (cell.positions - c) @ rotation.T + c
        new_center = rotation @ (cell.center - c) + c
    return Supercell(
        material=cell.material,
        radius_nm=cell.radius_nm,
        elements=cell.elements,
        positions=rotated,
        center=new_center,
        multiplicity=cell.multiplicity,
        pose=cell.pose if pose is None else pose,
    )


def corpus_poses(cell: Supercell, n_axes: int = 9,
                 angle_deg: float = DEFAULT_ANGLE_DEG) -> list[Supercell]:
    """Native pose plus the n_axes Fibonacci rotations, pose-indexed 0..n."""
    poses = [
        Supercell(
            material=cell.material,
            radius_nm=cell.radius_nm,
            elements=cell.elements,
            positions=cell.positions.copy(),
            center=cell.center.copy(),
            multiplicity=cell.multiplicity,
            pose=0,
        )
    ]
    for axis in fibonacci_axes(n_axes, angle_deg=angle_deg):
        poses.append(rotate_about_centroid(cell, rodrigues(axis), pose=axis.index + 1))
    return poses
