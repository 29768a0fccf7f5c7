"""Orthographic projection and disk rasterization of atom sets.

Atoms are drawn back-to-front as Gaussian-edged disks, sized by covalent
radius and colored with the bundled CPK-like palette.  PNG is the canonical
lossless artifact (byte-deterministic); JPEG copies exist only for corpus
fidelity and carry no determinism contract.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.special import erf

from .lattice import NM_TO_ANGSTROM, Supercell
from .materials import ElementData, element_data

log = logging.getLogger(__name__)

JPEG_QUALITY = 90


@dataclass(frozen=True)
class RenderConfig:
    width: int = 64
    height: int = 64
    # None: sigma proportional to each disk (0.35 r, floor 0.5 px).
    blur_sigma: float | None = None
    # None: disks share the camera scale derived from the frame fit.
    radius_scale: float | None = None
    background: tuple[int, int, int] = (255, 255, 255)
    depth_sort: bool = True
    # Fraction of the short image side the sphere diameter maps onto.
    fill_fraction: float = 0.9

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValueError("image must be at least 16x16")
        if self.blur_sigma is not None and self.blur_sigma < 0:
            raise ValueError("blur sigma must be >= 0")


def project(cell: Supercell) -> list[tuple[str, float, float, float]]:
    """Orthographic projection onto the xy-plane; z kept for draw order."""
    if len(cell) == 0:
        raise ValueError("cannot project an empty cell")
    return [
        (el, float(p[0]), float(p[1]), float(p[2]))
        for el, p in zip(cell.elements, cell.positions)
    ]


def _camera_scale(cell: Supercell, cfg: RenderConfig) -> float:
    """Pixels per Angstrom so the padded sphere fills ``fill_fraction``."""
    r_cov_max = max(element_data(el).covalent_radius for el in set(cell.elements))
    extent = cell.radius_nm * NM_TO_ANGSTROM + r_cov_max
    return cfg.fill_fraction * min(cfg.width, cfg.height) / (2.0 * extent)


def rasterize(
    projected: list[tuple[str, float, float, float]],
    cfg: RenderConfig,
    scale: float,
    radius_scale: float | None = None,
    elements: dict[str, ElementData] | None = None,
) -> Image.Image:
    """Rasterize projected atoms to an RGB image.

    ``scale`` maps Angstrom to pixels for coordinates; disk radii use
    ``radius_scale`` when given (else ``scale``).  Pure function of its
    inputs: identical arguments yield identical pixel data.
    """
    canvas = np.empty((cfg.height, cfg.width, 3), dtype=np.float64)
    canvas[:, :] = np.asarray(cfg.background, dtype=np.float64)
    if not projected:
        return Image.fromarray(canvas.astype(np.uint8), mode="RGB")

    lookup = elements if elements is not None else {}
    xs = np.array([p[1] for p in projected])
    ys = np.array([p[2] for p in projected])
    cx, cy = xs.mean(), ys.mean()

    order = range(len(projected))
    if cfg.depth_sort:
        # Back-to-front: ascending z, index as tie-break for determinism.
        order = sorted(order, key=lambda i: (projected[i][3], i))

    disk_scale = radius_scale if radius_scale is not None else scale
    drew_any = False
    for i in order:
        el, x, y, _ = projected[i]
        data = lookup.get(el) or element_data(el)
        px = (x - cx) * scale + cfg.width / 2.0
        # Flip y so +y in the atom frame points up in the image.
        py = (cy - y) * scale + cfg.height / 2.0
        r_px = data.covalent_radius * disk_scale
        sigma = cfg.blur_sigma if cfg.blur_sigma is not None else max(0.35 * r_px, 0.5)
        reach = r_px + 3.0 * sigma + 1.0
        x0, x1 = int(np.floor(px - reach)), int(np.ceil(px + reach)) + 1
        y0, y1 = int(np.floor(py - reach)), int(np.ceil(py + reach)) + 1
        x0, x1 = max(x0, 0), min(x1, cfg.width)
        y0, y1 = max(y0, 0), min(y1, cfg.height)
        if x0 >= x1 or y0 >= y1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1]
        dist = np.hypot(xx + 0.5 - px, yy + 0.5 - py)
        if sigma > 0:
            # Gaussian-blurred edge: normal CDF profile across the disk rim.
            alpha = 0.5 * (1.0 + erf((r_px - dist) / (sigma * np.sqrt(2.0))))
        else:
            alpha = (dist <= r_px).astype(np.float64)
        color = np.asarray(data.color, dtype=np.float64)
        patch = canvas[y0:y1, x0:x1]
        patch[:] = alpha[..., None] * color + (1.0 - alpha[..., None]) * patch
        drew_any = True

    if not drew_any:
        log.warning("frame too small for any disk; returning background image")
    return Image.fromarray(np.clip(np.round(canvas), 0, 255).astype(np.uint8), "RGB")


def render_cell(cell: Supercell, cfg: RenderConfig | None = None) -> Image.Image:
    """Project and rasterize one supercell with the fitted camera scale."""
    cfg = cfg or RenderConfig()
    scale = _camera_scale(cell, cfg)
    return rasterize(project(cell), cfg, scale, radius_scale=cfg.radius_scale)


def encode_png(image: Image.Image) -> bytes:
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


def encode_jpeg(image: Image.Image, quality: int = JPEG_QUALITY) -> bytes:
    buf = io.BytesIO()
    image.save(buf, format="JPEG", quality=quality)
    return buf.getvalue()
