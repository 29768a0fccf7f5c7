"""Corpus generation and indexing: the on-disk dataset tree.

Layout: ``<root>/<material>/<R-label>/<pose>.{xyz,png,jpg,txt}`` plus a
``manifest.json`` written last, carrying a config fingerprint and per-file
SHA-256 digests so partial writes and stale trees are detectable.  Atom-count
range violations against the corpus envelope [57, 390] are recorded as flags,
not errors.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .annotation import AnnotationRecord, annotate, write_xyz
from .lattice import Supercell, generate_supercell, radius_label
from .materials import CANONICAL_RADII_NM, MaterialSpec, load_materials
from .protocols import CorpusShape, EntryRef
from .rendering import JPEG_QUALITY, RenderConfig, encode_jpeg, encode_png, render_cell
from .rotation import POSES_PER_CELL, corpus_poses

log = logging.getLogger(__name__)

ATOM_COUNT_RANGE = (57, 390)
MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1


class CorpusError(Exception):
    """Missing, stale or corrupt corpus tree."""


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _fingerprint(materials: list[str], radii: list[float], poses: int,
                 cfg: RenderConfig) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "materials": sorted(materials),
        "radii": sorted(radii),
        "poses": poses,
        "render": {
            "width": cfg.width,
            "height": cfg.height,
            "blur_sigma": cfg.blur_sigma,
            "radius_scale": cfg.radius_scale,
            "background": list(cfg.background),
            "fill_fraction": cfg.fill_fraction,
        },
        "jpeg_quality": JPEG_QUALITY,
    }


@dataclass(frozen=True)
class CorpusEntry:
    material: str
    radius_nm: float
    pose: int
    xyz: str   # paths relative to the corpus root
    png: str
    jpg: str
    props: str

    def ref(self) -> EntryRef:
        return EntryRef(self.material, self.radius_nm, self.pose)


class CorpusIndex:
    """Read-side view of a generated corpus."""

    def __init__(self, root: Path, manifest: dict):
        self.root = Path(root)
        self.manifest = manifest
        self.entries: dict[tuple[str, float, int], CorpusEntry] = {}
        for raw in manifest["entries"]:
            entry = CorpusEntry(
                material=raw["material"],
                radius_nm=float(raw["radius_nm"]),
                pose=int(raw["pose"]),
                xyz=raw["files"]["xyz"],
                png=raw["files"]["png"],
                jpg=raw["files"]["jpg"],
                props=raw["files"]["props"],
            )
            self.entries[(entry.material, entry.radius_nm, entry.pose)] = entry
        self._text_cache: dict[tuple[str, float, int], str] = {}
        self._xyz_cache: dict[tuple[str, float, int], str] = {}

    @property
    def fingerprint(self) -> dict:
        return self.manifest["fingerprint"]

    @property
    def flags(self) -> list[str]:
        return self.manifest.get("flags", [])

    def materials(self) -> list[str]:
        return sorted({m for m, _, _ in self.entries})

    def radii(self, material: str) -> list[float]:
        return sorted({r for m, r, _ in self.entries if m == material})

    def shape(self) -> CorpusShape:
        shape: CorpusShape = {}
        for material, radius, pose in self.entries:
            shape.setdefault(material, {}).setdefault(radius, set()).add(pose)
        return shape

    def entry(self, ref: EntryRef) -> CorpusEntry:
        try:
            return self.entries[(ref.material, ref.radius_nm, ref.pose)]
        except KeyError:
            raise CorpusError(f"corpus has no entry {ref.key()}") from None

    def annotation_text(self, ref: EntryRef) -> str:
        key = (ref.material, ref.radius_nm, ref.pose)
        if key not in self._text_cache:
            path = self.root / self.entry(ref).props
            self._text_cache[key] = path.read_text(encoding="utf-8")
        return self._text_cache[key]

    def reference_record(self, ref: EntryRef) -> AnnotationRecord:
        return AnnotationRecord.from_text(self.annotation_text(ref))

    def xyz_text(self, ref: EntryRef) -> str:
        key = (ref.material, ref.radius_nm, ref.pose)
        if key not in self._xyz_cache:
            path = self.root / self.entry(ref).xyz
            self._xyz_cache[key] = path.read_text(encoding="utf-8")
        return self._xyz_cache[key]

    def image_path(self, ref: EntryRef) -> Path:
        return self.root / self.entry(ref).png

    def verify(self) -> list[str]:
        """Recompute file digests; returns human-readable mismatch notes."""
        problems = []
        for raw in self.manifest["entries"]:
            for kind, rel in raw["files"].items():
                path = self.root / rel
                if not path.exists():
                    problems.append(f"{rel}: missing")
                    continue
                if _sha256(path.read_bytes()) != raw["sha256"][kind]:
                    problems.append(f"{rel}: digest mismatch")
        return problems


def load_corpus(root: str | Path) -> CorpusIndex:
    root = Path(root)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise CorpusError(f"no {MANIFEST_NAME} under {root}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    return CorpusIndex(root, manifest)


def _files_exist(root: Path, manifest: dict) -> bool:
    return all(
        (root / rel).exists()
        for raw in manifest["entries"]
        for rel in raw["files"].values()
    )


def generate_corpus(
    root: str | Path,
    materials: list[str] | None = None,
    radii: list[float] | None = None,
    render_config: RenderConfig | None = None,
    poses: int = POSES_PER_CELL,
    force: bool = False,
) -> CorpusIndex:
    """Generate (or reuse) the dataset tree under ``root``.

    A rerun with an unchanged fingerprint and intact files is a no-op.
    Returns the loaded index either way.
    """
    root = Path(root)
    cfg = render_config or RenderConfig()
    specs = load_materials()
    if materials is not None:
        wanted = set(materials)
        unknown = wanted - {s.name for s in specs}
        if unknown:
            raise CorpusError(f"unknown materials requested: {sorted(unknown)}")
        specs = [s for s in specs if s.name in wanted]
    radii = sorted(radii if radii is not None else CANONICAL_RADII_NM)

    fingerprint = _fingerprint([s.name for s in specs], radii, poses, cfg)
    manifest_path = root / MANIFEST_NAME
    if manifest_path.exists() and not force:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if manifest.get("fingerprint") == fingerprint and _files_exist(root, manifest):
            log.info("corpus at %s is up to date; skipping generation", root)
            return CorpusIndex(root, manifest)

    entries = []
    flags = []
    for spec in specs:
        for radius in radii:
            base = generate_supercell(spec, radius)
            lo, hi = ATOM_COUNT_RANGE
            if not lo <= base.n_atoms <= hi:
                note = (
                    f"{spec.name}/{radius_label(radius)}: {base.n_atoms} atoms "
                    f"outside [{lo}, {hi}]"
                )
                flags.append(note)
                log.warning("%s", note)
            if base.multiplicity is not None and base.multiplicity.exceeds_volume_cap:
                flags.append(
                    f"{spec.name}/{radius_label(radius)}: multiplicity det "
                    f"{base.multiplicity.det} exceeds the volume cap"
                )
            for cell in corpus_poses(base, n_axes=poses - 1):
                entries.append(_write_entry(root, spec, cell, cfg))

    manifest = {
        "fingerprint": fingerprint,
        "flags": flags,
        "entries": entries,
    }
    root.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return CorpusIndex(root, manifest)


def _write_entry(root: Path, spec: MaterialSpec, cell: Supercell,
                 cfg: RenderConfig) -> dict:
    rel_dir = Path(cell.material) / radius_label(cell.radius_nm)
    (root / rel_dir).mkdir(parents=True, exist_ok=True)
    stem = str(cell.pose)

    files = {
        "xyz": str(rel_dir / f"{stem}.xyz"),
        "png": str(rel_dir / f"{stem}.png"),
        "jpg": str(rel_dir / f"{stem}.jpg"),
        "props": str(rel_dir / f"{stem}.txt"),
    }
    write_xyz(cell, root / files["xyz"])
    image = render_cell(cell, cfg)
    (root / files["png"]).write_bytes(encode_png(image))
    (root / files["jpg"]).write_bytes(encode_jpeg(image))
    record = annotate(cell, spec)
    (root / files["props"]).write_text(record.to_text(), encoding="utf-8")

    digests = {
        kind: _sha256((root / rel).read_bytes()) for kind, rel in files.items()
    }
    return {
        "material": cell.material,
        "radius_nm": cell.radius_nm,
        "pose": cell.pose,
        "n_atoms": cell.n_atoms,
        "files": files,
        "sha256": digests,
    }
