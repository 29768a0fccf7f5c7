"""Spatial-Exclusion and Compositional-Exclusion split assembly.

SE holds out one radius of one material (context: the material's remaining
radii); CE holds out an entire material (context: everything else).  Both
use protocol poses 0..4, the native pose plus the first four axis rotations;
poses 5..9 stay reserved for held-out consistency analysis.  Context entries
are ordered materials-alphabetical, radii-ascending, poses-ascending so
prompts are reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .lattice import radius_label

PROTOCOL_POSES = (0, 1, 2, 3, 4)

#: material -> radius (nm) -> set of available pose indices
CorpusShape = dict[str, dict[float, set[int]]]


class ProtocolError(Exception):
    """Incomplete corpus or empty aggregation input."""


@dataclass(frozen=True)
class EntryRef:
    material: str
    radius_nm: float
    pose: int

    def key(self) -> str:
        return f"{self.material}/{radius_label(self.radius_nm)}/{self.pose}"


@dataclass(frozen=True)
class BenchmarkInstance:
    protocol: str  # "SE" | "CE"
    target: EntryRef
    context: tuple[EntryRef, ...]

    @property
    def instance_id(self) -> str:
        return f"{self.protocol.lower()}/{self.target.key()}"

    def violations(self) -> list[EntryRef]:
        """Context entries breaking this protocol's exclusion predicate."""
        if self.protocol == "SE":
            return [
                e
                for e in self.context
                if e.material == self.target.material
                and e.radius_nm == self.target.radius_nm
            ]
        return [e for e in self.context if e.material == self.target.material]

    def to_json(self) -> str:
        return json.dumps(
            {
                "protocol": self.protocol,
                "target": [self.target.material, self.target.radius_nm, self.target.pose],
                "context": [[e.material, e.radius_nm, e.pose] for e in self.context],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "BenchmarkInstance":
        raw = json.loads(line)
        return cls(
            protocol=raw["protocol"],
            target=EntryRef(*raw["target"]),
            context=tuple(EntryRef(*e) for e in raw["context"]),
        )


def _check_complete(shape: CorpusShape) -> None:
    gaps = []
    for material in sorted(shape):
        for radius in sorted(shape[material]):
            missing = set(PROTOCOL_POSES) - shape[material][radius]
            if missing:
                gaps.append(
                    f"{material}/{radius_label(radius)}: poses {sorted(missing)}"
                )
    if gaps:
        raise ProtocolError("corpus incomplete for protocol poses: " + "; ".join(gaps))
    if not shape:
        raise ProtocolError("empty corpus")


def _ordered_refs(shape: CorpusShape, skip) -> tuple[EntryRef, ...]:
    refs = []
    for material in sorted(shape):
        for radius in sorted(shape[material]):
            if skip(material, radius):
                continue
            for pose in PROTOCOL_POSES:
                refs.append(EntryRef(material, radius, pose))
    return tuple(refs)


def build_se_instances(shape: CorpusShape) -> list[BenchmarkInstance]:
    """One instance per (material, held-out radius, protocol pose)."""
    _check_complete(shape)
    instances = []
    for material in sorted(shape):
        for held_out in sorted(shape[material]):
            context = _ordered_refs(
                {material: shape[material]},
                skip=lambda m, r: r == held_out,
            )
            for pose in PROTOCOL_POSES:
                instances.append(
                    BenchmarkInstance(
                        protocol="SE",
                        target=EntryRef(material, held_out, pose),
                        context=context,
                    )
                )
    return instances


def build_ce_instances(shape: CorpusShape) -> list[BenchmarkInstance]:
    """One instance per (material, radius, protocol pose); the target's
    material is fully excluded from context."""
    _check_complete(shape)
    instances = []
    for material in sorted(shape):
        context = _ordered_refs(shape, skip=lambda m, r: m == material)
        for radius in sorted(shape[material]):
            for pose in PROTOCOL_POSES:
                instances.append(
                    BenchmarkInstance(
                        protocol="CE",
                        target=EntryRef(material, radius, pose),
                        context=context,
                    )
                )
    return instances


def write_instance_manifest(
    instances: list[BenchmarkInstance], path: str | Path
) -> None:
    """Line-delimited instance manifest, one JSON record per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for instance in instances:
            fh.write(instance.to_json() + "\n")


def read_instance_manifest(path: str | Path) -> list[BenchmarkInstance]:
    with open(path, encoding="utf-8") as fh:
        return [BenchmarkInstance.from_json(line) for line in fh if line.strip()]


@dataclass(frozen=True)
class AggregateError:
    protocol: str
    error: float               # mean per-instance loss; NaN when nothing parsed
    losses: tuple[float | None, ...]  # None marks an unparseable response
    n_failed: int

    @property
    def failure_rate(self) -> float:
        return self.n_failed / len(self.losses) if self.losses else 0.0


def aggregate(losses: list[float | None], protocol: str) -> AggregateError:
    """Mean per-instance loss for one protocol run.

    Unparseable responses (None) are excluded from the mean and surfaced via
    the failure rate; with no failures this reduces to the plain
    1/(instances) normalization.
    """
    if not losses:
        raise ProtocolError("cannot aggregate an empty loss list")
    ok = [l for l in losses if l is not None]
    error = sum(ok) / len(ok) if ok else math.nan
    return AggregateError(
        protocol=protocol,
        error=error,
        losses=tuple(losses),
        n_failed=len(losses) - len(ok),
    )
