"""Prompt construction, endpoint dispatch and tolerant response parsing.

Prompts pair every context entry's rendered image with its full property
record; the query carries only the target's XYZ coordinates plus the output
schema.  Mock endpoints (oracle, scaled, null, garbage, noisy) run the whole
pipeline offline; HTTP endpoints speak an OpenAI-style chat payload with
base64 images.  The parser never raises: worst case is an empty record with
``parse_ok = False``.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field

import requests
import yaml

from .annotation import (
    FIELD_ORDER,
    FIELD_UNITS,
    NUMERIC_FIELDS,
    AnnotationRecord,
)
from .corpus import CorpusIndex
from .metrics import PredictionRecord
from .protocols import BenchmarkInstance

log = logging.getLogger(__name__)

PROMPT_VERSION = "xtalbench-prompt/1"

INSTRUCTION = (
    "You are given reference crystal structures, each as an image plus a "
    "property record. Study them, then predict the same properties for the "
    "query structure, which is given only as XYZ coordinates. Respond with "
    "one `field: value` line per property, using these exact field names: "
    + ", ".join(FIELD_ORDER)
    + ". Lengths in Angstrom, angles in degrees, density in g/cm^3."
)


class GatewayError(Exception):
    """Endpoint configuration or prompt assembly failure."""


@dataclass(frozen=True)
class Prompt:
    """Deterministic multimodal prompt: context blocks then a query block."""

    version: str
    instruction: str
    context: tuple[tuple[str, str, str], ...]  # (entry key, image path, record text)
    query: str

    def to_bytes(self) -> bytes:
        """Canonical serialization; equal prompts have equal bytes."""
        payload = {
            "version": self.version,
            "instruction": self.instruction,
            "context": [list(block) for block in self.context],
            "query": self.query,
        }
        return json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def build_prompt(instance: BenchmarkInstance, corpus: CorpusIndex) -> Prompt:
    """Assemble the prompt for one benchmark instance.

    Context entries keep the instance's serialization order; the query block
    exposes the target's coordinates only (no annotation leakage).
    """
    blocks = []
    for ref in instance.context:
        entry = corpus.entry(ref)  # raises CorpusError on gaps
        blocks.append((ref.key(), entry.png, corpus.annotation_text(ref)))
    query = (
        "Query structure (XYZ coordinates):\n"
        + corpus.xyz_text(instance.target)
        + "\nPredict the property record for this structure."
    )
    return Prompt(
        version=PROMPT_VERSION,
        instruction=INSTRUCTION,
        context=tuple(blocks),
        query=query,
    )


# ---------------------------------------------------------------------------
# Response parsing

_FIELD_ALIASES = {
    "n_atoms": ("n_atoms", "natoms", "atom count", "number of atoms", "atoms"),
    "cell_volume": ("cell_volume", "volume", "supercell volume", "v"),
    "a": ("a",),
    "b": ("b",),
    "c": ("c",),
    "mean_nn_distance": (
        "mean_nn_distance",
        "nearest neighbor distance",
        "nearest-neighbor distance",
        "nn distance",
        "mean nn distance",
    ),
    "density": ("density", "rho", "bulk density"),
    "a_p": ("a_p", "a0", "primitive a", "a prim"),
    "b_p": ("b_p", "b0", "primitive b", "b prim"),
    "c_p": ("c_p", "c0", "primitive c", "c prim"),
    "alpha_p": ("alpha_p", "alpha", "alpha0"),
    "beta_p": ("beta_p", "beta", "beta0"),
    "gamma_p": ("gamma_p", "gamma", "gamma0"),
    "space_group": ("space_group", "space group", "spacegroup", "sg"),
    "description": ("description",),
}

_ALIAS_TO_FIELD = {
    alias: name for name, aliases in _FIELD_ALIASES.items() for alias in aliases
}

_NUMBER_RE = re.compile(
    r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
)

# Multiplicative factors to Angstrom (or its cube) by unit spelling.
_LENGTH_UNITS = {
    "angstrom": 1.0,
    "angstroms": 1.0,
    "a": 1.0,
    "Å": 1.0,
    "Å": 1.0,
    "nm": 10.0,
    "nanometer": 10.0,
    "nanometers": 10.0,
    "pm": 0.01,
    "picometer": 0.01,
    "picometers": 0.01,
}
_VOLUME_UNITS = {
    "a^3": 1.0,
    "a3": 1.0,
    "Å^3": 1.0,
    "Å3": 1.0,
    "angstrom^3": 1.0,
    "nm^3": 1000.0,
    "nm3": 1000.0,
}

_LENGTH_FIELDS = {"a", "b", "c", "mean_nn_distance", "a_p", "b_p", "c_p"}


def _normalize_number(field_name: str, value: float, unit: str) -> float:
    unit = unit.strip().strip(".,;")
    if not unit:
        return value
    lowered = unit.lower()
    if field_name in _LENGTH_FIELDS:
        return value * _LENGTH_UNITS.get(lowered, _LENGTH_UNITS.get(unit, 1.0))
    if field_name == "cell_volume":
        return value * _VOLUME_UNITS.get(lowered, 1.0)
    return value


def _numeric_from_text(field_name: str, text: str) -> float | None:
    m = _NUMBER_RE.search(text)
    if not m:
        return None
    try:
        value = float(m.group(0))
    except ValueError:
        return None
    unit = text[m.end():].strip().split()[0] if text[m.end():].strip() else ""
    return _normalize_number(field_name, value, unit)


def _assign(record: dict, field_name: str, raw_value) -> None:
    if field_name in record:
        return  # first extraction wins
    if field_name in NUMERIC_FIELDS:
        if isinstance(raw_value, bool):
            return
        if isinstance(raw_value, (int, float)):
            record[field_name] = float(raw_value)
        elif isinstance(raw_value, str):
            value = _numeric_from_text(field_name, raw_value)
            if value is not None:
                record[field_name] = value
    else:
        if isinstance(raw_value, str) and raw_value.strip():
            record[field_name] = raw_value.strip()


def _try_json_block(text: str, record: dict) -> None:
    start = text.find("{")
    if start < 0:
        return
    depth = 0
    for i in range(start, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                try:
                    data = json.loads(text[start : i + 1])
                except (json.JSONDecodeError, RecursionError):
                    return
                if isinstance(data, dict):
                    for key, value in data.items():
                        if not isinstance(key, str):
                            continue
                        name = _ALIAS_TO_FIELD.get(
                            key.strip().lower().replace("-", "_")
                        )
                        if name:
                            _assign(record, name, value)
                return


_LINE_RE = re.compile(r"^\s*[-*\s]*([A-Za-z][A-Za-z0-9 _().\-]{0,40}?)\s*[:=]\s*(.+)$")

# Compact aliases safe to pick out of running prose ("a = 4.08 Angstrom").
_INLINE_ALIASES = {
    "a": "a", "b": "b", "c": "c",
    "a_p": "a_p", "b_p": "b_p", "c_p": "c_p",
    "alpha": "alpha_p", "beta": "beta_p", "gamma": "gamma_p",
    "alpha_p": "alpha_p", "beta_p": "beta_p", "gamma_p": "gamma_p",
    "density": "density", "rho": "density", "volume": "cell_volume",
    "n_atoms": "n_atoms", "natoms": "n_atoms",
}

_INLINE_RE = re.compile(
    r"(?<![A-Za-z0-9_])([A-Za-z][A-Za-z_]{0,7})\s*[:=]\s*"
    r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)"
)


def parse_response(raw: str | None) -> PredictionRecord:
    """Extract a property record from arbitrary model output.

    Prefers an embedded JSON object, then labeled-line extraction, then
    inline `name = value` patterns in prose; units are normalized to
    Angstrom-based repo units.  Total: never raises, regardless of input.
    """
    if raw is None:
        return PredictionRecord(raw_response=None, parse_ok=False)
    record: dict = {}
    try:
        _try_json_block(raw, record)
        for line in raw.splitlines():
            m = _LINE_RE.match(line)
            if not m:
                continue
            key = m.group(1).strip().lower().replace("-", "_")
            key = re.sub(r"\s+", " ", key)
            name = _ALIAS_TO_FIELD.get(key)
            if name is None:
                continue
            _assign(record, name, m.group(2))
        for m in _INLINE_RE.finditer(raw):
            name = _INLINE_ALIASES.get(m.group(1).lower())
            if name is None or name in record:
                continue
            try:
                value = float(m.group(2))
            except ValueError:
                continue
            record[name] = _normalize_number(name, value, m.group(3))
    except Exception:  # parser totality: salvage whatever was extracted
        log.debug("parse_response: swallowed parser exception", exc_info=True)
    ok = bool(record)
    return PredictionRecord(raw_response=raw, parse_ok=ok, **record)


# ---------------------------------------------------------------------------
# Endpoints

@dataclass(frozen=True)
class ModelEndpoint:
    name: str
    transport: str = "mock:oracle"  # "mock:<kind>[:param]" or "http"
    url: str = ""
    model_id: str = ""
    api_key_env: str = ""
    max_in_flight: int = 1
    timeout_s: float = 60.0
    max_attempts: int = 3
    backoff_base_s: float = 1.0
    requests_per_second: float | None = None

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise GatewayError(f"{self.name}: max_in_flight must be >= 1")
        if self.timeout_s <= 0:
            raise GatewayError(f"{self.name}: timeout must be positive")


BUILTIN_MOCKS = {
    "oracle": ModelEndpoint(name="oracle", transport="mock:oracle"),
    "scaled15": ModelEndpoint(name="scaled15", transport="mock:scaled:1.15"),
    "null": ModelEndpoint(name="null", transport="mock:null"),
    "garbage": ModelEndpoint(name="garbage", transport="mock:garbage:1234"),
    "noisy": ModelEndpoint(name="noisy", transport="mock:noisy:1234"),
}


def load_endpoints(path: str) -> dict[str, ModelEndpoint]:
    """Endpoint roster from a YAML config file, merged over the builtin mocks."""
    endpoints = dict(BUILTIN_MOCKS)
    raw = yaml.safe_load(open(path, encoding="utf-8"))
    for name, fields in (raw or {}).items():
        try:
            endpoints[name] = ModelEndpoint(name=name, **fields)
        except TypeError as exc:
            raise GatewayError(f"endpoint {name}: bad config ({exc})") from exc
    return endpoints


@dataclass
class QueryResult:
    instance_id: str
    raw_response: str | None
    latency_s: float
    attempts: int
    parsed: PredictionRecord = field(default_factory=PredictionRecord)

    def __post_init__(self):
        if self.latency_s < 0:
            raise ValueError("latency cannot be negative")


# ---------------------------------------------------------------------------
# Mock transports

def _scaled_record(ref: AnnotationRecord, factor: float) -> str:
    lines = []
    for name in FIELD_ORDER:
        value = getattr(ref, name)
        if name in NUMERIC_FIELDS:
            scaled = float(value) * factor
            unit = FIELD_UNITS.get(name, "")
            lines.append(f"{name}: {scaled!r} {unit}".rstrip())
        else:
            lines.append(f"{name}: {value}")
    return "\n".join(lines) + "\n"


def _garbage_text(rng: random.Random) -> str:
    length = rng.randrange(0, 240)
    return "".join(chr(rng.randrange(32, 0x2FF)) for _ in range(length))


def _noisy_record(ref: AnnotationRecord, rng: random.Random) -> str:
    lines = []
    for name in FIELD_ORDER:
        value = getattr(ref, name)
        if name in NUMERIC_FIELDS:
            jittered = float(value) * (1.0 + rng.uniform(-0.3, 0.3))
            lines.append(f"{name}: {jittered!r} {FIELD_UNITS.get(name, '')}".rstrip())
        else:
            lines.append(f"{name}: {value}")
    return "\n".join(lines) + "\n"


def mock_response(
    kind: str,
    param: str | None,
    prompt: Prompt,
    reference: AnnotationRecord | None,
    instance_id: str,
) -> str | None:
    """Response text for one mock transport; None models a dead endpoint."""
    if kind == "null":
        return None
    if kind == "oracle":
        if reference is None:
            raise GatewayError("oracle mock needs the reference record")
        return reference.to_text()
    if kind == "scaled":
        if reference is None:
            raise GatewayError("scaled mock needs the reference record")
        return _scaled_record(reference, float(param if param is not None else 1.15))
    seed_base = int(param) if param else 0
    rng = random.Random(f"{seed_base}:{instance_id}")
    if kind == "garbage":
        return _garbage_text(rng)
    if kind == "noisy":
        if reference is None:
            raise GatewayError("noisy mock needs the reference record")
        return _noisy_record(reference, rng)
    raise GatewayError(f"unknown mock transport kind {kind!r}")


# ---------------------------------------------------------------------------
# Dispatch

class TokenBucket:
    """Classic token bucket; thread-safe, sleeps callers when drained."""

    def __init__(self, rate: float, capacity: float | None = None):
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(rate, 1.0)
        self._tokens = self.capacity
        self._stamp = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(
                    self.capacity, self._tokens + (now - self._stamp) * self.rate
                )
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                needed = (1.0 - self._tokens) / self.rate
            time.sleep(needed)


def _http_payload(prompt: Prompt, corpus_root, model_id: str) -> dict:
    content: list[dict] = [{"type": "text", "text": prompt.instruction}]
    for key, image_rel, record_text in prompt.context:
        image_path = corpus_root / image_rel
        encoded = base64.b64encode(image_path.read_bytes()).decode("ascii")
        content.append(
            {
                "type": "image_url",
                "image_url": {"url": f"data:image/png;base64,{encoded}"},
            }
        )
        content.append({"type": "text", "text": f"[{key}]\n{record_text}"})
    content.append({"type": "text", "text": prompt.query})
    return {
        "model": model_id,
        "messages": [{"role": "user", "content": content}],
    }


def _http_call(endpoint: ModelEndpoint, prompt: Prompt, corpus_root) -> str:
    headers = {"Content-Type": "application/json"}
    if endpoint.api_key_env:
        key = os.environ.get(endpoint.api_key_env)
        if not key:
            raise GatewayError(
                f"{endpoint.name}: credential env var {endpoint.api_key_env} unset"
            )
        headers["Authorization"] = f"Bearer {key}"
    payload = _http_payload(prompt, corpus_root, endpoint.model_id)
    resp = requests.post(
        endpoint.url, json=payload, headers=headers, timeout=endpoint.timeout_s
    )
    resp.raise_for_status()
    body = resp.json()
    return body["choices"][0]["message"]["content"]


def query(
    endpoint: ModelEndpoint,
    prompt: Prompt,
    instance_id: str,
    reference: AnnotationRecord | None = None,
    corpus_root=None,
    bucket: TokenBucket | None = None,
    transport_override=None,
) -> QueryResult:
    """Dispatch one prompt with retries and exponential backoff.

    The reported latency is the wall time of the winning attempt alone.
    Exhausted retries yield an absent response (downstream this is the
    hallucination-1.0 path).  ``transport_override`` lets tests inject a
    callable in place of the configured transport.
    """
    attempts = 0
    last_latency = 0.0
    raw: str | None = None
    while attempts < max(1, endpoint.max_attempts):
        attempts += 1
        if bucket is not None:
            bucket.acquire()
        start = time.perf_counter()
        try:
            if transport_override is not None:
                raw = transport_override(prompt)
            elif endpoint.transport.startswith("mock:"):
                parts = endpoint.transport.split(":", 2)
                kind = parts[1]
                param = parts[2] if len(parts) > 2 else None
                raw = mock_response(kind, param, prompt, reference, instance_id)
            elif endpoint.transport == "http":
                raw = _http_call(endpoint, prompt, corpus_root)
            else:
                raise GatewayError(
                    f"{endpoint.name}: unknown transport {endpoint.transport!r}"
                )
            last_latency = time.perf_counter() - start
            break
        except GatewayError:
            raise
        except Exception as exc:
            last_latency = time.perf_counter() - start
            raw = None
            if attempts >= endpoint.max_attempts:
                log.warning("%s: %s failed after %d attempts: %s",
                            endpoint.name, instance_id, attempts, exc)
                break
            time.sleep(endpoint.backoff_base_s * 2 ** (attempts - 1))
    return QueryResult(
        instance_id=instance_id,
        raw_response=raw,
        latency_s=last_latency,
        attempts=attempts,
        parsed=parse_response(raw),
    )
