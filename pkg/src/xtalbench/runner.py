"""Run orchestration and scoring.

A run dispatches every benchmark instance of one protocol against one
endpoint and appends results to a line-delimited log keyed by instance id,
so an interrupted run resumes by skipping completed ids.  Scoring replays a
log against the corpus' reference records and emits one score row per
instance plus protocol aggregates.
"""

from __future__ import annotations

import datetime
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from .corpus import CorpusIndex
from .gateway import (
    ModelEndpoint,
    QueryResult,
    TokenBucket,
    build_prompt,
    parse_response,
    query,
)
from .metrics import (
    CE_LOSS_PROPERTIES,
    SE_LOSS_PROPERTIES,
    PredictionRecord,
    format_faithfulness,
    hallucination_score,
    per_example_mean,
    physics_compliance,
    property_errors,
    space_group_match,
)
from .protocols import (
    AggregateError,
    BenchmarkInstance,
    EntryRef,
    aggregate,
    build_ce_instances,
    build_se_instances,
)

log = logging.getLogger(__name__)


class RunError(Exception):
    """Run log inconsistent with the corpus or the requested protocol."""


def build_instances(corpus: CorpusIndex, protocol: str) -> list[BenchmarkInstance]:
    shape = corpus.shape()
    if protocol == "SE":
        return build_se_instances(shape)
    if protocol == "CE":
        return build_ce_instances(shape)
    raise RunError(f"unknown protocol {protocol!r}")


def _completed_ids(log_path: Path) -> set[str]:
    done = set()
    if log_path.exists():
        with open(log_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    done.add(json.loads(line)["instance_id"])
    return done


@dataclass
class RunStats:
    protocol: str
    endpoint: str
    n_total: int
    n_skipped: int
    n_queried: int
    n_failed: int  # absent responses among the newly queried


def execute_run(
    corpus: CorpusIndex,
    protocol: str,
    endpoint: ModelEndpoint,
    log_path: str | Path,
    resume: bool = True,
) -> RunStats:
    """Dispatch all instances of ``protocol`` and append to the run log.

    Results are written by the single caller thread in instance order;
    dispatch itself fans out up to ``endpoint.max_in_flight`` workers.
    """
    log_path = Path(log_path)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    instances = build_instances(corpus, protocol)
    done = _completed_ids(log_path) if resume else set()
    if not resume and log_path.exists():
        log_path.unlink()
    todo = [i for i in instances if i.instance_id not in done]

    bucket = (
        TokenBucket(endpoint.requests_per_second)
        if endpoint.requests_per_second
        else None
    )
    fingerprint = corpus.fingerprint

    def dispatch(instance: BenchmarkInstance) -> tuple[BenchmarkInstance, QueryResult]:
        prompt = build_prompt(instance, corpus)
        reference = corpus.reference_record(instance.target)
        result = query(
            endpoint,
            prompt,
            instance.instance_id,
            reference=reference,
            corpus_root=corpus.root,
            bucket=bucket,
        )
        return instance, result

    n_failed = 0
    with open(log_path, "a", encoding="utf-8") as fh:
        if endpoint.max_in_flight == 1:
            results = map(dispatch, todo)
            for instance, result in results:
                n_failed += _append(fh, instance, result, endpoint, fingerprint)
        else:
            with ThreadPoolExecutor(max_workers=endpoint.max_in_flight) as pool:
                for instance, result in pool.map(dispatch, todo):
                    n_failed += _append(fh, instance, result, endpoint, fingerprint)

    return RunStats(
        protocol=protocol,
        endpoint=endpoint.name,
        n_total=len(instances),
        n_skipped=len(instances) - len(todo),
        n_queried=len(todo),
        n_failed=n_failed,
    )


def _append(fh, instance: BenchmarkInstance, result: QueryResult,
            endpoint: ModelEndpoint, fingerprint: dict) -> int:
    parsed = {
        name: value
        for name, value in result.parsed.as_dict().items()
        if name != "parse_ok" and value is not None
    }
    row = {
        "instance_id": result.instance_id,
        "protocol": instance.protocol,
        "endpoint": endpoint.name,
        "material": instance.target.material,
        "radius_nm": instance.target.radius_nm,
        "pose": instance.target.pose,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "latency_s": result.latency_s,
        "attempts": result.attempts,
        "raw_response": result.raw_response,
        "parse_ok": result.parsed.parse_ok,
        "parsed": parsed,
        "corpus_fingerprint": fingerprint,
    }
    fh.write(json.dumps(row, sort_keys=True) + "\n")
    fh.flush()
    return 0 if result.raw_response is not None else 1


def read_run_log(log_path: str | Path) -> list[dict]:
    rows = []
    with open(log_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    rows.sort(key=lambda r: r["instance_id"])
    return rows


# ---------------------------------------------------------------------------
# Scoring

@dataclass
class ScoreRow:
    instance_id: str
    protocol: str
    endpoint: str
    material: str
    radius_nm: float
    pose: int
    parse_ok: bool
    percent_errors: dict[str, float]
    angle_errors: dict[str, float]
    loss: float | None           # per-example mean over the protocol's set
    space_group_match: int
    s_phys: float
    s_hall: float
    s_presence: float
    s_type: float
    s_format: float
    latency_s: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def score_row(row: dict, corpus: CorpusIndex, parse) -> ScoreRow:
    ref = EntryRef(row["material"], row["radius_nm"], row["pose"])
    reference = corpus.reference_record(ref)
    pred: PredictionRecord = parse(row["raw_response"])
    percents, angles = property_errors(pred, reference)

    loss_properties = (
        SE_LOSS_PROPERTIES if row["protocol"] == "SE" else CE_LOSS_PROPERTIES
    )
    subset = {k: v for k, v in percents.items() if k in loss_properties}
    loss = per_example_mean(subset) if subset else None

    presence, s_type, s_format = format_faithfulness(pred, reference)
    return ScoreRow(
        instance_id=row["instance_id"],
        protocol=row["protocol"],
        endpoint=row["endpoint"],
        material=row["material"],
        radius_nm=row["radius_nm"],
        pose=row["pose"],
        parse_ok=pred.parse_ok,
        percent_errors=percents,
        angle_errors=angles,
        loss=loss,
        space_group_match=space_group_match(pred.space_group, reference.space_group),
        s_phys=physics_compliance(pred, reference),
        s_hall=hallucination_score(pred, reference),
        s_presence=presence,
        s_type=s_type,
        s_format=s_format,
        latency_s=row["latency_s"],
    )


def score_run(
    corpus: CorpusIndex, log_path: str | Path
) -> tuple[list[ScoreRow], AggregateError]:
    """Score every logged result against the corpus reference records."""
    rows = read_run_log(log_path)
    if not rows:
        raise RunError(f"run log {log_path} is empty")
    protocols = {r["protocol"] for r in rows}
    if len(protocols) != 1:
        raise RunError(f"run log mixes protocols: {sorted(protocols)}")
    fingerprints = {json.dumps(r["corpus_fingerprint"], sort_keys=True) for r in rows}
    current = json.dumps(corpus.fingerprint, sort_keys=True)
    if fingerprints != {current}:
        raise RunError(
            "run log was produced against a different corpus than the one "
            "being scored; regenerate or point at the original corpus"
        )
    scored = [score_row(r, corpus, parse_response) for r in rows]
    agg = aggregate([s.loss for s in scored], protocols.pop())
    return scored, agg


def write_scores(scored: list[ScoreRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in scored:
            fh.write(row.to_json() + "\n")


def read_scores(path: str | Path) -> list[ScoreRow]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                raw = json.loads(line)
                out.append(ScoreRow(**raw))
    out.sort(key=lambda s: s.instance_id)
    return out
