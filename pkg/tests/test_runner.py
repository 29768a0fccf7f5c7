import json

import pytest

from xtalbench.gateway import BUILTIN_MOCKS
from xtalbench.runner import (
    RunError,
    build_instances,
    execute_run,
    read_run_log,
    score_run,
    write_scores,
    read_scores,
)


@pytest.fixture(scope="module")
def oracle_se_log(small_corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("runs") / "oracle_se.jsonl"
    execute_run(small_corpus, "SE", BUILTIN_MOCKS["oracle"], path)
    return path


class TestExecuteRun:
    def test_full_run_covers_all_instances(self, small_corpus, oracle_se_log):
        instances = build_instances(small_corpus, "SE")
        rows = read_run_log(oracle_se_log)
        assert len(rows) == len(instances) == 20
        assert {r["instance_id"] for r in rows} == {
            i.instance_id for i in instances
        }

    def test_resume_skips_completed_ids(self, small_corpus, tmp_path):
        path = tmp_path / "log.jsonl"
        execute_run(small_corpus, "SE", BUILTIN_MOCKS["oracle"], path)
        lines = path.read_text().splitlines()
        # Simulate an interrupt at 50%.
        path.write_text("\n".join(lines[:10]) + "\n")
        kept = {json.loads(l)["instance_id"] for l in lines[:10]}
        stats = execute_run(small_corpus, "SE", BUILTIN_MOCKS["oracle"], path)
        assert stats.n_skipped == 10
        assert stats.n_queried == 10
        rows = read_run_log(path)
        assert len(rows) == 20
        queried = {r["instance_id"] for r in rows} - kept
        assert len(queried) == 10

    def test_no_resume_restarts(self, small_corpus, tmp_path):
        path = tmp_path / "log.jsonl"
        execute_run(small_corpus, "SE", BUILTIN_MOCKS["oracle"], path)
        stats = execute_run(
            small_corpus, "SE", BUILTIN_MOCKS["oracle"], path, resume=False
        )
        assert stats.n_queried == 20
        assert len(read_run_log(path)) == 20

    def test_null_endpoint_marks_failures(self, small_corpus, tmp_path):
        path = tmp_path / "null.jsonl"
        stats = execute_run(small_corpus, "SE", BUILTIN_MOCKS["null"], path)
        assert stats.n_failed == 20

    def test_concurrent_dispatch_covers_all_instances(self, small_corpus, tmp_path):
        import dataclasses

        endpoint = dataclasses.replace(BUILTIN_MOCKS["oracle"], max_in_flight=4)
        path = tmp_path / "parallel.jsonl"
        stats = execute_run(small_corpus, "SE", endpoint, path)
        assert stats.n_queried == 20
        rows = read_run_log(path)
        assert len({r["instance_id"] for r in rows}) == 20


class TestScoreRun:
    def test_oracle_run_is_fixed_point(self, small_corpus, oracle_se_log):
        scored, agg = score_run(small_corpus, oracle_se_log)
        assert agg.error == 0.0
        assert agg.failure_rate == 0.0
        for row in scored:
            assert row.loss == 0.0
            assert row.s_phys == 1.0
            assert row.s_hall == 0.0
            assert row.space_group_match == 1
            assert (row.s_presence, row.s_type, row.s_format) == (1.0, 1.0, 1.0)

    def test_scaled_run_hits_tier_values(self, small_corpus, tmp_path):
        path = tmp_path / "scaled.jsonl"
        execute_run(small_corpus, "SE", BUILTIN_MOCKS["scaled15"], path)
        scored, agg = score_run(small_corpus, path)
        for row in scored:
            assert row.s_phys == 0.9
            assert row.s_hall == 0.5
        assert agg.error == pytest.approx(15.0, abs=1e-9)

    def test_null_run_hallucinates_everywhere(self, small_corpus, tmp_path):
        path = tmp_path / "null.jsonl"
        execute_run(small_corpus, "CE", BUILTIN_MOCKS["null"], path)
        scored, agg = score_run(small_corpus, path)
        assert all(row.s_hall == 1.0 for row in scored)
        assert all(row.loss is None for row in scored)
        assert agg.failure_rate == 1.0

    def test_mixed_corpus_refused(self, small_corpus, oracle_se_log, tmp_path):
        import json as json_mod

        rows = [json_mod.loads(l) for l in open(oracle_se_log)]
        for row in rows:
            row["corpus_fingerprint"] = {"materials": ["other"]}
        path = tmp_path / "alien.jsonl"
        with open(path, "w") as fh:
            for row in rows:
                fh.write(json_mod.dumps(row) + "\n")
        with pytest.raises(RunError, match="different corpus"):
            score_run(small_corpus, path)

    def test_scores_round_trip(self, small_corpus, oracle_se_log, tmp_path):
        scored, _ = score_run(small_corpus, oracle_se_log)
        path = tmp_path / "scores.jsonl"
        write_scores(scored, path)
        assert read_scores(path) == sorted(scored, key=lambda s: s.instance_id)
