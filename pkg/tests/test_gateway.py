import random
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xtalbench.corpus import CorpusError
from xtalbench.gateway import (
    BUILTIN_MOCKS,
    GatewayError,
    ModelEndpoint,
    TokenBucket,
    build_prompt,
    load_endpoints,
    mock_response,
    parse_response,
    query,
)
from xtalbench.protocols import BenchmarkInstance, EntryRef, build_ce_instances, build_se_instances


@pytest.fixture(scope="module")
def se_instance(small_corpus):
    return build_se_instances(small_corpus.shape())[0]


@pytest.fixture(scope="module")
def ce_instance(small_corpus):
    return build_ce_instances(small_corpus.shape())[0]


class TestBuildPrompt:
    def test_se_context_block_count(self, small_corpus, se_instance):
        # Two radii per material: (2 - 1) x 5 context examples.
        prompt = build_prompt(se_instance, small_corpus)
        assert len(prompt.context) == 5

    def test_ce_context_excludes_target_material(self, small_corpus, ce_instance):
        prompt = build_prompt(ce_instance, small_corpus)
        assert len(prompt.context) == 10  # one other material x 2 radii x 5
        target = ce_instance.target.material
        for key, _, record_text in prompt.context:
            assert not key.startswith(f"{target}/")
            assert target not in record_text

    def test_deterministic_bytes(self, small_corpus, se_instance):
        first = build_prompt(se_instance, small_corpus)
        second = build_prompt(se_instance, small_corpus)
        assert first.to_bytes() == second.to_bytes()
        assert first.digest() == second.digest()

    def test_query_block_has_coordinates_only(self, small_corpus, se_instance):
        prompt = build_prompt(se_instance, small_corpus)
        assert "XYZ coordinates" in prompt.query
        assert "density" not in prompt.query  # no annotation leakage
        first_atom = small_corpus.xyz_text(se_instance.target).splitlines()[2]
        assert first_atom in prompt.query

    def test_missing_corpus_entry_raises(self, small_corpus):
        bogus = BenchmarkInstance(
            protocol="SE",
            target=EntryRef("Au", 0.7, 0),
            context=(EntryRef("Au", 0.9, 0),),
        )
        with pytest.raises(CorpusError):
            build_prompt(bogus, small_corpus)


class TestParseResponse:
    def test_labeled_lines_happy_path(self):
        raw = (
            "n_atoms: 249\n"
            "cell_volume: 6894.58 A^3\n"
            "a: 19.0328 A\n"
            "density: 11.81 g/cm^3\n"
            "space_group: Fm-3m\n"
        )
        pred = parse_response(raw)
        assert pred.parse_ok
        assert pred.n_atoms == 249.0
        assert pred.cell_volume == pytest.approx(6894.58)
        assert pred.a == pytest.approx(19.0328)
        assert pred.density == pytest.approx(11.81)
        assert pred.space_group == "Fm-3m"

    def test_prose_with_single_value(self):
        pred = parse_response("The lattice constant is roughly a = 4.08 Å here.")
        assert pred.parse_ok
        assert pred.a == pytest.approx(4.08)
        assert pred.b is None

    def test_unit_normalization(self):
        pred = parse_response("a_p: 0.408 nm\nb_p: 408 pm\nc_p: 4.08 Angstrom\n")
        assert pred.a_p == pytest.approx(4.08, rel=1e-9)
        assert pred.b_p == pytest.approx(4.08, rel=1e-9)
        assert pred.c_p == pytest.approx(4.08, rel=1e-9)

    def test_volume_units(self):
        pred = parse_response("cell_volume: 6.89458 nm^3")
        assert pred.cell_volume == pytest.approx(6894.58, rel=1e-9)

    def test_json_block_preferred(self):
        raw = 'preamble {"atom count": 57, "density": 3.2, "space group": "P1"} done'
        pred = parse_response(raw)
        assert pred.n_atoms == 57.0
        assert pred.density == 3.2
        assert pred.space_group == "P1"

    def test_negative_values_preserved(self):
        # Non-physical outputs must reach the hallucination rule unclamped.
        pred = parse_response("density: -4.2 g/cm^3")
        assert pred.density == -4.2

    def test_empty_and_none(self):
        assert parse_response("").parse_ok is False
        assert parse_response(None).parse_ok is False
        assert parse_response(None).raw_response is None

    def test_unparseable_has_no_numeric_fields(self):
        pred = parse_response("complete nonsense with no fields")
        assert pred.parse_ok is False
        assert pred.non_null_fields() == set()

    def test_aliases(self):
        pred = parse_response("number of atoms: 12\nrho: 2.5\nalpha: 90.1 deg\n")
        assert pred.n_atoms == 12.0
        assert pred.density == 2.5
        assert pred.alpha_p == pytest.approx(90.1)

    @given(st.binary(max_size=256))
    @settings(max_examples=500, deadline=None)
    def test_totality_on_random_bytes(self, blob):
        pred = parse_response(blob.decode("latin-1"))
        assert pred.raw_response is not None

    def test_totality_on_random_unicode(self):
        rng = random.Random(99)
        for _ in range(2000):
            text = "".join(
                chr(rng.randrange(1, 0x500)) for _ in range(rng.randrange(0, 120))
            )
            parse_response(text)  # must not raise


class TestMocks:
    def test_oracle_echoes_reference(self, small_corpus, se_instance):
        reference = small_corpus.reference_record(se_instance.target)
        raw = mock_response("oracle", None, None, reference, "id")
        pred = parse_response(raw)
        assert pred.n_atoms == reference.n_atoms
        assert pred.density == reference.density
        assert pred.space_group == reference.space_group

    def test_scaled_mock_multiplies_numerics(self, small_corpus, se_instance):
        reference = small_corpus.reference_record(se_instance.target)
        raw = mock_response("scaled", "1.15", None, reference, "id")
        pred = parse_response(raw)
        assert pred.a == 1.15 * reference.a
        assert pred.n_atoms == 1.15 * reference.n_atoms
        assert pred.space_group == reference.space_group

    def test_null_mock_absent(self):
        assert mock_response("null", None, None, None, "id") is None

    def test_garbage_and_noisy_deterministic_per_instance(self, small_corpus, se_instance):
        reference = small_corpus.reference_record(se_instance.target)
        assert mock_response("garbage", "7", None, None, "a") == mock_response(
            "garbage", "7", None, None, "a"
        )
        assert mock_response("noisy", "7", None, reference, "a") == mock_response(
            "noisy", "7", None, reference, "a"
        )
        assert mock_response("noisy", "7", None, reference, "a") != mock_response(
            "noisy", "7", None, reference, "b"
        )

    def test_unknown_mock_kind(self):
        with pytest.raises(GatewayError):
            mock_response("quantum", None, None, None, "id")


class TestQuery:
    def test_latency_is_winning_attempt_wall_time(self):
        endpoint = ModelEndpoint(name="sleepy", max_attempts=1)

        def transport(prompt):
            time.sleep(0.05)
            return "a: 1.0"

        result = query(endpoint, None, "id", transport_override=transport)
        assert 0.05 <= result.latency_s < 0.5
        assert result.attempts == 1

    def test_retries_with_backoff_then_succeeds(self):
        endpoint = ModelEndpoint(name="flaky", max_attempts=3, backoff_base_s=0.001)
        calls = {"n": 0}

        def transport(prompt):
            calls["n"] += 1
            if calls["n"] < 3:
                raise ConnectionError("boom")
            time.sleep(0.02)
            return "a: 1.0"

        result = query(endpoint, None, "id", transport_override=transport)
        assert result.attempts == 3
        assert result.raw_response == "a: 1.0"
        # Cumulative retry time is excluded from the reported latency.
        assert 0.02 <= result.latency_s < 0.04

    def test_exhausted_retries_yield_absent_response(self):
        endpoint = ModelEndpoint(name="dead", max_attempts=2, backoff_base_s=0.001)

        def transport(prompt):
            raise ConnectionError("always down")

        result = query(endpoint, None, "id", transport_override=transport)
        assert result.raw_response is None
        assert result.parsed.parse_ok is False
        assert result.attempts == 2


class TestEndpointConfig:
    def test_invariants(self):
        with pytest.raises(GatewayError):
            ModelEndpoint(name="bad", max_in_flight=0)
        with pytest.raises(GatewayError):
            ModelEndpoint(name="bad", timeout_s=0)

    def test_builtin_mocks_present(self):
        assert {"oracle", "scaled15", "null", "garbage", "noisy"} <= set(BUILTIN_MOCKS)

    def test_load_endpoints_merges_over_builtins(self, tmp_path):
        path = tmp_path / "endpoints.yaml"
        path.write_text(
            "prod:\n"
            "  transport: http\n"
            "  url: https://example.invalid/v1/chat\n"
            "  model_id: test-model\n"
            "  api_key_env: TEST_KEY\n"
            "  max_in_flight: 4\n"
        )
        endpoints = load_endpoints(str(path))
        assert "oracle" in endpoints
        assert endpoints["prod"].max_in_flight == 4
        assert endpoints["prod"].transport == "http"

    def test_bad_endpoint_config_rejected(self, tmp_path):
        path = tmp_path / "endpoints.yaml"
        path.write_text("prod:\n  nonsense_field: 1\n")
        with pytest.raises(GatewayError, match="prod"):
            load_endpoints(str(path))


def test_token_bucket_enforces_rate():
    bucket = TokenBucket(rate=200.0, capacity=1.0)
    start = time.perf_counter()
    for _ in range(5):
        bucket.acquire()
    elapsed = time.perf_counter() - start
    assert elapsed >= 0.015  # 4 refills at 5 ms each
