import copy
import time

import pytest

# Fixture data comes from the installed service package; the client itself
# talks to the service only over HTTP.
from plsearch.fixtures import reference_rollout
from plsearch_client import (
    BadRequestError,
    BatchTooLargeError,
    Client,
    ClientConfig,
    RetryExhaustedError,
)
from conftest import free_port


def _client(base_url: str, **overrides) -> Client:
    defaults = {"base_url": base_url, "timeout_seconds": 10, "backoff_seconds": 0.01}
    defaults.update(overrides)
    return Client(ClientConfig(**defaults))


# ---------------------------------------------------------------------------
# Against the live service


def test_score_batch_round_trips_reference(live_server):
    client = _client(live_server)
    results = client.score_batch([reference_rollout().to_dict()])
    assert len(results) == 1
    assert results[0]["id"] == "ref-ship-designer"
    assert results[0]["breakdown"]["r_total"] == 1.0
    assert results[0]["breakdown"]["s_align"] > 0.25


def test_score_batch_with_config_override(live_server):
    client = _client(live_server)
    rollout = dict(reference_rollout().to_dict(), golden_answers=["something else"])
    strict = client.score_batch([rollout], config={"delta": 0.9})[0]
    assert strict["breakdown"]["r_ans"] == 0.0
    assert strict["breakdown"]["r_plan"] < 1.0  # 0.69 alignment no longer clears delta


def test_score_batch_order_preserved(live_server):
    client = _client(live_server)
    rollouts = [dict(reference_rollout().to_dict(), id=f"r{i}") for i in range(5)]
    results = client.score_batch(rollouts)
    assert [r["id"] for r in results] == [f"r{i}" for i in range(5)]


def test_empty_batch_fails_client_side(live_server):
    client = _client(live_server)
    with pytest.raises(ValueError):
        client.score_batch([])
    with pytest.raises(ValueError):
        client.filter_remote([])


def test_oversized_batch_maps_to_batch_too_large(live_server):
    client = _client(live_server)
    rollouts = [dict(reference_rollout().to_dict(), id=f"big{i}") for i in range(17)]
    with pytest.raises(BatchTooLargeError):
        client.score_batch(rollouts)


def test_schema_violation_maps_to_bad_request(live_server):
    client = _client(live_server)
    with pytest.raises(BadRequestError):
        client.score_batch([{"id": "x", "golden_answers": [], "output_text": ""}])


def test_filter_remote_and_determinism(live_server):
    client = _client(live_server)
    rollouts = [dict(reference_rollout().to_dict(), id=f"f{i}") for i in range(4)]
    first = client.filter_remote(rollouts, sampler={"target_count": 2})
    second = client.filter_remote(rollouts, sampler={"target_count": 2})
    assert first == second
    selected_ids, report = first
    assert len(selected_ids) == 2
    assert report["survivors"] == 4


def test_payloads_not_mutated(live_server):
    client = _client(live_server)
    rollouts = [reference_rollout().to_dict()]
    snapshot = copy.deepcopy(rollouts)
    client.score_batch(rollouts, config={"lambda_fmt": 0.2})
    client.filter_remote(rollouts, weights=None, sampler={"target_count": 1})
    assert rollouts == snapshot


# ---------------------------------------------------------------------------
# Retry behavior against the scripted stub


def _ok_score_payload():
    return {
        "results": [
            {"id": "stub", "breakdown": {"r_total": 1.0}, "diagnostics": []},
        ]
    }


def _stub_rollout():
    return {"id": "stub", "question": "q", "golden_answers": ["a"], "output_text": ""}


def test_retries_exactly_once_on_injected_503(stub_server):
    server, url = stub_server([(503, {"error": "busy"}), (200, _ok_score_payload())])
    client = _client(url)
    results = client.score_batch([_stub_rollout()])
    assert results[0]["breakdown"]["r_total"] == 1.0
    assert len(server.requests) == 2  # one failure, one retry, no more


def test_400_is_typed_and_never_retried(stub_server):
    server, url = stub_server([(400, {"error": "invalid request"})])
    client = _client(url, max_retries=3)
    with pytest.raises(BadRequestError):
        client.score_batch([_stub_rollout()])
    assert len(server.requests) == 1


def test_413_is_typed_and_never_retried(stub_server):
    server, url = stub_server([(413, {"error": "batch too large"})])
    client = _client(url, max_retries=3)
    with pytest.raises(BatchTooLargeError):
        client.score_batch([_stub_rollout()])
    assert len(server.requests) == 1


def test_retry_exhaustion_carries_last_status(stub_server):
    server, url = stub_server([(503, {"error": "busy"})])
    client = _client(url, max_retries=2)
    with pytest.raises(RetryExhaustedError) as exc:
        client.score_batch([_stub_rollout()])
    assert exc.value.last_status == 503
    assert len(server.requests) == 3  # initial try plus two retries


def test_transport_failure_retries_then_raises():
    url = f"http://127.0.0.1:{free_port()}"  # nothing listening
    client = _client(url, max_retries=1, timeout_seconds=1)
    start = time.time()
    with pytest.raises(RetryExhaustedError) as exc:
        client.score_batch([_stub_rollout()])
    assert exc.value.last_status is None
    assert time.time() - start < 10  # bounded by retries and timeout


def test_exponential_backoff_schedule(stub_server):
    server, url = stub_server(
        [(503, {"error": "busy"}), (503, {"error": "busy"}), (200, _ok_score_payload())]
    )
    client = _client(url, max_retries=2, backoff_seconds=0.05)
    start = time.time()
    client.score_batch([_stub_rollout()])
    elapsed = time.time() - start
    assert elapsed >= 0.05 + 0.10  # 0.05 * 2**0 + 0.05 * 2**1
    assert len(server.requests) == 3


def test_unexpected_5xx_is_not_retried(stub_server):
    server, url = stub_server([(500, {"error": "boom"})])
    client = _client(url, max_retries=3)
    with pytest.raises(Exception) as exc:
        client.score_batch([_stub_rollout()])
    assert not isinstance(exc.value, RetryExhaustedError)
    assert len(server.requests) == 1


def test_request_body_matches_service_schema(stub_server):
    server, url = stub_server([(200, _ok_score_payload())])
    client = _client(url)
    client.score_batch([_stub_rollout()], config={"delta": 0.5})
    sent = server.requests[0]
    assert set(sent) == {"rollouts", "config"}
    assert sent["config"] == {"delta": 0.5}
    assert sent["rollouts"] == [_stub_rollout()]


def test_config_validation():
    with pytest.raises(ValueError):
        ClientConfig(base_url="http://x", timeout_seconds=0)
    with pytest.raises(ValueError):
        ClientConfig(base_url="http://x", max_retries=-1)


def test_default_base_url_honors_env(monkeypatch):
    monkeypatch.setenv("PLSEARCH_ADDR", "127.0.0.1:9999")
    assert ClientConfig().base_url == "http://127.0.0.1:9999"
    monkeypatch.setenv("PLSEARCH_ADDR", "https://scorer.internal:8443")
    assert ClientConfig().base_url == "https://scorer.internal:8443"
