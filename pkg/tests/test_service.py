import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from tracesmith.data import Rect, generate_toy_dataset, parse_dataset, serialize_dataset
from tracesmith.metrics import register_metric, unregister_metric
from tracesmith.service import create_app

UNIT = Rect(0.0, 0.0, 1.0, 1.0)


@pytest.fixture
def toy_text():
    return serialize_dataset(generate_toy_dataset(120, UNIT, seed=1))


@pytest.fixture
def client(tmp_path):
    app = create_app(tmp_path / "storage", max_workers=2)
    with TestClient(app) as c:
        yield c
    app.state.manager.shutdown()


def upload(client, text):
    response = client.post("/api/datasets", content=text.encode("utf-8"))
    assert response.status_code == 200, response.text
    return response.json()


def submit_job(client, dataset_id, **overrides):
    spec = {
        "dataset_id": dataset_id,
        "epsilon": 1.0,
        "metric": "trip",
        "grid_n": 2,
        "trials": 1,
        "explorations": 3,
        "iterations": 2,
        "seed": 0,
    }
    spec.update(overrides)
    response = client.post("/api/jobs", json=spec)
    assert response.status_code == 200, response.text
    return response.json()["job_id"]


def collect_events(client, job_id):
    events = []
    with client.stream("GET", f"/api/jobs/{job_id}/events") as response:
        assert response.status_code == 200
        for line in response.iter_lines():
            if line.startswith("data: "):
                events.append(json.loads(line[len("data: "):]))
    return events


def wait_for_state(client, job_id, states=("done", "failed"), timeout=120.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/api/jobs/{job_id}").json()
        if status["state"] in states:
            return status
        time.sleep(0.1)
    raise TimeoutError(f"job {job_id} did not reach {states}")


class TestDatasets:
    def test_upload_reports_cardinality_and_bbox(self, client, toy_text):
        payload = upload(client, toy_text)
        assert payload["cardinality"] == 120
        assert set(payload["bbox"]) == {"min_x", "min_y", "max_x", "max_y"}

    def test_upload_is_idempotent_and_immutable(self, client, toy_text):
        first = upload(client, toy_text)
        second = upload(client, toy_text)
        assert first["dataset_id"] == second["dataset_id"]

    def test_malformed_upload_rejected(self, client):
        response = client.post("/api/datasets", content=b"not,a;trace")
        assert response.status_code == 400

    def test_oversized_upload_rejected(self, tmp_path, toy_text):
        app = create_app(tmp_path / "s2", upload_limit=64)
        with TestClient(app) as small_client:
            response = small_client.post("/api/datasets", content=toy_text.encode())
        assert response.status_code == 413
        app.state.manager.shutdown()


class TestJobs:
    def test_unknown_dataset_rejected(self, client):
        response = client.post(
            "/api/jobs",
            json={"dataset_id": "dmissing", "epsilon": 1.0, "metric": "trip"},
        )
        assert response.status_code == 404

    def test_invalid_spec_names_fields(self, client, toy_text):
        dataset_id = upload(client, toy_text)["dataset_id"]
        response = client.post(
            "/api/jobs", json={"dataset_id": dataset_id, "epsilon": -1.0}
        )
        assert response.status_code == 422
        assert "epsilon" in response.text

    def test_unknown_metric_rejected(self, client, toy_text):
        dataset_id = upload(client, toy_text)["dataset_id"]
        response = client.post(
            "/api/jobs",
            json={"dataset_id": dataset_id, "epsilon": 1.0, "metric": "bogus"},
        )
        assert response.status_code == 422

    def test_unknown_job_is_404(self, client):
        assert client.get("/api/jobs/jmissing").status_code == 404

    def test_full_job_lifecycle(self, client, toy_text):
        dataset_id = upload(client, toy_text)["dataset_id"]
        job_id = submit_job(client, dataset_id, explorations=3, iterations=2)

        events = collect_events(client, job_id)
        observations = [e for e in events if e["type"] == "observation"]
        assert len(observations) == 5
        assert events[-1]["type"] == "done"
        assert [o["iteration"] for o in observations] == list(range(5))
        assert [o["phase"] for o in observations] == ["exploration"] * 3 + ["optimization"] * 2

        status = client.get(f"/api/jobs/{job_id}").json()
        assert status["state"] == "done"
        assert status["progress"] == {"completed": 5, "total": 5}

        result = client.get(f"/api/jobs/{job_id}/result").json()
        assert result["job_id"] == job_id
        assert len(result["best_weights"]) == 4
        assert len(result["observations"]) == 5
        assert set(result["report"]) >= {"query_error", "trip_error"}
        assert result["synthetic"] == f"/api/jobs/{job_id}/synthetic"
        assert result["ledger"]["released_epsilon"] == 1.0
        # one ledger entry per trial plus the final clean synthesis
        assert len(result["ledger"]["entries"]) == 6

        synthetic = client.get(f"/api/jobs/{job_id}/synthetic")
        assert synthetic.status_code == 200
        d_syn = parse_dataset(synthetic.text)
        assert d_syn.cardinality == 120

    def test_late_attach_replays_history(self, client, toy_text):
        dataset_id = upload(client, toy_text)["dataset_id"]
        job_id = submit_job(client, dataset_id)
        wait_for_state(client, job_id)
        events = collect_events(client, job_id)
        assert len([e for e in events if e["type"] == "observation"]) == 5
        assert events[-1]["type"] == "done"

    def test_two_consumers_see_identical_streams(self, client, toy_text):
        dataset_id = upload(client, toy_text)["dataset_id"]
        job_id = submit_job(client, dataset_id)
        results = {}

        def consume(tag):
            results[tag] = collect_events(client, job_id)

        threads = [threading.Thread(target=consume, args=(i,)) for i in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=120)
        assert results[0] == results[1]

    def test_stats_conflict_while_running(self, client, toy_text):
        blocker = threading.Event()

        def stalling_metric(d, syn, config):
            blocker.wait(timeout=30)
            return 0.0

        register_metric("stall", stalling_metric)
        try:
            dataset_id = upload(client, toy_text)["dataset_id"]
            job_id = submit_job(client, dataset_id, metric="stall", explorations=2, iterations=0)
            response = client.get(f"/api/jobs/{job_id}/stats/heatmap")
            assert response.status_code == 409
            response = client.get(f"/api/jobs/{job_id}/result")
            assert response.status_code == 409
        finally:
            blocker.set()
            wait_for_state(client, job_id)
            unregister_metric("stall")

    def test_failed_job_returns_status_document(self, client, toy_text):
        def broken_metric(d, syn, config):
            raise RuntimeError("deliberate metric failure")

        register_metric("broken", broken_metric)
        try:
            dataset_id = upload(client, toy_text)["dataset_id"]
            job_id = submit_job(client, dataset_id, metric="broken", explorations=5, iterations=0)
            status = wait_for_state(client, job_id)
            assert status["state"] == "failed"

            result = client.get(f"/api/jobs/{job_id}/result").json()
            assert result["state"] == "failed"
            assert "deliberate metric failure" in result["error"]
            assert "best_weights" not in result

            events = collect_events(client, job_id)
            assert events[-1]["type"] == "failed"
            assert client.get(f"/api/jobs/{job_id}/stats/heatmap").status_code == 409
        finally:
            unregister_metric("broken")


class TestStats:
    @pytest.fixture
    def done_job(self, client, toy_text):
        dataset_id = upload(client, toy_text)["dataset_id"]
        job_id = submit_job(client, dataset_id)
        wait_for_state(client, job_id)
        return job_id

    def test_heatmap_shape_and_mass(self, client, toy_text, done_job):
        payload = client.get(f"/api/jobs/{done_job}/stats/heatmap?bins=10").json()
        real = payload["real"]
        assert len(real) == 10 and all(len(row) == 10 for row in real)
        total_points = len(parse_dataset(toy_text).point_array)
        assert sum(sum(row) for row in real) == total_points

    def test_heatmap_single_bin(self, client, toy_text, done_job):
        payload = client.get(f"/api/jobs/{done_job}/stats/heatmap?bins=1").json()
        total_points = len(parse_dataset(toy_text).point_array)
        assert payload["real"] == [[total_points]]

    def test_tripdist_shape(self, client, done_job):
        payload = client.get(f"/api/jobs/{done_job}/stats/tripdist").json()
        assert len(payload["real"]) == 36
        assert len(payload["real"][0]) == 36
        total = sum(sum(row) for row in payload["real"])
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_distances_shape(self, client, done_job):
        payload = client.get(f"/api/jobs/{done_job}/stats/distances").json()
        assert len(payload["real"]) == 20
        assert len(payload["synthetic"]) == 20
        assert payload["bucket_width"] > 0


class TestRestart:
    def test_completed_results_survive_restart(self, tmp_path, toy_text):
        storage = tmp_path / "persist"
        app = create_app(storage, max_workers=1)
        with TestClient(app) as client:
            dataset_id = upload(client, toy_text)["dataset_id"]
            job_id = submit_job(client, dataset_id)
            wait_for_state(client, job_id)
            original_result = client.get(f"/api/jobs/{job_id}/result").json()
            original_bytes = client.get(f"/api/jobs/{job_id}/synthetic").text
        app.state.manager.shutdown()

        revived = create_app(storage, max_workers=1)
        with TestClient(revived) as client:
            assert client.get(f"/api/jobs/{job_id}").json()["state"] == "done"
            assert client.get(f"/api/jobs/{job_id}/result").json() == original_result
            assert client.get(f"/api/jobs/{job_id}/synthetic").text == original_bytes
            heatmap = client.get(f"/api/jobs/{job_id}/stats/heatmap")
            assert heatmap.status_code == 200
            events = collect_events(client, job_id)
            assert events[-1]["type"] == "done"
        revived.state.manager.shutdown()
