import pytest
from fastapi.testclient import TestClient

from main import app


@pytest.fixture
def client(db):
    with TestClient(app) as client:
        yield client


def test_root(client):
    response = client.get("/")
    assert response.status_code == 200
    assert "Nodal Lab" in response.json()["message"]


def test_covariance_table(client):
    response = client.get("/kernel/covariance", params={"n": 2, "alpha": 1.0, "r_max": 1.0, "step": 0.5})
    assert response.status_code == 200
    rows = response.json()["rows"]
    assert [row["r"] for row in rows] == [0.0, 0.5, 1.0]
    assert rows[0]["B"] == 1.0


@pytest.mark.parametrize("params", [
    {"r_max": 1000.0, "step": 0.25},
    {"n": 4},
    {"alpha": 0.5, "method": "closed"},
])
def test_covariance_table_rejects_bad_requests(client, params):
    assert client.get("/kernel/covariance", params=params).status_code == 400


def test_covariance_table_unknown_method(client):
    assert client.get("/kernel/covariance", params={"method": "series"}).status_code == 422


def test_ns_constant(client):
    response = client.get("/kernel/ns-constant-1d", params={"alpha": 0.0})
    assert response.json()["beta"] == pytest.approx(0.5773503, abs=1e-7)
    assert client.get("/kernel/ns-constant-1d", params={"alpha": 2.0}).status_code == 400


def test_create_and_fetch_a_run(client):
    response = client.post("/runs/", json={"experiment": "measure-omega-2d", "ell": 8, "samples": 2})
    assert response.status_code == 200
    manifest = response.json()
    assert manifest["status"] == "succeeded"
    assert manifest["config"]["workers"] == 1

    run = client.get(f"/runs/{manifest['run_id']}").json()
    assert run["experiment"] == "measure-omega-2d"
    assert run["summary"]["num_samples"] == 2

    measure = client.get(f"/runs/{manifest['run_id']}/measure").json()
    assert measure[-1]["unresolved"] is True
    assert sum(row["mass"] for row in measure) == pytest.approx(1.0)

    listed = client.get("/runs/").json()
    assert [r["id"] for r in listed] == [manifest["run_id"]]


def test_unknown_run(client):
    assert client.get("/runs/missing").status_code == 404
    assert client.get("/runs/missing/measure").status_code == 404


def test_invalid_run_config(client):
    response = client.post("/runs/", json={"experiment": "measure-omega-2d", "resolution": 4})
    assert response.status_code == 400
    assert isinstance(response.json()["detail"], list)


def test_too_many_samples_over_http(client):
    response = client.post("/runs/", json={"experiment": "kacrice-1d", "T": 20, "samples": 500})
    assert response.status_code == 400


def test_run_failure_is_reported(client):
    response = client.post("/runs/", json={"experiment": "barrier-demo", "tree": "()()"})
    assert response.status_code == 400
    runs = client.get("/runs/").json()
    assert runs[0]["status"] == "failed"


def test_realize_barrier(client):
    response = client.post("/barriers/realize", json={"tree": "(())"})
    assert response.status_code == 200
    body = response.json()
    assert body["canonical_code"] == "(())"
    assert len(body["lattice_points"]) == len(body["signs"])
    assert set(body["signs"]) <= {-1, 1}


@pytest.mark.parametrize("payload, status", [
    ({"tree": "(("}, 400),
    ({"tree": "(" * 17 + ")" * 17}, 400),
    ({"tree": "()", "epsilon": 0.9}, 422),
])
def test_realize_barrier_rejects_bad_requests(client, payload, status):
    assert client.post("/barriers/realize", json=payload).status_code == status
