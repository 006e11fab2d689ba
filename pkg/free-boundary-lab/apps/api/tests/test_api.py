from __future__ import annotations

import io
import json
import zipfile

from fastapi.testclient import TestClient

from app.config import settings
from app.main import app


client = TestClient(app)

AC = {
    "domain": {"shape": "interval", "size": [0.0, 1.0], "resolution": 32},
    "phi": {"family": "linear", "lam": 4.0},
    "output": {"name": "api-ac"},
}


def events(text):
    out = []
    for block in text.strip().split("\n\n"):
        lines = dict(line.split(": ", 1) for line in block.splitlines())
        out.append((lines["event"], json.loads(lines["data"])))
    return out


def test_health():
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json()["ok"] is True


def test_resolution_limit(monkeypatch):
    monkeypatch.setattr(settings, "max_api_resolution", 64)
    body = {**AC, "domain": {**AC["domain"], "resolution": 128}}
    assert client.post("/scenarios", json=body).status_code == 422


def test_invalid_scenario_rejected():
    body = {**AC, "domain": {**AC["domain"], "resolution": 4}}
    assert client.post("/scenarios", json=body).status_code == 422


def test_scenario_stream_and_bundle(runs_dir):
    r = client.post("/scenarios", json=AC)
    assert r.status_code == 200
    stream = events(r.text)
    kinds = [k for k, _ in stream]
    assert kinds[0] == "status" and kinds[-1] == "status"
    assert stream[-1][1]["message"] == "completed"
    assert "result" in kinds
    run_id = stream[0][1]["run_id"]
    nodes = [d["node"] for k, d in stream if k == "node" and d["phase"] == "start"]
    assert nodes == ["solve", "fixed_point", "analyze", "blowup", "properties", "bundle"]

    assert run_id in client.get("/runs").json()["runs"]
    z = client.get(f"/runs/{run_id}/bundle")
    assert z.status_code == 200
    names = zipfile.ZipFile(io.BytesIO(z.content)).namelist()
    assert "field.txt" in names and "manifest.txt" in names


def test_unknown_run_is_404(runs_dir):
    assert client.get("/runs/nope/bundle").status_code == 404
    assert client.get("/runs").json() == {"runs": []}


def test_oracle_1d():
    r = client.post("/oracle/1d", json={"interior_nodes": 4, "phi": {"family": "linear", "lam": 4.0}})
    assert r.status_code == 200
    data = r.json()
    assert len(data["pattern"]) == 4
    assert abs(data["direct"] - data["energy"]) < 1e-6
    assert data["oracle_csv"].startswith("pattern,energy,feasible")


def test_nonexistence_endpoint():
    r = client.post("/repro/nonexistence", json={"resolutions": [8]})
    assert r.status_code == 200
    (row,) = r.json()["rows"]
    assert abs(row["energy"] - row["analytic"]) < 1e-3


def test_lab_errors_map_to_422():
    r = client.post("/repro/nonexistence", json={"resolutions": [4]})
    assert r.status_code == 422
