"""HTTP service: session lifecycle, persistence, recovery, concurrency.

All tests run the FastAPI app in-process through TestClient; sessions are
kept tiny (n_init=2, n_max=4) so every experiment simulates in well under
a second.
"""

import json
import threading
import time
import zipfile
from dataclasses import dataclass
from io import BytesIO

import numpy as np
import pytest
from fastapi.testclient import TestClient

import preftune.service as service
from preftune.scenarios import CstrScenario
from preftune.service import MAX_VIEW_POINTS, create_app, downsample_indices

TINY = {"seed": 0, "n_init": 2, "n_max": 4}


def client_for(path):
    return TestClient(create_app(path))


def create(client, scenario="cstr", config=TINY):
    resp = client.post("/sessions", json={"scenario": scenario,
                                          "config": config})
    assert resp.status_code == 201
    return resp.json()


def finish(client, sid):
    """Answer queries with ties until the session reports finished."""
    for _ in range(100):
        view = client.post(f"/sessions/{sid}/preference", json={"b": 0}).json()
        if view["type"] == "finished":
            return view
    raise AssertionError("session never finished")


@pytest.fixture(scope="module")
def finished(tmp_path_factory):
    path = tmp_path_factory.mktemp("svc_finished")
    client = client_for(path)
    view = create(client)
    final = finish(client, view["id"])
    return client, view["id"], final, path


class TestBasics:
    def test_healthz(self, tmp_path):
        resp = client_for(tmp_path).get("/healthz")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok"}

    def test_create_returns_first_query(self, tmp_path):
        view = create(client_for(tmp_path))
        assert view["type"] == "query"
        assert view["progress"] == {"n": 2, "n_max": 4}
        assert [p["index"] for p in view["pair"]] == [0, 1]
        t0, t1 = (p["theta"] for p in view["pair"])
        assert t0 != t1
        for p in view["pair"]:
            assert set(p["theta"]) == {"Ts", "Np", "logQdu"}
            traj = p["trajectory"]
            assert set(traj["signals"]) == {"T", "CA", "Tc"}
            assert len(traj["time"]) == len(traj["signals"]["CA"])
        assert view["display"]["CA_ref"] == 2.0

    def test_distinct_ids(self, tmp_path):
        client = client_for(tmp_path)
        assert create(client)["id"] != create(client)["id"]

    def test_same_seed_same_initial_design(self, tmp_path):
        client = client_for(tmp_path)
        a, b = create(client), create(client)
        assert [p["theta"] for p in a["pair"]] == [p["theta"] for p in b["pair"]]

    def test_unknown_scenario_404(self, tmp_path):
        resp = client_for(tmp_path).post(
            "/sessions", json={"scenario": "warp", "config": {}})
        assert resp.status_code == 404

    def test_invalid_config_400(self, tmp_path):
        client = client_for(tmp_path)
        for config in ({"n_init": 1}, {"bogus": 3}, {"n_max": "many"}):
            resp = client.post("/sessions",
                               json={"scenario": "cstr", "config": config})
            assert resp.status_code == 400, config

    def test_no_tmp_files_left_behind(self, tmp_path):
        client = client_for(tmp_path)
        view = create(client)
        client.post(f"/sessions/{view['id']}/preference", json={"b": 1})
        assert list(tmp_path.glob("*.tmp")) == []
        assert (tmp_path / f"{view['id']}.json").is_file()


class TestQueryAndPreference:
    def test_query_idempotent(self, tmp_path):
        client = client_for(tmp_path)
        sid = create(client)["id"]
        first = client.get(f"/sessions/{sid}/query")
        second = client.get(f"/sessions/{sid}/query")
        assert first.status_code == 200
        assert first.json() == second.json()

    def test_unknown_session_404(self, tmp_path):
        client = client_for(tmp_path)
        assert client.get("/sessions/nope/query").status_code == 404
        assert client.post("/sessions/nope/preference",
                           json={"b": 0}).status_code == 404
        assert client.get("/sessions/nope/export?format=csv").status_code == 404

    def test_preference_advances_progress(self, tmp_path):
        client = client_for(tmp_path)
        view = create(client)
        nxt = client.post(f"/sessions/{view['id']}/preference",
                          json={"b": -1})
        assert nxt.status_code == 200
        body = nxt.json()
        assert body["progress"]["n"] == 3
        # next comparison is always (new sample, incumbent)
        assert body["pair"][0]["index"] == 2
        assert body["pair"][1]["index"] == body["incumbent"]

    def test_invalid_b_400(self, tmp_path):
        client = client_for(tmp_path)
        sid = create(client)["id"]
        assert client.post(f"/sessions/{sid}/preference",
                           json={"b": 2}).status_code == 400
        resp = client.post(f"/sessions/{sid}/preference", json={"b": "left"})
        assert 400 <= resp.status_code < 500

    def test_finished_summary_and_terminal_conflict(self, finished):
        client, sid, final, _ = finished
        assert final["type"] == "finished"
        assert final["progress"] == {"n": 4, "n_max": 4}
        assert "pair" not in final
        assert len(final["history"]) == 4
        assert final["incumbent"]["index"] in range(4)
        assert set(final["incumbent"]["theta"]) == {"Ts", "Np", "logQdu"}
        # terminal state is a stable read and rejects further preferences
        again = client.get(f"/sessions/{sid}/query")
        assert again.json() == final
        resp = client.post(f"/sessions/{sid}/preference", json={"b": 0})
        assert resp.status_code == 409
        assert "no pending query" in resp.json()["detail"]


class TestListing:
    def test_lists_sessions_with_progress(self, tmp_path):
        client = client_for(tmp_path)
        assert client.get("/sessions").json() == {"sessions": []}
        sid = create(client)["id"]
        rows = client.get("/sessions").json()["sessions"]
        assert len(rows) == 1
        assert rows[0]["id"] == sid
        assert rows[0]["scenario"] == "cstr"
        assert rows[0]["n"] == 2 and rows[0]["n_max"] == 4


class TestExport:
    def test_csv_zip_one_file_per_experiment(self, finished):
        client, sid, _, _ = finished
        resp = client.get(f"/sessions/{sid}/export?format=csv")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "application/zip"
        with zipfile.ZipFile(BytesIO(resp.content)) as zf:
            assert sorted(zf.namelist()) == [f"exp_{i:03d}.csv"
                                             for i in range(4)]
            header = zf.read("exp_000.csv").decode().splitlines()[0]
            assert header == "time,T,CA,Tc,T,CA,solve_time"

    def test_session_file_byte_stable(self, finished):
        client, sid, _, _ = finished
        one = client.get(f"/sessions/{sid}/export?format=session-file")
        two = client.get(f"/sessions/{sid}/export?format=session-file")
        assert one.status_code == 200
        assert one.content == two.content
        doc = json.loads(one.content)
        assert doc["version"] == 1
        assert doc["id"] == sid

    def test_session_file_round_trip(self, finished, tmp_path):
        client, sid, final, _ = finished
        blob = client.get(f"/sessions/{sid}/export?format=session-file").content
        (tmp_path / f"{sid}.json").write_bytes(blob)
        reloaded = client_for(tmp_path).get(f"/sessions/{sid}/query")
        assert reloaded.status_code == 200
        assert reloaded.json() == final

    def test_unknown_format_400(self, finished):
        client, sid, _, _ = finished
        resp = client.get(f"/sessions/{sid}/export?format=tsv")
        assert resp.status_code == 400
        assert client.get(f"/sessions/{sid}/export").status_code == 400


class TestRecovery:
    def test_restart_reproduces_pending_query(self, tmp_path):
        first = client_for(tmp_path)
        sid = create(first)["id"]
        first.post(f"/sessions/{sid}/preference", json={"b": 1})
        before = first.get(f"/sessions/{sid}/query").json()

        restarted = client_for(tmp_path)
        after = restarted.get(f"/sessions/{sid}/query").json()
        assert after == before

    def test_session_continues_after_restart(self, tmp_path):
        first = client_for(tmp_path)
        sid = create(first)["id"]
        first.post(f"/sessions/{sid}/preference", json={"b": -1})

        restarted = client_for(tmp_path)
        view = restarted.post(f"/sessions/{sid}/preference",
                              json={"b": 1}).json()
        assert view["progress"]["n"] == 4

    def test_restart_matches_uninterrupted_run(self, tmp_path):
        # wall-clock solve times are the single nondeterministic field;
        # everything else must agree between a straight-through session
        # and one interrupted by a restart
        def scrub(view):
            if isinstance(view, dict):
                return {k: scrub(v) for k, v in view.items()
                        if k not in ("id", "worst_solve_time")}
            if isinstance(view, list):
                return [scrub(v) for v in view]
            return view

        answers = [1, -1, 0]
        straight = client_for(tmp_path / "a")
        sid_a = create(straight)["id"]
        for b in answers:
            view_a = straight.post(f"/sessions/{sid_a}/preference",
                                   json={"b": b}).json()

        broken = client_for(tmp_path / "b")
        sid_b = create(broken)["id"]
        broken.post(f"/sessions/{sid_b}/preference", json={"b": answers[0]})
        broken = client_for(tmp_path / "b")
        for b in answers[1:]:
            view_b = broken.post(f"/sessions/{sid_b}/preference",
                                 json={"b": b}).json()

        assert scrub(view_a) == scrub(view_b)

    def test_unknown_document_version_rejected(self, tmp_path):
        client = client_for(tmp_path)
        sid = create(client)["id"]
        path = tmp_path / f"{sid}.json"
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))

        restarted = client_for(tmp_path)
        resp = restarted.get(f"/sessions/{sid}/query")
        assert resp.status_code == 500
        assert "version" in resp.json()["detail"]


@dataclass(frozen=True)
class _SlowCstr(CstrScenario):
    def run(self, theta):
        time.sleep(0.8)
        return CstrScenario.run(self, theta)


class TestConcurrency:
    def test_one_success_one_conflict(self, tmp_path, monkeypatch):
        monkeypatch.setattr(service, "scenario_by_kind",
                            lambda kind: _SlowCstr())
        app = create_app(tmp_path)
        sid = create(TestClient(app))["id"]

        codes = []
        def post():
            codes.append(TestClient(app).post(
                f"/sessions/{sid}/preference", json={"b": 0}).status_code)

        t1, t2 = threading.Thread(target=post), threading.Thread(target=post)
        t1.start()
        time.sleep(0.25)
        t2.start()
        t1.join()
        t2.join()
        assert sorted(codes) == [200, 409]


class TestDriving:
    def test_driving_session_payload(self, tmp_path):
        view = create(client_for(tmp_path), scenario="driving")
        assert set(view["pair"][0]["theta"]) == {
            "Ts", "eps_c", "Np", "log_qu11", "log_qu22"}
        traj = view["pair"][0]["trajectory"]
        assert {"x_f", "y_f", "v", "delta_s"} <= set(traj["signals"])
        assert {"phase", "y_ref", "v_ref", "long_gap"} <= set(traj["extras"])
        assert view["display"]["obs_x0"] == 30.0
        assert len(traj["extras"]["phase"]) == len(traj["time"])


class TestDownsampling:
    def test_indices_identity_under_cap(self):
        assert np.array_equal(downsample_indices(5), np.arange(5))
        assert np.array_equal(downsample_indices(MAX_VIEW_POINTS),
                              np.arange(MAX_VIEW_POINTS))

    def test_indices_capped_and_cover_endpoints(self):
        idx = downsample_indices(50_000)
        assert len(idx) <= MAX_VIEW_POINTS
        assert idx[0] == 0 and idx[-1] == 49_999
        assert np.all(np.diff(idx) > 0)

    def test_view_keeps_full_resolution_under_cap(self, tmp_path):
        client = client_for(tmp_path)
        view = create(client)
        sid = view["id"]
        doc = json.loads((tmp_path / f"{sid}.json").read_text())
        stored = doc["experiments"][0]["trajectory"]["time"]
        served = view["pair"][0]["trajectory"]["time"]
        assert len(stored) <= MAX_VIEW_POINTS
        assert served == stored
