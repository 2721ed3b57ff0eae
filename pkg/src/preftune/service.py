"""Session-oriented HTTP/JSON API around the calibration engine.

One JSON document per session under a data directory is the source of
truth: every mutating request simulates whatever new experiment it
produced, rewrites the document atomically (temp file then rename) and
only then responds. Restarting the process therefore always reproduces
the last acknowledged state. Field names are documented in
docs/service-schema.md.
"""
from __future__ import annotations

import json
import math
import os
import threading
import uuid
import zipfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from io import BytesIO
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel
from pydantic import Field as PydanticField

from .core import PreferenceDataset
from .engine import (PHASE_FINISHED, GlispConfig, SessionError, SessionState,
                     init_session, submit_preference)
from .scenarios import Trajectory, scenario_by_kind, trajectory_to_csv

SCHEMA_VERSION = 1
MAX_VIEW_POINTS = 2000

# only these GlispConfig fields may be overridden per session
_CONFIG_KEYS = {"seed": int, "n_init": int, "n_max": int, "delta": float}


class CreateSessionBody(BaseModel):
    scenario: str
    config: dict = PydanticField(default_factory=dict)


class PreferenceBody(BaseModel):
    b: int


@dataclass
class _SessionEntry:
    """In-memory twin of one persisted session document."""

    id: str
    scenario: object
    state: SessionState
    doc: dict
    lock: threading.Lock = field(default_factory=threading.Lock)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def _jsonable(obj):
    """Plain JSON types only; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def downsample_indices(n: int, limit: int = MAX_VIEW_POINTS) -> np.ndarray:
    """Indices of an even subsample keeping both endpoints, at most limit."""
    if n <= limit:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, limit).round().astype(int))


def _build_config(overrides: dict) -> GlispConfig:
    cfg = GlispConfig()
    for key, value in overrides.items():
        caster = _CONFIG_KEYS.get(key)
        if caster is None:
            raise HTTPException(400, f"unknown config field {key!r}")
        try:
            setattr(cfg, key, caster(value))
        except (TypeError, ValueError):
            raise HTTPException(400, f"config field {key!r} must be "
                                     f"{caster.__name__}, got {value!r}")
    try:
        cfg.validate()
    except ValueError as exc:
        raise HTTPException(400, str(exc))
    return cfg


def _trajectory_doc(traj: Trajectory) -> dict:
    return _jsonable({
        "time": traj.times,
        "states": traj.states,
        "inputs": traj.inputs,
        "outputs": traj.outputs,
        "solve_times": traj.solve_times,
        "extras": dict(traj.extras),
    })


def _trajectory_from_doc(doc: dict, scenario) -> Trajectory:
    n = len(doc["time"])

    def block(rows, names):
        arr = np.asarray(rows, dtype=float)
        return arr.reshape(n, len(names)) if n else np.zeros((0, len(names)))

    return Trajectory(
        times=np.asarray(doc["time"], dtype=float),
        states=block(doc["states"], scenario.state_names),
        inputs=block(doc["inputs"], scenario.input_names),
        outputs=block(doc["outputs"], scenario.output_names),
        solve_times=np.asarray(doc["solve_times"], dtype=float),
        extras={k: np.asarray(v, dtype=float) for k, v in doc["extras"].items()},
    )


def _view_trajectory(traj_doc: dict, scenario) -> dict:
    """Per-signal columns for plotting, downsampled to the view cap."""
    n = len(traj_doc["time"])
    idx = downsample_indices(n)

    def take(seq):
        return [seq[int(i)] for i in idx]

    signals = {}
    for group, names in (("states", scenario.state_names),
                         ("inputs", scenario.input_names),
                         ("outputs", scenario.output_names)):
        rows = traj_doc[group]
        for col, name in enumerate(names):
            signals[name] = take([row[col] for row in rows])
    return {
        "time": take(traj_doc["time"]),
        "signals": signals,
        "extras": {k: take(v) for k, v in traj_doc["extras"].items()},
    }


def create_app(data_dir: str | os.PathLike | None = None) -> FastAPI:
    root = Path(data_dir or os.environ.get("PREF_TUNE_DATA")
                or "preftune_sessions")
    root.mkdir(parents=True, exist_ok=True)

    app = FastAPI(title="preftune service", version="1.0")
    registry: dict[str, _SessionEntry] = {}
    registry_lock = threading.Lock()

    def path_for(session_id: str) -> Path:
        return root / f"{session_id}.json"

    def persist(entry: _SessionEntry):
        entry.doc["updated"] = _now()
        blob = json.dumps(entry.doc, indent=2, sort_keys=True,
                          allow_nan=False) + "\n"
        target = path_for(entry.id)
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_text(blob)
        os.replace(tmp, target)

    def simulate(entry: _SessionEntry, index: int):
        """Run experiment `index` and append it to the document."""
        assert index == len(entry.doc["experiments"])
        theta = entry.state.dataset.samples[index]
        outcome = entry.scenario.run(theta)
        score = entry.scenario.score(outcome)
        entry.doc["experiments"].append({
            "theta": _jsonable(theta),
            "status": outcome.status,
            "score": _jsonable(score),
            "metrics": _jsonable(outcome.metrics),
            "trajectory": _trajectory_doc(outcome.trajectory),
        })
        entry.doc["events"].append({"type": "sample", "index": index,
                                    "at": _now()})

    def sync_doc(entry: _SessionEntry):
        state, doc = entry.state, entry.doc
        doc["phase"] = state.phase
        doc["incumbent"] = state.incumbent
        doc["shape"] = _jsonable(state.shape)
        doc["pending"] = (list(state.pending_query)
                          if state.pending_query is not None else None)
        doc["samples"] = _jsonable(state.dataset.samples)
        doc["preferences"] = [[p.i, p.j, p.b] for p in state.dataset.prefs]

    def experiment_payload(entry: _SessionEntry, index: int) -> dict:
        exp = entry.doc["experiments"][index]
        names = entry.state.space.names
        return {
            "index": index,
            "theta": dict(zip(names, exp["theta"])),
            "status": exp["status"],
            "metrics": exp["metrics"],
            "trajectory": _view_trajectory(exp["trajectory"], entry.scenario),
        }

    def query_view(entry: _SessionEntry) -> dict:
        doc = entry.doc
        base = {
            "id": entry.id,
            "scenario": doc["scenario"],
            "progress": {"n": len(doc["samples"]),
                         "n_max": doc["config"]["n_max"]},
            "display": doc["display"],
        }
        if doc["phase"] == PHASE_FINISHED:
            history = [{"index": k, "theta": dict(zip(entry.state.space.names,
                                                      exp["theta"])),
                        "status": exp["status"], "score": exp["score"],
                        "metrics": exp["metrics"]}
                       for k, exp in enumerate(doc["experiments"])]
            return {**base, "type": "finished",
                    "incumbent": experiment_payload(entry, doc["incumbent"]),
                    "history": history}
        i, j = doc["pending"]
        return {**base, "type": "query", "incumbent": doc["incumbent"],
                "pair": [experiment_payload(entry, i),
                         experiment_payload(entry, j)]}

    def load_entry(session_id: str) -> _SessionEntry:
        path = path_for(session_id)
        if not path.is_file():
            raise HTTPException(404, f"unknown session {session_id!r}")
        doc = json.loads(path.read_text())
        version = doc.get("version")
        if version != SCHEMA_VERSION:
            raise HTTPException(
                500, f"unsupported session document version {version!r}")
        scenario = scenario_by_kind(doc["scenario"])
        cfg = GlispConfig(**doc["config"])
        state = SessionState(
            space=scenario.space(), config=cfg, dataset=PreferenceDataset(),
            shape=doc["shape"], incumbent=doc["incumbent"],
            phase=doc["phase"],
            pending_query=(tuple(doc["pending"]) if doc["pending"] else None),
            init_queue=np.asarray(doc["init_queue"], dtype=float))
        for theta in doc["samples"]:
            state.dataset.add_sample(np.asarray(theta, dtype=float))
        for i, j, b in doc["preferences"]:
            state.dataset.add_preference(i, j, b)
        return _SessionEntry(id=session_id, scenario=scenario, state=state,
                             doc=doc)

    def get_entry(session_id: str) -> _SessionEntry:
        with registry_lock:
            entry = registry.get(session_id)
            if entry is None:
                entry = load_entry(session_id)
                registry[session_id] = entry
            return entry

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/sessions")
    def list_sessions():
        rows = []
        for path in sorted(root.glob("*.json")):
            try:
                doc = json.loads(path.read_text())
                rows.append({"id": doc["id"], "scenario": doc["scenario"],
                             "phase": doc["phase"],
                             "n": len(doc["samples"]),
                             "n_max": doc["config"]["n_max"],
                             "created": doc["created"],
                             "updated": doc["updated"]})
            except (ValueError, KeyError) as exc:
                rows.append({"id": path.stem, "error": str(exc)})
        return {"sessions": rows}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        try:
            scenario = scenario_by_kind(body.scenario)
        except KeyError:
            raise HTTPException(404, f"unknown scenario {body.scenario!r}")
        cfg = _build_config(body.config)
        state = init_session(scenario.space(), cfg)
        session_id = uuid.uuid4().hex
        doc = {
            "version": SCHEMA_VERSION,
            "id": session_id,
            "scenario": scenario.kind,
            "created": _now(),
            "updated": _now(),
            "config": {k: getattr(cfg, k) for k in _CONFIG_KEYS},
            "display": _jsonable(asdict(scenario)),
            "init_queue": _jsonable(state.init_queue),
            "experiments": [],
            "events": [],
        }
        entry = _SessionEntry(id=session_id, scenario=scenario, state=state,
                              doc=doc)
        with entry.lock:
            simulate(entry, 0)
            simulate(entry, 1)
            sync_doc(entry)
            persist(entry)
            with registry_lock:
                registry[session_id] = entry
            return query_view(entry)

    @app.get("/sessions/{session_id}/query")
    def get_query(session_id: str):
        entry = get_entry(session_id)
        with entry.lock:
            return query_view(entry)

    @app.post("/sessions/{session_id}/preference")
    def post_preference(session_id: str, body: PreferenceBody):
        if body.b not in (-1, 0, 1):
            raise HTTPException(400, f"b must be -1, 0 or 1, got {body.b}")
        entry = get_entry(session_id)
        if not entry.lock.acquire(blocking=False):
            raise HTTPException(
                409, "another request is mutating this session")
        try:
            if entry.state.pending_query is None:
                raise HTTPException(
                    409, f"no pending query (phase {entry.state.phase})")
            i, j = entry.state.pending_query
            try:
                submit_preference(entry.state, body.b)
                entry.doc["events"].append({"type": "preference", "i": i,
                                            "j": j, "b": body.b,
                                            "at": _now()})
                if entry.state.pending_query is not None:
                    new_index = entry.state.pending_query[0]
                    if new_index == len(entry.doc["experiments"]):
                        simulate(entry, new_index)
                sync_doc(entry)
                persist(entry)
            except SessionError as exc:
                raise HTTPException(409, str(exc))
            except Exception:
                # document on disk stays authoritative; drop the stale
                # in-memory twin so the next request reloads it
                with registry_lock:
                    registry.pop(session_id, None)
                raise
            return query_view(entry)
        finally:
            entry.lock.release()

    @app.get("/sessions/{session_id}/export")
    def export_session(session_id: str, format: str | None = None):
        entry = get_entry(session_id)
        if format == "session-file":
            with entry.lock:
                blob = path_for(session_id).read_bytes()
            return Response(content=blob, media_type="application/json")
        if format == "csv":
            with entry.lock:
                buf = BytesIO()
                with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
                    for k, exp in enumerate(entry.doc["experiments"]):
                        traj = _trajectory_from_doc(exp["trajectory"],
                                                    entry.scenario)
                        zf.writestr(f"exp_{k:03d}.csv",
                                    trajectory_to_csv(
                                        traj, entry.scenario.state_names,
                                        entry.scenario.input_names,
                                        entry.scenario.output_names))
            headers = {"Content-Disposition":
                       f'attachment; filename="{session_id}.zip"'}
            return Response(content=buf.getvalue(),
                            media_type="application/zip", headers=headers)
        raise HTTPException(
            400, f"format must be csv or session-file, got {format!r}")

    return app
