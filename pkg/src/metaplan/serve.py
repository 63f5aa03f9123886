"""Local collection service: hosts the browser task and ingests live sessions.

Three endpoints, schemas frozen and shared with the web client:

  GET  /api/session?condition=C&count=N&seed=S
       -> {"schema": "session@1", "session": id, "condition": C,
           "click_cost": float, "specs": [trialspec@1, ...]}
       Ground truths are drawn server-side and never leave the store;
       the response carries only the public trial structure.

  GET  /api/reveal?session=ID&trial=I&node=V
       -> {"schema": "reveal@1", "trial": I, "node": V, "value": float}
       One realized value per call. This is the only way a client learns
       a hidden reward, so traffic never contains values the player has
       not asked for.

  POST /api/upload   body: {"schema": "upload@1", "session": ID,
                            "participant": P, "trials": [
                              {"computations": [..., 0],
                               "path": [ids...], "score": float}, ...]}
       -> {"schema": "uploaded@1", "ok": true, "participant": P,
           "n_trials": N}
       The server joins each trial with its stored ground truth, replays
       the full validator, and appends one canonical record line to the
       output JSONL. Invalid sessions get a 400 naming the bad trial and
       step; nothing is written on failure.

Anything outside /api/ is served from the static bundle directory.
"""

from __future__ import annotations

import json
import secrets
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .env import GroundTruth, TrialSpec, condition_ids, load_condition_table, make_condition_env
from .fitkit import ParticipantRecord, TrialRecord, record_to_json_dict, validate_record
from .ioutil import append_jsonl_atomic, canonical_json

UPLOAD_SCHEMA = "upload@1"
MAX_BODY = 4 * 1024 * 1024

_CONTENT_TYPES = {".html": "text/html; charset=utf-8",
                  ".js": "text/javascript; charset=utf-8",
                  ".css": "text/css; charset=utf-8",
                  ".json": "application/json",
                  ".map": "application/json",
                  ".svg": "image/svg+xml",
                  ".png": "image/png"}

_PLACEHOLDER = b"""<!doctype html><meta charset="utf-8">
<title>collection service</title>
<p>The web task bundle is not built. The API endpoints are live:</p>
<pre>GET /api/session   GET /api/reveal   POST /api/upload</pre>
"""


class _BadRequest(ValueError):
    pass


class SessionStore:
    """Server-side truths for live sessions, keyed by an opaque id."""

    def __init__(self, table: dict | None = None):
        self.table = table or load_condition_table()
        self._lock = threading.Lock()
        self._sessions: dict[str, dict] = {}

    def create(self, condition: str, count: int, seed: int) -> dict:
        if condition not in condition_ids(self.table):
            raise _BadRequest(f"unknown condition '{condition}'")
        if count < 1:
            raise _BadRequest("count must be at least 1")
        specs: list[TrialSpec] = []
        truths: list[GroundTruth] = []
        for i in range(count):
            spec, truth = make_condition_env(condition, seed + i, self.table)
            specs.append(spec)
            truths.append(truth)
        sid = secrets.token_hex(8)
        with self._lock:
            self._sessions[sid] = {"condition": condition, "specs": specs,
                                   "truths": truths}
        return {"schema": "session@1", "session": sid, "condition": condition,
                "click_cost": specs[0].click_cost,
                "specs": [s.to_json_dict() for s in specs]}

    def _get(self, sid: str) -> dict:
        with self._lock:
            sess = self._sessions.get(sid)
        if sess is None:
            raise _BadRequest(f"unknown session '{sid}'")
        return sess

    def reveal(self, sid: str, trial: int, node: int) -> float:
        sess = self._get(sid)
        if not 0 <= trial < len(sess["specs"]):
            raise _BadRequest(f"trial {trial} out of range")
        spec = sess["specs"][trial]
        if node not in spec.non_root_ids:
            raise _BadRequest(f"trial {trial}: node {node} does not exist")
        return float(sess["truths"][trial].rewards[node])

    def build_record(self, payload: dict) -> ParticipantRecord:
        """Join an upload with stored truths and run the full validator."""
        if payload.get("schema") != UPLOAD_SCHEMA:
            raise _BadRequest(f"payload schema must be '{UPLOAD_SCHEMA}'")
        sess = self._get(str(payload.get("session")))
        participant = payload.get("participant")
        if not participant or not isinstance(participant, str):
            raise _BadRequest("missing participant id")
        trials = payload.get("trials")
        if not isinstance(trials, list) or not trials:
            raise _BadRequest("upload has no trials")
        if len(trials) > len(sess["specs"]):
            raise _BadRequest(f"upload has {len(trials)} trials but the "
                              f"session only has {len(sess['specs'])}")
        built = []
        for i, t in enumerate(trials):
            try:
                comps = tuple(int(c) for c in t["computations"])
                path = tuple(int(v) for v in t["path"])
                score = float(t["score"])
            except (KeyError, TypeError, ValueError):
                raise _BadRequest(f"trial {i}: each trial needs computations, "
                                  "path, and score") from None
            built.append(TrialRecord(sess["truths"][i], comps, score, path))
        rec = ParticipantRecord(participant, sess["condition"],
                                sess["specs"][0], tuple(built))
        try:
            return validate_record(rec)
        except ValueError as e:
            raise _BadRequest(str(e)) from None


class CollectionServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, records_path: Path,
                 bundle: Path | None = None, table: dict | None = None,
                 quiet: bool = True):
        self.store = SessionStore(table)
        self.records_path = Path(records_path)
        self.bundle = bundle
        self.quiet = quiet
        self.append_lock = threading.Lock()
        super().__init__(address, _Handler)

    def append_record(self, rec: ParticipantRecord):
        with self.append_lock:
            append_jsonl_atomic(self.records_path, record_to_json_dict(rec))


class _Handler(BaseHTTPRequestHandler):
    server: CollectionServer

    def log_message(self, fmt, *args):
        if not self.server.quiet:
            super().log_message(fmt, *args)

    # -- replies ----------------------------------------------------------

    def _send_json(self, status: int, obj: dict):
        body = (canonical_json(obj) + "\n").encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str):
        self._send_json(status, {"error": message})

    # -- routing ----------------------------------------------------------

    def do_GET(self):
        url = urlparse(self.path)
        try:
            if url.path == "/api/session":
                self._get_session(parse_qs(url.query))
            elif url.path == "/api/reveal":
                self._get_reveal(parse_qs(url.query))
            elif url.path.startswith("/api/"):
                self._send_error_json(404, f"no such endpoint: {url.path}")
            else:
                self._get_static(url.path)
        except _BadRequest as e:
            self._send_error_json(400, str(e))
        except Exception as e:  # pragma: no cover - defensive
            self._send_error_json(500, f"internal error: {e}")

    def do_POST(self):
        url = urlparse(self.path)
        if url.path != "/api/upload":
            self._send_error_json(404, f"no such endpoint: {url.path}")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            if length <= 0 or length > MAX_BODY:
                raise _BadRequest("missing or oversized request body")
            try:
                payload = json.loads(self.rfile.read(length))
            except json.JSONDecodeError as e:
                raise _BadRequest(f"invalid JSON body: {e.msg}") from None
            rec = self.server.store.build_record(payload)
        except _BadRequest as e:
            self._send_error_json(400, str(e))
            return
        try:
            self.server.append_record(rec)
        except OSError as e:
            # append_jsonl_atomic never leaves a torn line behind.
            self._send_error_json(500, f"could not persist session: {e}")
            return
        self._send_json(200, {"schema": "uploaded@1", "ok": True,
                              "participant": rec.participant,
                              "n_trials": len(rec.trials)})

    # -- handlers ---------------------------------------------------------

    def _get_session(self, q: dict):
        condition = q.get("condition", [""])[0]
        count = self._int_param(q, "count")
        seed = self._int_param(q, "seed")
        self._send_json(200, self.server.store.create(condition, count, seed))

    def _get_reveal(self, q: dict):
        sid = q.get("session", [""])[0]
        trial = self._int_param(q, "trial")
        node = self._int_param(q, "node")
        value = self.server.store.reveal(sid, trial, node)
        self._send_json(200, {"schema": "reveal@1", "trial": trial,
                              "node": node, "value": value})

    @staticmethod
    def _int_param(q: dict, name: str) -> int:
        raw = q.get(name, [None])[0]
        if raw is None:
            raise _BadRequest(f"missing query parameter '{name}'")
        try:
            return int(raw)
        except ValueError:
            raise _BadRequest(f"parameter '{name}' must be an integer") from None

    def _get_static(self, path: str):
        bundle = self.server.bundle
        if path in ("", "/"):
            path = "/index.html"
        if bundle is None:
            if path == "/index.html":
                self._send_bytes(200, _PLACEHOLDER, "text/html; charset=utf-8")
            else:
                self._send_error_json(404, "no static bundle configured")
            return
        target = (bundle / path.lstrip("/")).resolve()
        if not str(target).startswith(str(bundle.resolve())) or not target.is_file():
            self._send_error_json(404, f"not found: {path}")
            return
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._send_bytes(200, target.read_bytes(), ctype)

    def _send_bytes(self, status: int, body: bytes, ctype: str):
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def build_server(port: int, records_path: Path, bundle: Path | None = None,
                 table: dict | None = None, quiet: bool = True) -> CollectionServer:
    """Bind the collection service; port 0 picks a free port."""
    records_path = Path(records_path)
    if records_path.parent != Path("") and not records_path.parent.exists():
        records_path.parent.mkdir(parents=True, exist_ok=True)
    if bundle is not None and not bundle.is_dir():
        raise FileNotFoundError(f"bundle directory not found: {bundle}")
    return CollectionServer(("127.0.0.1", port), records_path, bundle, table,
                            quiet)
