"""HTTP/JSON inference service over one immutable model snapshot.

Endpoints:
    GET  /api/users                 user ids with their log lengths
    GET  /api/users/{id}/history    a user's items in time order
    POST /api/recommend             ranked items for a user, optionally steered
    GET  /                          the console bundle, when one is built

The process holds a single loaded checkpoint and corpus; requests never
mutate them, so concurrent handling needs no locks.  Scores on the wire
are raw inner-product logits.  Restart the process to change models.
"""

from __future__ import annotations

import hashlib
import json
import mimetypes
import os
import threading
from dataclasses import asdict, dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .corpus.types import ROUTE_NONE, Corpus, history_ids
from .errors import InvalidArgumentError, NotFoundError
from .evalsuite import RankedList, genre_membership, rank_base, rank_dpr, rank_filter
from .prompting import tokenize
from .training import ModelState

MAX_K = 100
_MAX_BODY = 1 << 20


def snapshot_checksum(state: ModelState) -> str:
    """Digest of every parameter array; serving must never change it."""
    digest = hashlib.sha256()
    for name in sorted(state.params):
        digest.update(name.encode())
        digest.update(state.params[name].value.tobytes())
    return digest.hexdigest()


@dataclass
class Snapshot:
    """Everything a request needs, frozen at server start."""

    state: ModelState
    corpus: Corpus
    item_genres: dict
    checksum: str

    @classmethod
    def build(cls, state: ModelState, corpus: Corpus) -> "Snapshot":
        if state.vocab != corpus.num_items:
            raise InvalidArgumentError(
                f"checkpoint knows {state.vocab} items but the corpus has {corpus.num_items}"
            )
        return cls(state, corpus, genre_membership(corpus), snapshot_checksum(state))

    def history(self, user_id: int) -> list[int]:
        if user_id not in self.corpus.users:
            raise NotFoundError(f"unknown user {user_id}")
        return history_ids(self.corpus.users[user_id])

    def item_payload(self, ranked: RankedList) -> list[dict]:
        out = []
        for rank, (item_id, score) in enumerate(zip(ranked.item_ids, ranked.scores), start=1):
            item = self.corpus.item(item_id)
            out.append(
                {
                    "item_id": item_id,
                    "title": item.title,
                    "genres": [self.corpus.genre_names[g] for g in item.genres],
                    "score": score,
                    "rank": rank,
                }
            )
        return out

    def infer_genre(self, prompt: str) -> int | None:
        """The first genre whose name appears in the prompt, if any."""
        words = set(tokenize(prompt))
        for idx, name in enumerate(self.corpus.genre_names):
            if name in words:
                return idx
        return None


def handle_users(snap: Snapshot) -> list[dict]:
    return [
        {"user_id": uid, "length": len(snap.corpus.users[uid])}
        for uid in sorted(snap.corpus.users)
    ]


def handle_history(snap: Snapshot, user_id: int) -> list[dict]:
    ids = snap.history(user_id)
    out = []
    for ts, item_id in enumerate(ids):
        item = snap.corpus.item(item_id)
        out.append(
            {
                "item_id": item_id,
                "title": item.title,
                "genres": [snap.corpus.genre_names[g] for g in item.genres],
                "ts": ts,
            }
        )
    return out


def handle_recommend(snap: Snapshot, body: dict) -> dict:
    if not isinstance(body, dict):
        raise InvalidArgumentError("request body must be a JSON object")
    if "user_id" not in body or not isinstance(body["user_id"], int):
        raise InvalidArgumentError("user_id must be an integer")
    user_id = body["user_id"]
    k = body.get("k", 10)
    if not isinstance(k, int) or not 1 <= k <= MAX_K:
        raise InvalidArgumentError(f"k must be an integer in [1, {MAX_K}]")
    prompt = body.get("prompt")
    if prompt is not None:
        if not isinstance(prompt, str):
            raise InvalidArgumentError("prompt must be a string")
        if not prompt.strip():
            raise InvalidArgumentError("prompt is present but empty; omit it for the base ranking")
    compare = bool(body.get("compare", False))

    history = snap.history(user_id)
    exclude = frozenset(history)
    ranked, route = rank_dpr(snap.state, history, prompt, k, exclude)
    response = {
        "route": route if route is not None else ROUTE_NONE,
        "items": snap.item_payload(ranked),
        "model": {
            "stage": snap.state.stage,
            "checksum": snap.checksum,
            "config": asdict(snap.state.config),
        },
    }
    if compare:
        base = rank_base(snap.state, history, k, exclude)
        response["base_items"] = snap.item_payload(base)
        genre = snap.infer_genre(prompt) if prompt else None
        if prompt and genre is not None and route in ("+", "-"):
            filtered = rank_filter(
                snap.state, history, genre, route, k, exclude, snap.item_genres
            )
            response["filter_items"] = snap.item_payload(filtered)
            response["filter_genre"] = snap.corpus.genre_names[genre]
        else:
            response["filter_genre"] = None
    return response


class _Handler(BaseHTTPRequestHandler):
    server_version = "promptrec"
    snap: Snapshot = None  # set on the server class
    static_dir: str | None = None

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    def _send_json(self, status: int, blob) -> None:
        payload = json.dumps(blob).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(payload)

    def _send_error_json(self, status: int, code: str, message: str) -> None:
        self._send_json(status, {"error": code, "message": message})

    def do_GET(self):
        path = self.path.split("?", 1)[0]
        try:
            if path == "/api/users":
                self._send_json(200, handle_users(self.snap))
            elif path.startswith("/api/users/") and path.endswith("/history"):
                middle = path[len("/api/users/") : -len("/history")]
                try:
                    user_id = int(middle)
                except ValueError:
                    raise NotFoundError(f"no such resource {path}")
                self._send_json(200, handle_history(self.snap, user_id))
            elif path == "/api/health":
                self._send_json(200, {"ok": True, "checksum": self.snap.checksum})
            else:
                self._serve_static(path)
        except NotFoundError as exc:
            self._send_error_json(404, "not_found", str(exc))
        except InvalidArgumentError as exc:
            self._send_error_json(400, "bad_request", str(exc))

    def do_POST(self):
        path = self.path.split("?", 1)[0]
        if path != "/api/recommend":
            self._send_error_json(404, "not_found", f"no such resource {path}")
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            if length > _MAX_BODY:
                raise InvalidArgumentError("request body too large")
            raw = self.rfile.read(length) if length else b""
            try:
                body = json.loads(raw.decode() or "null")
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise InvalidArgumentError(f"body is not valid JSON: {exc}") from exc
            self._send_json(200, handle_recommend(self.snap, body))
        except NotFoundError as exc:
            self._send_error_json(404, "not_found", str(exc))
        except InvalidArgumentError as exc:
            self._send_error_json(400, "bad_request", str(exc))

    def _serve_static(self, path: str) -> None:
        if self.static_dir is None:
            raise NotFoundError("console bundle not built; API endpoints live under /api/")
        rel = "index.html" if path == "/" else path.lstrip("/")
        full = os.path.realpath(os.path.join(self.static_dir, rel))
        root = os.path.realpath(self.static_dir)
        if not full.startswith(root + os.sep) and full != root:
            raise NotFoundError("path escapes the bundle directory")
        if not os.path.isfile(full):
            raise NotFoundError(f"no such file {path}")
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as fh:
            payload = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


def make_server(
    state: ModelState,
    corpus: Corpus,
    host: str = "127.0.0.1",
    port: int = 8080,
    static_dir: str | None = None,
) -> ThreadingHTTPServer:
    """Build (but do not start) the HTTP server; port 0 picks a free port."""
    snap = Snapshot.build(state, corpus)

    class Handler(_Handler):
        pass

    Handler.snap = snap
    Handler.static_dir = static_dir
    return ThreadingHTTPServer((host, port), Handler)


def run_server(
    state: ModelState,
    corpus: Corpus,
    host: str = "127.0.0.1",
    port: int = 8080,
    static_dir: str | None = None,
) -> None:
    server = make_server(state, corpus, host, port, static_dir)
    print(json.dumps({"serving": f"http://{host}:{server.server_address[1]}/"}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def start_background(server: ThreadingHTTPServer) -> threading.Thread:
    """Run an already-built server on a daemon thread (used by tests)."""
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread
