"""Local HTTP service for the field UI.

Stdlib http.server only: the whole point of the artifact is running
with no connectivity, so the service binds localhost by default, makes
zero outbound connections, and serves the optional UI bundle itself.

Routes (all JSON, UTF-8):
    POST /api/diagnose               image upload (raw body or multipart)
    GET  /api/history?limit&before   newest-first page, cursor = last id
    GET  /api/history/{id}
    GET  /api/recommendations/{label}
    GET  /api/models                 container digests + labels
    GET  /api/health
    GET  /{static}                   UI files when a ui_dir is configured

Errors: 400 undecodable image, 404 unknown id/label/route, 413 oversize
upload; unexpected failures return a generic 500 and log the detail.
"""

from __future__ import annotations

import email.parser
import email.policy
import json
import logging
import mimetypes
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, unquote, urlparse

from .cascade import CascadeEngine
from .errors import CacaoDxError, ConfigurationError, MissingRecommendationError, NotFoundError
from .store import DiagnosisStore

log = logging.getLogger(__name__)

DEFAULT_BIND = "127.0.0.1"
DEFAULT_PORT = 8477
DEFAULT_MAX_UPLOAD = 10 * 1024 * 1024


@dataclass
class ServiceConfig:
    disease_model: str
    level_model: str
    kb_path: str
    store_dir: str
    bind: str = DEFAULT_BIND
    port: int = DEFAULT_PORT
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD
    ui_dir: str | None = None

    def validate(self) -> None:
        for name in ("disease_model", "level_model", "kb_path"):
            path = getattr(self, name)
            if not path or not Path(path).is_file():
                raise ConfigurationError(f"{name} {path!r} does not exist")
        if self.ui_dir and not Path(self.ui_dir).is_dir():
            raise ConfigurationError(f"ui_dir {self.ui_dir!r} does not exist")
        if self.max_upload_bytes < 1:
            raise ConfigurationError("max_upload_bytes must be positive")


class DiagnosisService:
    """Loads everything eagerly so requests can only fail on bad input."""

    def __init__(self, config: ServiceConfig) -> None:
        config.validate()
        self.config = config
        self.engine = CascadeEngine.load(config.disease_model, config.level_model, config.kb_path)
        self.store = DiagnosisStore(config.store_dir)
        self.ui_dir = Path(config.ui_dir).resolve() if config.ui_dir else None

    def make_server(self) -> ThreadingHTTPServer:
        service = self

        class Handler(_Handler):
            pass

        Handler.service = service
        return ThreadingHTTPServer((self.config.bind, self.config.port), Handler)

    def serve_forever(self) -> None:
        server = self.make_server()
        host, port = server.server_address[:2]
        # announced on stdout so wrappers can discover an ephemeral port
        print(f"serving on http://{host}:{port}", flush=True)
        try:
            server.serve_forever()
        finally:
            server.server_close()


def start_background(service: DiagnosisService) -> tuple[ThreadingHTTPServer, threading.Thread]:
    """Run the server on a daemon thread; caller owns shutdown()."""
    server = service.make_server()
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


class _Handler(BaseHTTPRequestHandler):
    service: DiagnosisService
    protocol_version = "HTTP/1.1"

    # -- plumbing ---------------------------------------------------------
    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str) -> None:
        self._send_json(status, {"error": message})

    def _route(self) -> tuple[str, dict]:
        parsed = urlparse(self.path)
        query = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
        return unquote(parsed.path), query

    # -- GET --------------------------------------------------------------
    def do_GET(self) -> None:
        path, query = self._route()
        try:
            if path == "/api/health":
                self._send_json(200, {"status": "ok"})
            elif path == "/api/models":
                self._send_json(200, self._models_payload())
            elif path == "/api/history":
                self._history(query)
            elif path.startswith("/api/history/"):
                self._history_item(path.removeprefix("/api/history/"))
            elif path.startswith("/api/recommendations/"):
                self._recommendation(path.removeprefix("/api/recommendations/"))
            elif path.startswith("/api/"):
                self._error(404, "unknown endpoint")
            else:
                self._static(path)
        except (NotFoundError, MissingRecommendationError) as exc:
            self._error(404, str(exc))
        except CacaoDxError as exc:
            self._error(400, str(exc))
        except Exception:
            log.exception("unhandled error for GET %s", self.path)
            self._error(500, "internal error")

    def _models_payload(self) -> dict:
        engine = self.service.engine
        return {
            "disease": {
                "digest": engine.model_versions.get("disease"),
                "labels": list(engine.disease_model.arch.labels),
                "input_size": engine.disease_model.arch.input_size,
            },
            "level": {
                "digest": engine.model_versions.get("level"),
                "labels": list(engine.level_model.arch.labels),
                "input_size": engine.level_model.arch.input_size,
            },
            "trigger_label": engine.trigger_label,
        }

    def _history(self, query: dict) -> None:
        try:
            limit = int(query.get("limit", "20"))
        except ValueError:
            self._error(400, "limit must be an integer")
            return
        before = query.get("before")
        items = self.service.store.list(limit=limit, before=before)
        next_before = items[-1].id if len(items) == limit and items else None
        self._send_json(200, {
            "items": [d.to_dict() for d in items],
            "next_before": next_before,
        })

    def _history_item(self, diagnosis_id: str) -> None:
        diagnosis = self.service.store.get(diagnosis_id)
        self._send_json(200, diagnosis.to_dict())

    def _recommendation(self, label: str) -> None:
        entry = self.service.engine.kb.lookup(label)
        self._send_json(200, entry.to_dict())

    def _static(self, path: str) -> None:
        if self.service.ui_dir is None:
            self._error(404, "no UI bundle configured")
            return
        name = path.lstrip("/") or "index.html"
        target = (self.service.ui_dir / name).resolve()
        if not str(target).startswith(str(self.service.ui_dir)) or not target.is_file():
            self._error(404, "not found")
            return
        body = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    # -- POST ---------------------------------------------------------------
    def do_POST(self) -> None:
        path, _ = self._route()
        if path != "/api/diagnose":
            self._error(404, "unknown endpoint")
            return
        try:
            self._diagnose()
        except NotFoundError as exc:
            self._error(404, str(exc))
        except CacaoDxError as exc:
            self._error(400, str(exc))
        except Exception:
            log.exception("unhandled error for POST %s", self.path)
            self._error(500, "internal error")

    def _diagnose(self) -> None:
        length = self.headers.get("Content-Length")
        if length is None:
            self._error(411, "Content-Length required")
            return
        length = int(length)
        if length > self.service.config.max_upload_bytes:
            # respond without reading the body; the connection is dropped
            self.close_connection = True
            self._error(413, "image exceeds the upload size limit")
            return
        body = self.rfile.read(length)
        image_bytes = self._extract_image(body)
        if image_bytes is None:
            self._error(400, "request body is not a decodable image upload")
            return
        diagnosis = self.service.engine.diagnose_bytes(image_bytes)
        if diagnosis is None:
            self._error(400, "image could not be decoded (PNG or JPEG expected)")
            return
        self.service.store.put(diagnosis)
        payload = diagnosis.to_dict()
        payload["recommendation"] = self.service.engine.kb.lookup(diagnosis.recommendation_key).to_dict()
        self._send_json(200, payload)

    def _extract_image(self, body: bytes) -> bytes | None:
        ctype = self.headers.get("Content-Type", "application/octet-stream")
        if ctype.startswith("multipart/"):
            parser = email.parser.BytesParser(policy=email.policy.HTTP)
            message = parser.parsebytes(
                b"Content-Type: " + ctype.encode("latin-1") + b"\r\n\r\n" + body
            )
            for part in message.iter_parts():
                payload = part.get_payload(decode=True)
                if payload:
                    return payload
            return None
        return body if body else None
