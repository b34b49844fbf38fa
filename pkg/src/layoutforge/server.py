"""HTTP inference service over a trained pipeline.

Endpoints: POST /api/generate, GET /api/vocab, GET /api/health. The server
is stateless and single-checkpoint; identical requests produce identical
response bytes, so per-request stage timings travel in the X-Timings-Ms
response header rather than the body. With a UI directory configured, the
frontend bundle is served under / as plain static files.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import logging
import mimetypes
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlsplit

import numpy as np

from .boxes import layout_to_json
from .errors import (
    ConfigError,
    ContractError,
    DatasetError,
    DegenerateInputError,
    LayoutForgeError,
    PlacementError,
    ShapeError,
)
from .pipeline import STAGES, Pipeline, normalize_stages
from .pnm import pgm_bytes, ppm_bytes
from .scenegraph import RELATIONS, GraphParseError, parse_scene_graph

log = logging.getLogger("layoutforge.server")


class HttpError(LayoutForgeError):
    """A request rejection carrying its HTTP status and JSON payload."""

    def __init__(self, status: int, kind: str, message: str, **position):
        super().__init__(message)
        self.status = status
        self.payload = {"error": {"kind": kind, "message": message,
                                  **position}}


def _require_int(spec: dict, key: str, minimum: int):
    value = spec.get(key, 0 if minimum == 0 else None)
    if isinstance(value, bool) or not isinstance(value, int):
        raise HttpError(400, "BadPatch", f"patch field '{key}' must be "
                                         f"an integer")
    if value < minimum:
        raise HttpError(400, "BadPatch", f"patch field '{key}' must be "
                                         f">= {minimum}, got {value}")
    return value


class ModelService:
    """Checkpoint-backed request handling, separate from HTTP plumbing."""

    def __init__(self, pipeline: Pipeline | None = None,
                 model_version: str | None = None):
        self.pipeline = pipeline
        self.model_version = model_version

    @classmethod
    def from_checkpoint(cls, path) -> "ModelService":
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()[:12]
        return cls(Pipeline.load(path), digest)

    def health(self) -> dict:
        return {"status": "ok" if self.pipeline is not None else "loading",
                "model_version": self.model_version}

    def vocab(self) -> dict:
        if self.pipeline is None:
            raise HttpError(503, "ModelNotLoaded", "no checkpoint is loaded")
        return {"categories": list(self.pipeline.vocab.categories),
                "relations": list(RELATIONS)}

    def _decode_patch(self, spec):
        if spec is None:
            return None, (0, 0)
        if not isinstance(spec, dict):
            raise HttpError(400, "BadPatch", "patch must be a JSON object")
        width = _require_int(spec, "width", 1)
        height = _require_int(spec, "height", 1)
        ox = _require_int(spec, "offset_x", 0)
        oy = _require_int(spec, "offset_y", 0)
        encoded = spec.get("rgb_base64")
        if not isinstance(encoded, str):
            raise HttpError(400, "BadPatch", "patch field 'rgb_base64' "
                                             "must be a base64 string")
        try:
            raw = base64.b64decode(encoded, validate=True)
        except binascii.Error as e:
            raise HttpError(400, "BadPatch", f"invalid base64: {e}") from e
        if len(raw) != 3 * width * height:
            raise HttpError(400, "BadPatch",
                            f"expected {3 * width * height} bytes of "
                            f"RGB data for {width}x{height}, got {len(raw)}")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
        return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0, (ox, oy)

    def generate(self, payload) -> tuple[dict, dict]:
        """(response body, stage timings) for one generate request."""
        if self.pipeline is None:
            raise HttpError(503, "ModelNotLoaded", "no checkpoint is loaded")
        if not isinstance(payload, dict):
            raise HttpError(400, "BadRequest",
                            "request body must be a JSON object")
        text = payload.get("graph")
        if not isinstance(text, str):
            raise HttpError(400, "BadRequest", "'graph' must be a DSL string")
        try:
            graph = parse_scene_graph(text, self.pipeline.vocab)
        except GraphParseError as e:
            raise HttpError(400, e.kind, str(e), line=e.line,
                            column=e.column) from e

        requested = payload.get("stages", list(STAGES))
        if not isinstance(requested, (list, tuple)) or \
                not all(isinstance(s, str) for s in requested):
            raise HttpError(400, "BadRequest",
                            "'stages' must be a list of stage names")
        try:
            stages = normalize_stages(requested)
        except ContractError as e:
            raise HttpError(400, "BadRequest", str(e)) from e

        seed = payload.get("seed")
        if seed is not None and (isinstance(seed, bool)
                                 or not isinstance(seed, int)):
            raise HttpError(400, "BadRequest", "'seed' must be an integer")
        patch, offset = self._decode_patch(payload.get("patch"))

        try:
            result = self.pipeline.generate(graph, patch, offset, stages)
        except DegenerateInputError as e:
            raise HttpError(400, "DegenerateInput", str(e)) from e
        except PlacementError as e:
            raise HttpError(400, "BadPatch", str(e)) from e
        except (ShapeError, ContractError, ConfigError, DatasetError) as e:
            raise HttpError(400, "BadRequest", str(e)) from e

        body = {"model_version": self.model_version}
        if seed is not None:
            body["seed"] = seed
        if result.boxes is not None:
            body["boxes"] = json.loads(
                layout_to_json(result.boxes, self.pipeline.vocab.categories))
        if result.labels is not None:
            body["seg_base64"] = base64.b64encode(
                pgm_bytes(result.labels)).decode("ascii")
        if result.image is not None:
            body["image_base64"] = base64.b64encode(
                ppm_bytes(result.image)).decode("ascii")
        return body, result.timings_ms


class PipelineHTTPServer(ThreadingHTTPServer):
    """Threaded HTTP server around one immutable ModelService."""

    daemon_threads = True

    def __init__(self, address, service: ModelService, ui_dir=None):
        self.service = service
        self.ui_dir = Path(ui_dir).resolve() if ui_dir is not None else None
        super().__init__(address, RequestHandler)


def make_server(service: ModelService, host: str = "127.0.0.1",
                port: int = 8000, ui_dir=None) -> PipelineHTTPServer:
    return PipelineHTTPServer((host, port), service, ui_dir)


class RequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "layoutforge"

    def log_message(self, fmt, *args):
        log.info("%s %s", self.address_string(), fmt % args)

    # ------------------------------------------------------------- plumbing

    def _send(self, status: int, body: bytes, content_type: str,
              extra_headers=()):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        if self.path.startswith("/api/"):
            self.send_header("Access-Control-Allow-Origin", "*")
        for name, value in extra_headers:
            self.send_header(name, value)
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, payload: dict, extra_headers=()):
        body = json.dumps(payload, sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
        self._send(status, body, "application/json; charset=utf-8",
                   extra_headers)

    def _not_found(self):
        self._send_json(404, {"error": {"kind": "NotFound",
                                        "message": f"no route for "
                                                   f"{self.path}"}})

    # --------------------------------------------------------------- routes

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods",
                         "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        path = urlsplit(self.path).path
        if path == "/api/health":
            self._send_json(200, self.server.service.health())
        elif path == "/api/vocab":
            try:
                self._send_json(200, self.server.service.vocab())
            except HttpError as e:
                self._send_json(e.status, e.payload)
        elif path.startswith("/api/"):
            self._not_found()
        else:
            self._serve_static(path)

    def do_POST(self):
        path = urlsplit(self.path).path
        if path != "/api/generate":
            self._not_found()
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as e:
            self._send_json(400, {"error": {"kind": "BadRequest",
                                            "message": f"invalid JSON "
                                                       f"body: {e}"}})
            return
        try:
            body, timings = self.server.service.generate(payload)
        except HttpError as e:
            self._send_json(e.status, e.payload)
            return
        except Exception:
            log.exception("generate failed")
            self._send_json(500, {"error": {"kind": "InternalError",
                                            "message": "generation failed "
                                                       "unexpectedly"}})
            return
        header = json.dumps(timings, sort_keys=True, separators=(",", ":"))
        self._send_json(200, body, extra_headers=(("X-Timings-Ms", header),))

    # ---------------------------------------------------------- static files

    def _serve_static(self, path: str):
        root = self.server.ui_dir
        if root is None:
            self._not_found()
            return
        name = path.lstrip("/") or "index.html"
        full = (root / name).resolve()
        if not full.is_relative_to(root):
            self._not_found()
            return
        if full.is_dir():
            full = full / "index.html"
        if not full.is_file():
            self._not_found()
            return
        ctype = mimetypes.guess_type(full.name)[0] or \
            "application/octet-stream"
        self._send(200, full.read_bytes(), ctype)
