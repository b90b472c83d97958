"""Query-only access to a model.

Interpreters talk to a :class:`PredictionApi` and nothing else. The in-process
adapter keeps the model private; the HTTP pair serves a model as

    POST /predict  {"x": [...]}  ->  {"y": [...]}
    GET  /meta                   ->  {"d": d, "C": C}

Errors come back as HTTP 400 with ``{"error": CODE, "detail": ...}`` where CODE
is one of ``BAD_JSON``, ``BAD_REQUEST``, ``DIM_MISMATCH``, ``NON_FINITE``.
"""

from __future__ import annotations

import http.client
import json
import logging
import math
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlsplit

import numpy as np

logger = logging.getLogger(__name__)


class BudgetExhausted(RuntimeError):
    pass


class ProtocolError(RuntimeError):
    """The server answered, but rejected the request."""

    def __init__(self, code: str, detail: str = "", status: int = 400):
        super().__init__(f"{status} {code}: {detail}")
        self.code = code
        self.detail = detail
        self.status = status


class TransportError(ConnectionError):
    """The request never got a usable answer. Safe to retry."""

    retryable = True


class QueryLedger:
    """Thread-safe count of predict calls, with an optional hard budget."""

    def __init__(self, budget: int | None = None):
        if budget is not None and budget < 1:
            raise ValueError("budget must be positive")
        self.budget = budget
        self._count = 0
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    def charge(self) -> None:
        with self._lock:
            if self.budget is not None and self._count >= self.budget:
                raise BudgetExhausted(f"query budget of {self.budget} exhausted")
            self._count += 1

    def reset(self) -> None:
        with self._lock:
            self._count = 0


class PredictionApi:
    """A model seen only through its predictions.

    Subclasses implement ``_predict``; every call to ``predict`` is charged to
    ``self.ledger`` before it reaches the model.
    """

    d: int
    n_classes: int

    def __init__(self, budget: int | None = None):
        self.ledger = QueryLedger(budget)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise ValueError(f"expected instance of shape ({self.d},), got {x.shape}")
        self.ledger.charge()
        return self._predict(x)

    def _predict(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class InProcessApi(PredictionApi):
    def __init__(self, model, budget: int | None = None):
        super().__init__(budget)
        self.__model = model
        self.d = model.d
        self.n_classes = model.n_classes

    def _predict(self, x):
        return self.__model.predict(x)

    def __repr__(self):
        return f"InProcessApi(d={self.d}, C={self.n_classes})"


def wrap_in_process(model, budget: int | None = None) -> InProcessApi:
    return InProcessApi(model, budget)


# ---------------------------------------------------------------------------
# HTTP server
# ---------------------------------------------------------------------------


def _parse_instance(body: bytes, d: int) -> np.ndarray:
    try:
        doc = json.loads(body)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ProtocolError("BAD_JSON", str(exc)) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("x"), list):
        raise ProtocolError("BAD_REQUEST", 'body must be {"x": [numbers]}')
    xs = doc["x"]
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in xs):
        raise ProtocolError("BAD_REQUEST", "x entries must be numbers")
    if len(xs) != d:
        raise ProtocolError("DIM_MISMATCH", f"expected {d} features, got {len(xs)}")
    if not all(math.isfinite(v) for v in xs):
        raise ProtocolError("NON_FINITE", "x contains NaN or infinity")
    return np.array(xs, dtype=np.float64)


def _make_handler(model):
    d, C = model.d, model.n_classes

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        # headers and body go out as separate writes; avoid the delayed-ACK stall
        disable_nagle_algorithm = True

        def _send(self, status, doc):
            # json uses repr() for floats: shortest string that round-trips
            payload = json.dumps(doc).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def do_GET(self):
            if self.path == "/meta":
                self._send(200, {"d": d, "C": C})
            else:
                self._send(404, {"error": "NOT_FOUND", "detail": self.path})

        def do_POST(self):
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length)
            if self.path != "/predict":
                self._send(404, {"error": "NOT_FOUND", "detail": self.path})
                return
            try:
                x = _parse_instance(body, d)
            except ProtocolError as err:
                self._send(400, {"error": err.code, "detail": err.detail})
                return
            self._send(200, {"y": model.predict(x).tolist()})

        def log_message(self, fmt, *args):
            logger.debug("%s - " + fmt, self.address_string(), *args)

    return Handler


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, *args):
        super().__init__(*args)
        self.live = set()
        self._live_lock = threading.Lock()

    def process_request(self, request, client_address):
        with self._live_lock:
            self.live.add(request)
        super().process_request(request, client_address)

    def shutdown_request(self, request):
        with self._live_lock:
            self.live.discard(request)
        super().shutdown_request(request)

    def handle_error(self, request, client_address):
        logger.debug("connection from %s failed", client_address, exc_info=True)

    def drop_connections(self):
        with self._live_lock:
            live, self.live = list(self.live), set()
        for sock in live:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass


class ModelServer:
    """A model served over HTTP from a background thread."""

    def __init__(self, model, host: str = "127.0.0.1", port: int = 0):
        self.httpd = _Server((host, port), _make_handler(model))
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "ModelServer":
        self._thread.start()
        return self

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        self.httpd.drop_connections()
        self._thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve_http(model, host: str = "127.0.0.1", port: int = 0) -> ModelServer:
    """Start serving ``model``; port 0 picks a free port (see ``.url``)."""
    return ModelServer(model, host, port).start()


# ---------------------------------------------------------------------------
# HTTP client
# ---------------------------------------------------------------------------


class HttpApi(PredictionApi):
    """PredictionApi backed by a remote ``/predict`` endpoint.

    Keeps one persistent connection per calling thread.
    """

    def __init__(self, url: str, timeout: float = 30.0, budget: int | None = None):
        super().__init__(budget)
        parts = urlsplit(url)
        if parts.scheme != "http" or not parts.hostname:
            raise ValueError(f"unsupported endpoint {url!r}")
        self.url = url
        self._host = parts.hostname
        self._port = parts.port or 80
        self._timeout = timeout
        self._local = threading.local()
        meta = self._request("GET", "/meta")
        self.d = int(meta["d"])
        self.n_classes = int(meta["C"])

    def _connection(self) -> http.client.HTTPConnection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = http.client.HTTPConnection(self._host, self._port, timeout=self._timeout)
            self._local.conn = conn
        return conn

    def _request(self, method, path, body=None):
        headers = {"Content-Type": "application/json"} if body is not None else {}
        conn = self._connection()
        try:
            conn.request(method, path, body=body, headers=headers)
            resp = conn.getresponse()
            raw = resp.read()
        except (OSError, http.client.HTTPException) as exc:
            conn.close()
            self._local.conn = None
            raise TransportError(f"{method} {self.url}{path} failed: {exc}") from exc
        try:
            doc = json.loads(raw)
        except ValueError:
            raise ProtocolError("BAD_RESPONSE", raw[:200].decode(errors="replace"), resp.status)
        if resp.status != 200:
            raise ProtocolError(doc.get("error", "HTTP_ERROR"), doc.get("detail", ""), resp.status)
        return doc

    def _predict(self, x):
        doc = self._request("POST", "/predict", json.dumps({"x": x.tolist()}))
        y = np.array(doc["y"], dtype=np.float64)
        if y.shape != (self.n_classes,):
            raise ProtocolError("BAD_RESPONSE", f"expected {self.n_classes} probabilities")
        return y

    def close(self):
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None

    def __repr__(self):
        return f"HttpApi({self.url!r}, d={self.d}, C={self.n_classes})"


def connect_http(url: str, timeout: float = 30.0, budget: int | None = None) -> HttpApi:
    return HttpApi(url, timeout=timeout, budget=budget)


class MeteredApi(PredictionApi):
    """Forwards to another API while keeping a separate ledger (per task or per run)."""

    def __init__(self, inner: PredictionApi, budget: int | None = None):
        super().__init__(budget)
        self._inner = inner
        self.d = inner.d
        self.n_classes = inner.n_classes

    def _predict(self, x):
        return self._inner.predict(x)


def metered(api: PredictionApi, budget: int | None = None) -> MeteredApi:
    return MeteredApi(api, budget)
