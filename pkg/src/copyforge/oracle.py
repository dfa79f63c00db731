"""Hard-label membership query access to an original classifier.

An :class:`Oracle` wraps either an in-process model (anything with
``predict``, or a plain callable) or a :class:`RemoteEndpoint` speaking the
text protocol below, and counts how many points it actually forwarded.

Wire protocol: ``POST <url>/predict`` with a text body holding one point per
line, features as comma-separated decimal floats. The reply is one integer
label per line, in request order, with status 200.
"""
from __future__ import annotations

import logging
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .core import CopyforgeError, DimensionError, as_points

log = logging.getLogger(__name__)


class OracleError(CopyforgeError):
    pass


class OracleTransportError(OracleError):
    """Network-level failure (timeout, refused connection, non-200 status). Retryable."""


class OracleResponseError(OracleError):
    """The remote answered but the payload is malformed or has the wrong arity."""


@dataclass(frozen=True)
class RemoteEndpoint:
    url: str
    timeout_ms: int = 10_000
    batch_size: int = 1024

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.timeout_ms < 1:
            raise ValueError("timeout_ms must be positive")


def encode_points(points) -> bytes:
    P = as_points(points)
    # repr() is the shortest decimal that round-trips the float exactly
    return ("\n".join(",".join(repr(float(v)) for v in row) for row in P) + "\n").encode()


def decode_points(body: bytes) -> np.ndarray:
    lines = [ln for ln in body.decode().splitlines() if ln.strip()]
    return np.array([[float(v) for v in ln.split(",")] for ln in lines], dtype=float)


def encode_labels(labels) -> bytes:
    return ("\n".join(str(int(v)) for v in labels) + "\n").encode()


def decode_labels(body: bytes) -> np.ndarray:
    try:
        text = body.decode()
        return np.array([int(ln) for ln in text.splitlines() if ln.strip()], dtype=np.int64)
    except (UnicodeDecodeError, ValueError) as exc:
        raise OracleResponseError(f"malformed label payload: {exc}") from exc


def remote_predict(endpoint: RemoteEndpoint, batch) -> np.ndarray:
    """Send one batch to a remote oracle and parse its labels."""
    P = as_points(batch)
    if P.shape[0] == 0:
        raise ValueError("batch is empty")
    if P.shape[0] > endpoint.batch_size:
        raise ValueError(f"batch of {P.shape[0]} exceeds endpoint batch_size {endpoint.batch_size}")
    req = urllib.request.Request(
        endpoint.url.rstrip("/") + "/predict",
        data=encode_points(P),
        headers={"Content-Type": "text/plain"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(req, timeout=endpoint.timeout_ms / 1000.0) as resp:
            body = resp.read()
    except urllib.error.HTTPError as exc:
        raise OracleTransportError(f"remote oracle returned status {exc.code}") from exc
    except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
        raise OracleTransportError(f"remote oracle unreachable: {exc}") from exc
    labels = decode_labels(body)
    if labels.size != P.shape[0]:
        raise OracleResponseError(f"remote returned {labels.size} labels for {P.shape[0]} points")
    return labels


class Oracle:
    """Deterministic hard-label predictor with a query counter and optional cache.

    ``query_count`` counts points forwarded to the backend. With
    ``cache=True`` a point whose coordinates are bit-identical to an earlier
    one is answered from memory and not counted again.
    """

    def __init__(self, backend, dim: int, n_classes: int | None = None, cache: bool = False, retries: int = 2):
        if isinstance(backend, RemoteEndpoint):
            self._call = self._call_remote
        elif hasattr(backend, "predict"):
            self._call = lambda P: np.asarray(backend.predict(P), dtype=np.int64)
        elif callable(backend):
            self._call = lambda P: np.asarray(backend(P), dtype=np.int64)
        else:
            raise TypeError("backend must be a RemoteEndpoint, a model with predict(), or a callable")
        self.backend = backend
        self.dim = int(dim)
        if n_classes is None:
            n_classes = getattr(backend, "k", None)
        self.n_classes = None if n_classes is None else int(n_classes)
        self.retries = int(retries)
        self._cache = {} if cache else None
        self._count = 0
        self._lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._count

    @property
    def caching(self) -> bool:
        return self._cache is not None

    def _call_remote(self, P):
        ep = self.backend
        out = np.empty(P.shape[0], dtype=np.int64)
        for s in range(0, P.shape[0], ep.batch_size):
            for attempt in range(self.retries + 1):
                try:
                    out[s : s + ep.batch_size] = remote_predict(ep, P[s : s + ep.batch_size])
                    break
                except OracleTransportError:
                    if attempt == self.retries:
                        raise
                    log.warning("remote oracle transport failure, retry %d/%d", attempt + 1, self.retries)
                    time.sleep(0.05 * 2**attempt)
        return out

    def _backend(self, P):
        labels = self._call(P)
        if labels.shape != (P.shape[0],):
            raise OracleResponseError(f"backend returned {labels.shape} for {P.shape[0]} points")
        if labels.size and (labels.min() < 0 or (self.n_classes is not None and labels.max() >= self.n_classes)):
            raise OracleResponseError("backend returned a label outside [0, k)")
        return labels

    def query(self, points) -> np.ndarray:
        P = as_points(points, self.dim)
        if P.shape[0] == 0:
            return np.empty(0, dtype=np.int64)
        if self._cache is None:
            labels = self._backend(P)
            with self._lock:
                self._count += P.shape[0]
            return labels

        P = np.ascontiguousarray(P)
        keys = [row.tobytes() for row in P]
        out = np.empty(P.shape[0], dtype=np.int64)
        with self._lock:
            missing = {}
            for i, key in enumerate(keys):
                hit = self._cache.get(key)
                if hit is None:
                    missing.setdefault(key, i)
                else:
                    out[i] = hit
        if missing:
            rows = np.fromiter(missing.values(), dtype=np.int64)
            fresh = self._backend(P[rows])
            with self._lock:
                for key, label in zip(missing, fresh):
                    if key not in self._cache:
                        self._cache[key] = int(label)
                        self._count += 1
        with self._lock:
            for i, key in enumerate(keys):
                out[i] = self._cache[key]
        return out

    __call__ = query


def query(oracle: Oracle, points) -> np.ndarray:
    return oracle.query(points)


# ---------------------------------------------------------------------------
# serving an in-process model over the wire protocol


def _make_handler(model):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            if self.path.rstrip("/") != "/predict":
                self.send_error(404)
                return
            length = int(self.headers.get("Content-Length", 0))
            try:
                P = decode_points(self.rfile.read(length))
                labels = model.predict(P) if P.size else np.empty(0, dtype=np.int64)
            except Exception as exc:  # report any model failure as a 400
                self.send_error(400, str(exc))
                return
            body = encode_labels(labels)
            self.send_response(200)
            self.send_header("Content-Type", "text/plain")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, fmt, *args):
            log.debug("oracle server: " + fmt, *args)

    return Handler


def serve(model, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Start a background HTTP server exposing ``model`` as a remote oracle.

    Returns the server; its URL is ``http://host:server.server_port``. Call
    ``server.shutdown()`` to stop it.
    """
    server = ThreadingHTTPServer((host, port), _make_handler(model))
    server.daemon_threads = True
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


def server_url(server: ThreadingHTTPServer) -> str:
    host, port = server.server_address[:2]
    return f"http://{host}:{port}"
