"""Framed TCP protocol between the sampler and a remote model server.

Frame layout: magic ``PTD1``, u8 message type, u32 LE header length,
canonical UTF-8 JSON header, u64 LE payload length, then a raw
little-endian f32 payload. Canonical JSON means sorted keys, no
whitespace, ASCII escapes, and integer-only numbers, so any conforming
implementation re-encodes a decoded frame byte-identically.
"""

import json
import socket
import socketserver
import struct
import threading
import zlib
from enum import IntEnum

import numpy as np

from .errors import BackendError, ConditionError, DataError, ParameterError

MAGIC = b"PTD1"
MAX_PAYLOAD = 1 << 31  # refuse absurd frames instead of allocating blindly
NULL_COND_ID = 0


class FrameType(IntEnum):
    HELLO = 0
    EMBED_TEXT = 1
    EPS = 2
    ENCODE = 3
    DECODE = 4
    RESULT = 5
    ERROR = 6
    BYE = 7


def _check_header_value(value, path):
    if isinstance(value, bool) or value is None:
        raise ParameterError(f"header field {path} has unsupported type")
    if isinstance(value, (str, int)):
        return
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _check_header_value(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise ParameterError(f"header key under {path} must be str")
            _check_header_value(item, f"{path}.{key}")
        return
    raise ParameterError(
        f"header field {path} has unsupported type {type(value).__name__}"
    )


def canonical_header(header):
    """Serialize a header dict to canonical JSON bytes."""
    if not isinstance(header, dict):
        raise ParameterError("header must be a dict")
    _check_header_value(header, "$")
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii")


def encode_frame(msg_type, header, payload=b""):
    msg_type = FrameType(msg_type)
    body = canonical_header(header)
    if len(payload) % 4 != 0:
        raise ParameterError(f"payload length {len(payload)} is not a multiple of 4")
    return b"".join([
        MAGIC,
        struct.pack("<B", int(msg_type)),
        struct.pack("<I", len(body)),
        body,
        struct.pack("<Q", len(payload)),
        bytes(payload),
    ])


def decode_frame(data, offset=0):
    """Parse one frame from ``data``; returns (type, header, payload, end)."""
    need = offset + 9
    if len(data) < need:
        raise DataError("frame truncated before header length")
    if data[offset:offset + 4] != MAGIC:
        raise DataError(f"bad magic {data[offset:offset + 4]!r}")
    type_code = data[offset + 4]
    try:
        msg_type = FrameType(type_code)
    except ValueError:
        raise DataError(f"unknown message type {type_code}") from None
    (header_len,) = struct.unpack_from("<I", data, offset + 5)
    if len(data) < need + header_len + 8:
        raise DataError("frame truncated inside header")
    raw_header = data[need:need + header_len]
    try:
        header = json.loads(raw_header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise DataError("header must be a JSON object")
    if canonical_header(header) != raw_header:
        raise DataError("header is not in canonical form")
    pos = need + header_len
    (payload_len,) = struct.unpack_from("<Q", data, pos)
    if payload_len > MAX_PAYLOAD:
        raise DataError(f"payload length {payload_len} exceeds limit")
    pos += 8
    if len(data) < pos + payload_len:
        raise DataError("frame truncated inside payload")
    payload = bytes(data[pos:pos + payload_len])
    return msg_type, header, payload, pos + payload_len


def tensor_to_payload(arr):
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def payload_to_tensor(payload, shape):
    expected = 4 * int(np.prod(shape)) if shape else 4
    arr = np.frombuffer(payload, dtype="<f4")
    if arr.size * 4 != expected or expected != len(payload):
        raise DataError(
            f"payload has {len(payload)} bytes, shape {shape} needs {expected}"
        )
    return arr.reshape(shape).astype(np.float64)


def _recv_exact(sock, n):
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            raise BackendError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock):
    """Read exactly one frame from a socket."""
    head = _recv_exact(sock, 9)
    if head[:4] != MAGIC:
        raise DataError(f"bad magic {head[:4]!r}")
    (header_len,) = struct.unpack_from("<I", head, 5)
    rest = _recv_exact(sock, header_len + 8)
    (payload_len,) = struct.unpack_from("<Q", rest, header_len)
    if payload_len > MAX_PAYLOAD:
        raise DataError(f"payload length {payload_len} exceeds limit")
    payload = _recv_exact(sock, payload_len) if payload_len else b""
    msg_type, header, payload, _ = decode_frame(
        head + rest + payload
    )
    return msg_type, header, payload


def parse_addr(addr):
    host, sep, port = addr.rpartition(":")
    if not sep or not host:
        raise ParameterError(f"addr must look like host:port, got {addr!r}")
    try:
        return host, int(port)
    except ValueError:
        raise ParameterError(f"port in {addr!r} is not an integer") from None


class Ptd1Client:
    """Blocking client; one request in flight at a time."""

    def __init__(self, addr, timeout=30.0):
        host, port = parse_addr(addr)
        self.addr = addr
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise BackendError(f"cannot connect to {addr}: {exc}") from exc
        self._lock = threading.Lock()
        self._next_id = 1
        self.hello_info = None
        try:
            self.hello_info = self._roundtrip(FrameType.HELLO, {})[0]
        except Exception:
            self.close()
            raise

    def close(self):
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        try:
            self.bye()
        except (BackendError, DataError):
            pass
        self.close()
        return False

    def _roundtrip(self, msg_type, header, payload=b""):
        if self._sock is None:
            raise BackendError("client is closed")
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            header = dict(header)
            header["id"] = req_id
            try:
                self._sock.sendall(encode_frame(msg_type, header, payload))
                resp_type, resp_header, resp_payload = read_frame(self._sock)
            except OSError as exc:
                raise BackendError(f"transport failure on {self.addr}: {exc}") from exc
        if resp_header.get("id") != req_id:
            raise BackendError(
                f"response id {resp_header.get('id')} does not match request {req_id}"
            )
        if resp_type == FrameType.ERROR:
            code = resp_header.get("code", "unknown")
            message = resp_header.get("message", "")
            if code == "cond_unknown":
                raise ConditionError(f"server rejected condition: {message}")
            raise BackendError(f"server error {code}: {message}")
        if resp_type != FrameType.RESULT:
            raise BackendError(f"unexpected response frame type {resp_type.name}")
        return resp_header, resp_payload

    def embed_text(self, text):
        header, _ = self._roundtrip(FrameType.EMBED_TEXT, {"text": str(text)})
        cond = header.get("cond")
        if not isinstance(cond, int):
            raise BackendError(f"embed response lacks integer cond: {header}")
        return cond

    def eps(self, z, t, cond_id):
        z = np.asarray(z, dtype=np.float64)
        header, payload = self._roundtrip(
            FrameType.EPS,
            {"cond": int(cond_id), "shape": list(z.shape), "t": int(t)},
            tensor_to_payload(z),
        )
        return payload_to_tensor(payload, tuple(header.get("shape", z.shape)))

    def encode_image(self, image):
        image = np.asarray(image, dtype=np.float64)
        header, payload = self._roundtrip(
            FrameType.ENCODE, {"shape": list(image.shape)}, tensor_to_payload(image)
        )
        return payload_to_tensor(payload, tuple(header["shape"]))

    def decode_latent(self, z):
        z = np.asarray(z, dtype=np.float64)
        header, payload = self._roundtrip(
            FrameType.DECODE, {"shape": list(z.shape)}, tensor_to_payload(z)
        )
        return payload_to_tensor(payload, tuple(header["shape"]))

    def bye(self):
        self._roundtrip(FrameType.BYE, {})


def embed_id_for_text(text):
    """Deterministic condition id used by the echo server: 0 for empty text."""
    if text == "":
        return NULL_COND_ID
    return (zlib.crc32(text.encode("utf-8")) & 0x7FFFFFFF) or 1


class _EchoHandler(socketserver.BaseRequestHandler):
    def handle(self):
        advert = self.server.advert
        while True:
            try:
                msg_type, header, payload = read_frame(self.request)
            except (BackendError, DataError):
                return
            req_id = header.get("id", 0)
            if msg_type == FrameType.HELLO:
                resp = dict(advert)
                resp["id"] = req_id
                frame = encode_frame(FrameType.RESULT, resp)
            elif msg_type == FrameType.EMBED_TEXT:
                cond = embed_id_for_text(header.get("text", ""))
                frame = encode_frame(FrameType.RESULT, {"cond": cond, "id": req_id})
            elif msg_type in (FrameType.EPS, FrameType.ENCODE, FrameType.DECODE):
                shape = header.get("shape", [])
                frame = encode_frame(
                    FrameType.RESULT, {"id": req_id, "shape": shape}, payload
                )
            elif msg_type == FrameType.BYE:
                self.request.sendall(encode_frame(FrameType.RESULT, {"id": req_id}))
                return
            else:
                frame = encode_frame(
                    FrameType.ERROR,
                    {"code": "bad_request", "id": req_id,
                     "message": f"unexpected frame {msg_type.name}"},
                )
            self.request.sendall(frame)


class EchoServer:
    """Loopback conformance fixture: answers every tensor request verbatim."""

    def __init__(self, host="127.0.0.1", port=0, shape=(1, 16, 16), t_train=1000,
                 schedule="scaled_linear"):
        class _Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = _Server((host, port), _EchoHandler)
        self._server.advert = {
            "model": "echo",
            "schedule": schedule,
            "shape": list(shape),
            "t_train": int(t_train),
        }
        self._thread = None

    @property
    def addr(self):
        host, port = self._server.server_address[:2]
        return f"{host}:{port}"

    def start(self):
        self._thread = threading.Thread(
            target=self._server.serve_forever, daemon=True
        )
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc_info):
        self.stop()
        return False

    def serve_forever(self):
        self._server.serve_forever()
