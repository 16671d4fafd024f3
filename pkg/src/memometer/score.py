"""Score providers: the exact empirical-mixture score and remote bridges.

A score provider maps a batch of points plus a diffusion clock value m to
the gradient of the log marginal density at those points.  The exact
provider evaluates the score of the kernel-density mixture induced by a
training set under the noising kernel; the bridge provider forwards the
same contract over a framed binary protocol to an external process
(e.g. a trained score network on another runtime).
"""

from __future__ import annotations

import logging
import socket
import struct
import subprocess
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .dataset import Dataset
from .errors import BridgeError
from .schedule import Schedule, v_of_m

log = logging.getLogger(__name__)


@runtime_checkable
class ScoreProvider(Protocol):
    """Behavioral contract: evaluate(points, m) -> scores, same shape."""

    concurrent_ok: bool

    def evaluate(self, points: np.ndarray, m: float) -> np.ndarray: ...


class ZeroScore:
    """Stub provider with identically zero score; handy for integrator checks."""

    concurrent_ok = True

    def evaluate(self, points, m):
        return np.zeros_like(np.asarray(points, dtype=np.float64))


class ExactMixtureScore:
    """Exact score of the noised training mixture.

    At clock m the marginal density is an equal-weight mixture of
    isotropic Gaussians with means ``exp(-m) * y_i`` and variance v(m).
    The score is the softmax-weighted pull toward those means::

        s(x) = sum_i w_i(x) * (exp(-m) y_i - x) / v,
        w_i  = softmax_i( -|x - exp(-m) y_i|^2 / (2 v) )

    Weights are accumulated in float64 with max-subtraction, so the
    normalization constant of the mixture never appears.  Evaluation
    requires m > 0 (v = 0 is singular) and stays within the schedule's
    m range.

    ``top_k`` optionally truncates the mixture to the K nearest means
    per point.  This is an approximation and is off by default; when
    active, the largest dropped weight mass seen is logged.
    """

    concurrent_ok = True

    def __init__(self, dataset: Dataset, schedule: Schedule, top_k: int | None = None):
        self._init(np.asarray(dataset.samples, dtype=np.float64), schedule, top_k)

    @classmethod
    def from_points(cls, points, schedule: Schedule, top_k: int | None = None):
        """Build directly from a float64 matrix, skipping Dataset's float32
        storage; useful for synthetic mixtures in oracle experiments."""
        obj = cls.__new__(cls)
        obj._init(np.atleast_2d(np.asarray(points, dtype=np.float64)), schedule, top_k)
        return obj

    def _init(self, y: np.ndarray, schedule: Schedule, top_k: int | None):
        if y.ndim != 2 or y.shape[0] < 1:
            raise ValueError("mixture needs at least one sample")
        if top_k is not None and not 1 <= top_k <= y.shape[0]:
            raise ValueError("top_k must be in [1, n]")
        self._y = np.ascontiguousarray(y)
        self._y_sq = np.einsum("ij,ij->i", self._y, self._y)
        self._m_max = schedule.m_max
        self.top_k = top_k

    def evaluate(self, points, m):
        X = np.atleast_2d(np.asarray(points, dtype=np.float64))
        m = float(m)
        if m <= 0.0:
            raise ValueError("score is undefined at m <= 0 (zero perturbation variance)")
        if m > self._m_max * (1.0 + 1e-12):
            raise ValueError(f"m={m} beyond the schedule's terminal clock {self._m_max}")
        v = v_of_m(m)
        mu = np.exp(-m)
        logits = self._logits(X, m)
        if self.top_k is not None and self.top_k < len(self._y):
            return self._evaluate_topk(X, logits, mu, v)
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        return (mu * (w @ self._y) - X) / v

    def mixture_weights(self, points, m):
        """Per-point softmax weights over the training samples."""
        X = np.atleast_2d(np.asarray(points, dtype=np.float64))
        logits = self._logits(X, float(m))
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        return w / w.sum(axis=1, keepdims=True)

    def log_density(self, points, m):
        """Log mixture density up to its constant normalizer (stable log-sum-exp)."""
        X = np.atleast_2d(np.asarray(points, dtype=np.float64))
        logits = self._logits(X, float(m))
        peak = logits.max(axis=1)
        return peak + np.log(np.exp(logits - peak[:, None]).sum(axis=1))

    def _logits(self, X, m):
        v = v_of_m(m)
        if v <= 0.0:
            raise ValueError("score is undefined at m <= 0 (zero perturbation variance)")
        mu = np.exp(-m)
        x_sq = np.einsum("ij,ij->i", X, X)
        d_sq = x_sq[:, None] - (2.0 * mu) * (X @ self._y.T) + (mu * mu) * self._y_sq[None, :]
        np.maximum(d_sq, 0.0, out=d_sq)
        return -d_sq / (2.0 * v)

    def _evaluate_topk(self, X, logits, mu, v):
        k = self.top_k
        idx = np.argpartition(-logits, k - 1, axis=1)[:, :k]
        rows = np.arange(len(X))[:, None]
        sub = logits[rows, idx]
        peak = logits.max(axis=1, keepdims=True)
        total = np.exp(logits - peak).sum(axis=1)
        kept = np.exp(sub - peak).sum(axis=1)
        dropped = float(np.max(1.0 - kept / total))
        log.info("top-%d mixture truncation: max dropped weight mass %.3e", k, dropped)
        w = np.exp(sub - sub.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        pulled = np.einsum("bk,bkj->bj", w, self._y[idx])
        return (mu * pulled - X) / v


# ---------------------------------------------------------------------------
# Framed binary protocol shared with external score servers.
#
# Frame layout (little endian):
#   magic  4 bytes  "SCR1"
#   kind   1 byte   0=request, 1=response, 2=error
#   m      8 bytes  IEEE-754 double
#   count  4 bytes  unsigned; data frames: number of float32 payload values
#                   (points * dims); error frames: UTF-8 message byte length
#   dims   4 bytes  unsigned; point dimension D for data frames, 0 for errors
#   payload         count * 4 bytes of float32 values, or the message bytes
# ---------------------------------------------------------------------------

FRAME_MAGIC = b"SCR1"
FRAME_HEADER = struct.Struct("<4sBdII")
KIND_REQUEST, KIND_RESPONSE, KIND_ERROR = 0, 1, 2
MAX_FRAME_VALUES = 1 << 20  # client splits batches beyond this many floats


@dataclass(frozen=True)
class ScoreFrame:
    """One decoded protocol frame."""

    kind: int
    m: float
    dims: int
    values: np.ndarray | None = None  # float32, data frames
    message: str = ""                 # error frames

    def encode(self) -> bytes:
        if self.kind == KIND_ERROR:
            payload = self.message.encode("utf-8")
            header = FRAME_HEADER.pack(FRAME_MAGIC, self.kind, self.m, len(payload), 0)
            return header + payload
        vals = np.ascontiguousarray(self.values, dtype="<f4")
        header = FRAME_HEADER.pack(FRAME_MAGIC, self.kind, self.m, vals.size, self.dims)
        return header + vals.tobytes()


def decode_frame(buf: bytes) -> tuple[ScoreFrame, int]:
    """Decode one frame from the head of ``buf``; returns (frame, bytes consumed).

    Raises BridgeError on a corrupt header; an incomplete buffer raises
    ``IncompleteFrame`` so stream readers can wait for more bytes.
    """
    if len(buf) < FRAME_HEADER.size:
        raise IncompleteFrame(FRAME_HEADER.size - len(buf))
    magic, kind, m, count, dims = FRAME_HEADER.unpack_from(buf)
    if magic != FRAME_MAGIC:
        raise BridgeError(f"bad frame magic {magic!r}")
    if kind not in (KIND_REQUEST, KIND_RESPONSE, KIND_ERROR):
        raise BridgeError(f"unknown frame kind {kind}")
    payload_len = count if kind == KIND_ERROR else 4 * count
    total = FRAME_HEADER.size + payload_len
    if len(buf) < total:
        raise IncompleteFrame(total - len(buf))
    payload = buf[FRAME_HEADER.size:total]
    if kind == KIND_ERROR:
        return ScoreFrame(kind=kind, m=m, dims=0, message=payload.decode("utf-8")), total
    values = np.frombuffer(payload, dtype="<f4").copy()
    return ScoreFrame(kind=kind, m=m, dims=dims, values=values), total


class IncompleteFrame(Exception):
    """More bytes are required before the frame at the buffer head parses."""

    def __init__(self, missing: int):
        super().__init__(f"need {missing} more bytes")
        self.missing = missing


class _StdioTransport:
    def __init__(self, command: str):
        self._proc = subprocess.Popen(
            command, shell=True, stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )
        if self._proc.stdin is None or self._proc.stdout is None:
            raise BridgeError("failed to open bridge pipes")

    def send(self, data: bytes):
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeError(f"bridge process pipe closed: {exc}") from exc

    def recv(self, n: int) -> bytes:
        data = self._proc.stdout.read(n)
        if data is None:
            data = b""
        return data

    def close(self):
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise BridgeError(f"cannot connect to bridge at {host}:{port}: {exc}") from exc

    def send(self, data: bytes):
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise BridgeError(f"bridge connection lost: {exc}") from exc

    def recv(self, n: int) -> bytes:
        try:
            return self._sock.recv(n)
        except socket.timeout as exc:
            raise BridgeError("bridge read timed out") from exc

    def close(self):
        self._sock.close()


class BridgeScoreProvider:
    """Score provider backed by an external process speaking the frame protocol.

    One request is in flight per connection, so the provider declares
    itself non-concurrent; callers batch instead.  Large batches are
    split transparently into frames of at most ``MAX_FRAME_VALUES``
    payload floats.
    """

    concurrent_ok = False

    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.endpoint = endpoint
        self.timeout = timeout
        if endpoint.startswith("stdio:"):
            self._transport = _StdioTransport(endpoint[len("stdio:"):])
        elif endpoint.startswith("tcp:"):
            host, _, port = endpoint[len("tcp:"):].rpartition(":")
            if not host or not port.isdigit():
                raise BridgeError(f"malformed tcp endpoint {endpoint!r}")
            self._transport = _TcpTransport(host, int(port), timeout)
        else:
            raise BridgeError(f"unknown bridge endpoint {endpoint!r} (want stdio:... or tcp:host:port)")
        self._buf = b""

    def evaluate(self, points, m):
        X = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n, dims = X.shape
        out = np.empty_like(X)
        rows_per_frame = max(1, MAX_FRAME_VALUES // max(dims, 1))
        for start in range(0, n, rows_per_frame):
            chunk = X[start:start + rows_per_frame]
            frame = ScoreFrame(
                kind=KIND_REQUEST, m=float(m), dims=dims,
                values=chunk.astype("<f4").reshape(-1),
            )
            self._transport.send(frame.encode())
            reply = self._read_frame()
            if reply.kind == KIND_ERROR:
                raise BridgeError(f"bridge error: {reply.message}")
            if reply.kind != KIND_RESPONSE or reply.values.size != chunk.size:
                raise BridgeError(
                    f"bad bridge reply (kind={reply.kind}, count={reply.values.size}, "
                    f"expected {chunk.size})"
                )
            out[start:start + len(chunk)] = reply.values.astype(np.float64).reshape(chunk.shape)
        if n == 0:
            # zero-point request still validates the connection
            frame = ScoreFrame(kind=KIND_REQUEST, m=float(m), dims=dims,
                               values=np.empty(0, dtype="<f4"))
            self._transport.send(frame.encode())
            reply = self._read_frame()
            if reply.kind == KIND_ERROR:
                raise BridgeError(f"bridge error: {reply.message}")
        return out

    def close(self):
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _read_frame(self) -> ScoreFrame:
        while True:
            try:
                frame, used = decode_frame(self._buf)
            except IncompleteFrame as inc:
                # request exactly the missing byte count: pipe reads block
                # until the full requested amount arrives
                data = self._transport.recv(inc.missing)
                if not data:
                    raise BridgeError("bridge closed the connection mid-frame") from None
                self._buf += data
                continue
            self._buf = self._buf[used:]
            return frame


def provider_from_spec(spec: str, dataset: Dataset | None, schedule: Schedule) -> ScoreProvider:
    """Build a provider from a CLI-style spec string.

    ``exact`` uses the in-process mixture score of ``dataset``;
    ``bridge:stdio:<command>`` / ``bridge:tcp:<host:port>`` connect out.
    """
    if spec == "exact":
        if dataset is None:
            raise ValueError("exact provider needs a dataset")
        return ExactMixtureScore(dataset, schedule)
    if spec.startswith("bridge:"):
        return BridgeScoreProvider(spec[len("bridge:"):])
    raise ValueError(f"unknown provider spec {spec!r}")
