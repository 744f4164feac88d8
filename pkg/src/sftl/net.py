"""Framed two-party transport over TCP with exact byte/round metering.

Wire format of one frame (all little-endian)::

    u32 payload length | u8 msg_type | u32 sequence number | payload

The sequence number counts frames per direction and lets the receiver
detect desynchronisation. Element payloads are 8 bytes per element.
"""

import socket
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .arith import from_wire, to_wire

HEADER = struct.Struct("<IBI")
HEADER_SIZE = HEADER.size  # 9
_INLINE_SEND = 1 << 15


class MsgType(IntEnum):
    HANDSHAKE = 1
    OPEN = 2
    MASK_DELTA = 3
    COMMIT = 4
    REVEAL = 5
    OUTPUT = 6
    CONTROL = 7


class TransportError(ConnectionError):
    pass


class FrameError(TransportError):
    pass


class PeerAborted(TransportError):
    """The peer sent an abort control frame."""


def frame_size(n_elements):
    return HEADER_SIZE + 8 * n_elements


@dataclass
class ChannelStats:
    bytes_sent: int = 0
    bytes_received: int = 0
    rounds: int = 0

    def snapshot(self):
        return ChannelStats(self.bytes_sent, self.bytes_received, self.rounds)

    def __sub__(self, other):
        return ChannelStats(self.bytes_sent - other.bytes_sent,
                            self.bytes_received - other.bytes_received,
                            self.rounds - other.rounds)


@dataclass
class TranscriptEntry:
    direction: str  # "send" | "recv"
    msg_type: MsgType
    label: str
    nbytes: int
    mode: str  # "exchange" | "directed"
    payload: bytes = b""


@dataclass
class Transcript:
    entries: list = field(default_factory=list)

    def record(self, *args):
        self.entries.append(TranscriptEntry(*args))

    def total_bytes(self, direction):
        return sum(e.nbytes for e in self.entries if e.direction == direction)


class Channel:
    """One party's end of a two-party session.

    ``exchange`` is the symmetric round (both send, both receive) used for
    openings; ``send``/``recv`` are directed transfers. Each call counts as
    one round on this side.
    """

    def __init__(self, sock, transcript=None, timeout=300.0):
        self.sock = sock
        self.sock.settimeout(timeout)
        try:
            self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except OSError:
            pass
        self.stats = ChannelStats()
        self.transcript = transcript
        self._send_seq = 0
        self._recv_seq = 0
        self._pool = ThreadPoolExecutor(max_workers=1)
        self.closed = False

    # raw frames
    def _pack(self, msg_type, payload):
        header = HEADER.pack(len(payload), int(msg_type), self._send_seq)
        self._send_seq = (self._send_seq + 1) & 0xFFFFFFFF
        return header + payload

    def _sendall(self, data):
        try:
            self.sock.sendall(data)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def _recv_exact(self, n):
        buf = bytearray(n)
        view = memoryview(buf)
        got = 0
        while got < n:
            try:
                k = self.sock.recv_into(view[got:], n - got)
            except OSError as exc:
                raise TransportError(f"recv failed: {exc}") from exc
            if k == 0:
                raise TransportError("peer closed the channel")
            got += k
        return bytes(buf)

    def _read_frame(self, expected):
        length, msg_type, seq = HEADER.unpack(self._recv_exact(HEADER_SIZE))
        payload = self._recv_exact(length) if length else b""
        if msg_type == MsgType.CONTROL and payload.startswith(b"ABORT"):
            raise PeerAborted(payload[6:].decode(errors="replace"))
        if seq != self._recv_seq:
            raise FrameError(f"sequence {seq} != expected {self._recv_seq}")
        self._recv_seq = (self._recv_seq + 1) & 0xFFFFFFFF
        if expected is not None and msg_type != expected:
            raise FrameError(f"got {MsgType(msg_type).name}, expected {MsgType(expected).name}")
        self.stats.bytes_received += HEADER_SIZE + length
        return MsgType(msg_type), payload

    def _log(self, direction, msg_type, label, payload, mode):
        if self.transcript is not None:
            self.transcript.record(direction, MsgType(msg_type), label, HEADER_SIZE + len(payload),
                                   mode, bytes(payload))

    # public API
    def send(self, msg_type, payload, label=""):
        data = self._pack(msg_type, payload)
        self._sendall(data)
        self.stats.bytes_sent += len(data)
        self.stats.rounds += 1
        self._log("send", msg_type, label, payload, "directed")

    def recv(self, msg_type, label=""):
        _, payload = self._read_frame(msg_type)
        self.stats.rounds += 1
        self._log("recv", msg_type, label, payload, "directed")
        return payload

    def exchange(self, msg_type, payload, label=""):
        data = self._pack(msg_type, payload)
        if len(data) <= _INLINE_SEND:
            self._sendall(data)
            _, peer = self._read_frame(msg_type)
        else:
            fut = self._pool.submit(self._sendall, data)
            try:
                _, peer = self._read_frame(msg_type)
            finally:
                fut.result()
        self.stats.bytes_sent += len(data)
        self.stats.rounds += 1
        self._log("send", msg_type, label, payload, "exchange")
        self._log("recv", msg_type, label, peer, "exchange")
        return peer

    def send_elements(self, msg_type, arr, label=""):
        self.send(msg_type, to_wire(arr), label)

    def recv_elements(self, msg_type, label=""):
        return from_wire(self.recv(msg_type, label))

    def exchange_elements(self, msg_type, arr, label=""):
        return from_wire(self.exchange(msg_type, to_wire(arr), label))

    def exchange_open(self, arr, label="open"):
        """Symmetric one-round opening of an element array."""
        return self.exchange_elements(MsgType.OPEN, np.ravel(arr), label)

    def send_abort(self, reason=""):
        if self.closed:
            return
        try:
            data = self._pack(MsgType.CONTROL, b"ABORT:" + reason.encode()[:200])
            self.sock.sendall(data)
        except OSError:
            pass

    def close(self):
        if self.closed:
            return
        self.closed = True
        self._pool.shutdown(wait=False)
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect(addr, timeout=10.0, **kw):
    """Connect to ``host:port`` (string or tuple), retrying until ``timeout``."""
    if isinstance(addr, str):
        host, port = addr.rsplit(":", 1)
        addr = (host, int(port))
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection(addr, timeout=max(0.1, deadline - time.monotonic()))
            return Channel(sock, **kw)
        except OSError as exc:
            if time.monotonic() >= deadline:
                raise TimeoutError(f"could not connect to {addr[0]}:{addr[1]}: {exc}") from exc
            time.sleep(0.05)


def listen(port, host="127.0.0.1"):
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(1)
    return srv


def accept(port_or_server, host="127.0.0.1", timeout=30.0, **kw):
    """Wait for the peer on ``port`` (or an already-listening socket)."""
    srv = listen(port_or_server, host) if isinstance(port_or_server, int) else port_or_server
    srv.settimeout(timeout)
    try:
        sock, _ = srv.accept()
    except socket.timeout as exc:
        raise TimeoutError("no peer connected") from exc
    finally:
        srv.close()
    return Channel(sock, **kw)


def free_port(host="127.0.0.1"):
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        s.bind((host, 0))
        return s.getsockname()[1]


def loopback_pair(transcripts=False):
    """Two connected channels over real loopback TCP."""
    srv = listen(0)
    port = srv.getsockname()[1]
    client = socket.create_connection(("127.0.0.1", port))
    server_sock, _ = srv.accept()
    srv.close()
    return (Channel(server_sock, Transcript() if transcripts else None),
            Channel(client, Transcript() if transcripts else None))
