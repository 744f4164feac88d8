import socket
import threading

import numpy as np
import pytest

from sftl.arith import U64
from sftl.net import (HEADER_SIZE, FrameError, MsgType, PeerAborted, TransportError, accept,
                      connect, frame_size, free_port, loopback_pair)


def pair_run(fa, fb, transcripts=False):
    a, b = loopback_pair(transcripts)
    out = [None, None]

    def run(i, ch, fn):
        try:
            out[i] = fn(ch)
        except BaseException as exc:  # noqa: BLE001
            out[i] = exc

    ts = [threading.Thread(target=run, args=(0, a, fa)), threading.Thread(target=run, args=(1, b, fb))]
    for t in ts:
        t.start()
    for t in ts:
        t.join(30)
    return out, (a, b)


def test_golden_frame():
    (_, got), (a, b) = pair_run(lambda ch: ch.send_elements(MsgType.OPEN, np.array([5], dtype=U64)),
                                lambda ch: ch.sock.recv(64, socket.MSG_WAITALL))
    assert got == bytes.fromhex("08000000" "02" "00000000" "0500000000000000")
    assert a.stats.bytes_sent == 17


def test_open_sizes():
    for n, size in ((1, 17), (0, 9), (32, 9 + 256)):
        arr = np.arange(n, dtype=U64)
        (ra, rb), (a, b) = pair_run(lambda ch: ch.exchange_open(arr), lambda ch: ch.exchange_open(arr + U64(1)))
        assert frame_size(n) == size
        assert a.stats.bytes_sent == b.stats.bytes_received == size
        assert a.stats.rounds == b.stats.rounds == 1
        assert np.array_equal(ra, arr + U64(1)) and np.array_equal(rb, arr)


def test_directed_gradient_row():
    row = np.arange(32, dtype=U64)
    (_, got), (a, b) = pair_run(lambda ch: ch.send_elements(MsgType.OUTPUT, row),
                                lambda ch: ch.recv_elements(MsgType.OUTPUT))
    assert np.array_equal(got, row)
    assert a.stats.bytes_sent == 9 + 256 == b.stats.bytes_received


def test_echo_many_frames():
    rng = np.random.default_rng(0)
    frames = [rng.integers(0, 256, size=rng.integers(0, 64), dtype=np.uint8).tobytes()
              for _ in range(10_000)]

    def sender(ch):
        for f in frames:
            ch.send(MsgType.OPEN, f)
        return [ch.recv(MsgType.OPEN) for _ in frames]

    def echo(ch):
        got = [ch.recv(MsgType.OPEN) for _ in frames]
        for f in got:
            ch.send(MsgType.OPEN, f)
        return got

    (back, got), (a, b) = pair_run(sender, echo)
    assert got == frames and back == frames
    assert a.stats.bytes_sent == b.stats.bytes_received == a.stats.bytes_received


def test_large_exchange_does_not_deadlock():
    big = np.arange(200_000, dtype=U64)
    (ra, rb), _ = pair_run(lambda ch: ch.exchange_open(big), lambda ch: ch.exchange_open(big[::-1].copy()))
    assert np.array_equal(ra, big[::-1]) and np.array_equal(rb, big)


def test_transcript_totals():
    def fa(ch):
        ch.exchange_open(np.arange(3, dtype=U64))
        ch.send(MsgType.OUTPUT, b"xy")

    def fb(ch):
        ch.exchange_open(np.arange(3, dtype=U64))
        ch.recv(MsgType.OUTPUT)

    _, (a, b) = pair_run(fa, fb, transcripts=True)
    assert a.transcript.total_bytes("send") == a.stats.bytes_sent == 33 + 11
    assert b.transcript.total_bytes("recv") == b.stats.bytes_received
    assert [e.mode for e in a.transcript.entries] == ["exchange", "exchange", "directed"]
    assert a.transcript.entries[-1].payload == b"xy"


def test_wrong_type_is_frame_error():
    (_, err), _ = pair_run(lambda ch: ch.send(MsgType.OPEN, b""), lambda ch: ch.recv(MsgType.OUTPUT))
    assert isinstance(err, FrameError)


def test_abort_frame_raises_peer_aborted():
    (_, err), _ = pair_run(lambda ch: ch.send_abort("cheat"), lambda ch: ch.recv(MsgType.OPEN))
    assert isinstance(err, PeerAborted) and "cheat" in str(err)


def test_recv_on_closed_channel():
    a, b = loopback_pair()
    a.close()
    with pytest.raises(TransportError):
        b.recv(MsgType.OPEN)
    with pytest.raises(TransportError):
        a.send(MsgType.OPEN, b"x")


def test_connect_accept_and_timeout():
    port = free_port()
    box = {}
    t = threading.Thread(target=lambda: box.setdefault("ch", accept(port, timeout=10)))
    t.start()
    ch = connect(f"127.0.0.1:{port}", timeout=10)
    t.join()
    ch.send(MsgType.HANDSHAKE, b"hi")
    assert box["ch"].recv(MsgType.HANDSHAKE) == b"hi"
    ch.close()
    box["ch"].close()
    with pytest.raises(TimeoutError):
        connect(("127.0.0.1", free_port()), timeout=0.3)


def test_header_size():
    assert HEADER_SIZE == 9
