"""Live WebSocket server: protocol, ordering, isolation, endpoints."""

import asyncio
import hashlib
import json
import time

import httpx
import pytest
from hypothesis import given, settings, strategies as st
from websockets.sync.client import connect

from cosketch.config import ServiceConfig
from cosketch.protocol import (
    BlobStateMsg,
    ErrorMsg,
    Hello,
    Ping,
    ResultPatchMsg,
    StrokeEcho,
    StrokeMsg,
    TelemetryMsg,
    Welcome,
    decode_patch_pixels,
    encode_client_message,
    encode_server_message,
    parse_client_message,
    parse_server_message,
)
from cosketch.raster import Raster
from cosketch.server import DrawingServer, ServerThread


# --- protocol round-trip property ----------------------------------------------

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
names = st.text(st.characters(whitelist_categories=("L", "N")), min_size=1, max_size=12)


@settings(max_examples=80, deadline=None)
@given(st.one_of(
    st.builds(Hello, user=names, protocol=st.integers(0, 9)),
    st.builds(StrokeMsg, type=st.sampled_from(
        ["stroke_begin", "stroke_point", "stroke_end"]),
        contact_id=st.integers(0, 1000), x=finite, y=finite, t=finite),
    st.just(Ping()),
))
def test_client_message_roundtrip(msg):
    assert parse_client_message(encode_client_message(msg)) == msg


@settings(max_examples=80, deadline=None)
@given(st.one_of(
    st.builds(Welcome, user_id=names, canvas_w=st.integers(1, 4096),
              canvas_h=st.integers(1, 4096), revision=st.integers(0, 10**9),
              protocol=st.integers(0, 9)),
    st.builds(StrokeEcho, user_id=names, contact_id=st.integers(0, 100),
              phase=st.sampled_from(["begin", "point", "end"]),
              x=finite, y=finite, t=finite, revision=st.integers(0, 10**9)),
    st.builds(BlobStateMsg, blob_id=st.integers(0, 10**6),
              state=st.sampled_from(["collecting", "queued", "generating",
                                     "composited", "failed"]),
              bbox=st.tuples(finite, finite, finite, finite),
              revision=st.integers(0, 10**9)),
    st.builds(ResultPatchMsg, blob_id=st.integers(0, 10**6),
              x=st.integers(0, 4096), y=st.integers(0, 4096),
              w=st.integers(1, 512), h=st.integers(1, 512),
              pixels_png=st.just("aGVsbG8="), revision=st.integers(0, 10**9),
              seq=st.integers(0, 10**6)),
    st.builds(TelemetryMsg, report=st.just({"jobs_done": 1})),
    st.builds(ErrorMsg, code=names, message=st.text(max_size=40)),
))
def test_server_message_roundtrip(msg):
    assert parse_server_message(encode_server_message(msg)) == msg


# --- live server fixtures --------------------------------------------------------

def server_config(**overrides):
    base = dict(canvas_w=512, canvas_h=512, tile_size=128, gen_size=64,
                workers=2, idle_ms=150, tick_ms=20, port=0, seed=11)
    base.update(overrides)
    return ServiceConfig().with_overrides(**base)


def say_hello(ws, name="u"):
    ws.send(encode_client_message(Hello(user=name, protocol=1)))
    msg = parse_server_message(ws.recv(timeout=10))
    assert isinstance(msg, Welcome)
    return msg


def draw(ws, cid, lo, hi):
    pts = [(lo, lo), (hi, lo), (hi, hi), (lo, hi), (lo, lo)]
    ws.send(encode_client_message(StrokeMsg("stroke_begin", cid, *pts[0], 0.0)))
    for p in pts[1:-1]:
        ws.send(encode_client_message(StrokeMsg("stroke_point", cid, *p, 1.0)))
    ws.send(encode_client_message(StrokeMsg("stroke_end", cid, *pts[-1], 2.0)))


def collect_until(ws, predicate, timeout=30.0):
    msgs = []
    deadline = time.time() + timeout
    while time.time() < deadline:
        msg = parse_server_message(ws.recv(timeout=max(0.1, deadline - time.time())))
        msgs.append(msg)
        if predicate(msg):
            return msgs
    raise TimeoutError("condition not met")


def test_end_to_end_draw_and_snapshot_hash():
    with ServerThread(server_config()) as srv:
        with connect(srv.ws_url, open_timeout=10) as ws:
            say_hello(ws, "alice")
            draw(ws, 1, 100, 180)
            msgs = collect_until(ws, lambda m: isinstance(m, ResultPatchMsg))
            patch = msgs[-1]
            local = Raster.new(512, 512, 4, (255, 255, 255, 255))
            pix = Raster.from_png(decode_patch_pixels(patch.pixels_png))
            local.array[patch.y:patch.y + patch.h,
                        patch.x:patch.x + patch.w] = pix.array
            snap = Raster.from_png(
                httpx.get(srv.http_url + "/snapshot", timeout=10).content)
            assert hashlib.sha256(local.array.tobytes()).hexdigest() == \
                hashlib.sha256(snap.array.tobytes()).hexdigest()


def test_malformed_frame_closes_only_that_client():
    with ServerThread(server_config()) as srv:
        with connect(srv.ws_url, open_timeout=10) as bad, \
                connect(srv.ws_url, open_timeout=10) as good:
            say_hello(bad, "bad")
            say_hello(good, "good")
            bad.send("{this is not json")
            err = parse_server_message(bad.recv(timeout=10))
            assert isinstance(err, ErrorMsg) and err.code == "protocol"
            with pytest.raises(Exception):
                bad.recv(timeout=5)  # connection closed
            # the good client is unaffected and can still draw
            draw(good, 5, 50, 120)
            collect_until(good, lambda m: isinstance(m, ResultPatchMsg))


def test_two_clients_same_order_and_monotone_revisions():
    with ServerThread(server_config()) as srv:
        with connect(srv.ws_url, open_timeout=10) as a, \
                connect(srv.ws_url, open_timeout=10) as b:
            say_hello(a, "a")
            say_hello(b, "b")
            draw(a, 1, 60, 140)    # region 1
            draw(b, 1, 300, 380)   # disjoint region
            want = 2

            def read_patches(ws):
                msgs, patches = [], []
                while len(patches) < want:
                    m = parse_server_message(ws.recv(timeout=30))
                    msgs.append(m)
                    if isinstance(m, ResultPatchMsg):
                        patches.append(m)
                return msgs, patches

            a_msgs, patches_a = read_patches(a)
            b_msgs, patches_b = read_patches(b)

            assert [p.blob_id for p in patches_a] == [p.blob_id for p in patches_b]
            revs_a = [m.revision for m in a_msgs if hasattr(m, "revision")]
            revs_b = [m.revision for m in b_msgs if hasattr(m, "revision")]
            assert revs_a == sorted(revs_a)
            assert revs_b == sorted(revs_b)
            # both clients converge to the same canvas
            local = {}
            for name, patches in (("a", patches_a), ("b", patches_b)):
                canvas = Raster.new(512, 512, 4, (255, 255, 255, 255))
                for p in patches:
                    pix = Raster.from_png(decode_patch_pixels(p.pixels_png))
                    canvas.array[p.y:p.y + p.h, p.x:p.x + p.w] = pix.array
                local[name] = hashlib.sha256(canvas.array.tobytes()).hexdigest()
            assert local["a"] == local["b"]


def test_hello_protocol_mismatch_rejected():
    with ServerThread(server_config()) as srv:
        with connect(srv.ws_url, open_timeout=10) as ws:
            ws.send(encode_client_message(Hello(user="x", protocol=42)))
            msg = parse_server_message(ws.recv(timeout=10))
            assert isinstance(msg, ErrorMsg)


def test_http_endpoints():
    with ServerThread(server_config()) as srv:
        assert httpx.get(srv.http_url + "/healthz", timeout=10).status_code == 200
        tel = httpx.get(srv.http_url + "/telemetry", timeout=10)
        assert tel.status_code == 200
        body = tel.json()
        assert "jobs_done" in body and "stages" in body
        snap = httpx.get(srv.http_url + "/snapshot", timeout=10)
        assert snap.status_code == 200
        img = Raster.from_png(snap.content)
        assert img.size == (512, 512)
        assert httpx.get(srv.http_url + "/nope", timeout=10).status_code == 404


def test_broadcast_overflow_disconnects_only_stalled_client():
    """Unit-level: a client whose outbound queue is full gets the poison
    pill; healthy clients still receive every message."""
    server = DrawingServer(server_config(outbound_buffer=4))

    class FakeQueue:
        def __init__(self, maxsize):
            self.items = []
            self.maxsize = maxsize

        def put_nowait(self, item):
            if len(self.items) >= self.maxsize:
                raise asyncio.QueueFull()
            self.items.append(item)

        def get_nowait(self):
            if not self.items:
                raise asyncio.QueueEmpty()
            return self.items.pop(0)

    from cosketch.server import _Client
    stalled = _Client("stalled#1", FakeQueue(2))
    healthy = _Client("healthy#2", FakeQueue(100))
    server.clients = {1: stalled, 2: healthy}

    from cosketch.service import Outbound
    msgs = [Outbound(ErrorMsg("x", f"m{i}")) for i in range(5)]
    server._broadcast(msgs)
    assert len(healthy.queue.items) == 5
    assert [parse_server_message(m).message for m in healthy.queue.items] == \
        [f"m{i}" for i in range(5)]
    # stalled client: 1 real message got in, then the poison pill
    assert stalled.queue.items[-1] is None
