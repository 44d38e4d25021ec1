"""Network front end: WebSocket stroke/patch protocol plus HTTP snapshot,
telemetry and health endpoints on one port.

One connection handler per client; every canvas mutation goes through a
single asyncio lock around the CoreService (the serialized command stream),
and broadcasts fan out from that same critical section so all clients see
identical message order. A slow client whose outbound queue overflows is
disconnected rather than stalling the rest.
"""

from __future__ import annotations

import asyncio
import http
import itertools
import json
import mimetypes
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from websockets.asyncio.server import serve as ws_serve
from websockets.datastructures import Headers
from websockets.exceptions import ConnectionClosed
from websockets.http11 import Request, Response

from .config import ServiceConfig
from .errors import BindFailure, ProtocolError
from .protocol import (
    ErrorMsg,
    Hello,
    encode_server_message,
    parse_client_message,
)
from .service import CoreService, Outbound
from .session import read_event_log, write_event_log


@dataclass
class _Client:
    user_id: str
    queue: asyncio.Queue


class DrawingServer:
    def __init__(self, config: ServiceConfig, *, backend=None, clock=None):
        self.config = config
        self.core = CoreService(config, backend=backend, clock=clock)
        self.lock = asyncio.Lock()
        self.clients: dict[int, _Client] = {}
        self._conn_seq = itertools.count(1)
        self._stop = asyncio.Event()
        self.bound_port: Optional[int] = None
        self._started = asyncio.Event()
        if config.replay:
            now = self.core.clock.now()
            for ev in read_event_log(config.replay):
                raw = json.dumps({"type": f"stroke_{ev.kind}",
                                  "contact_id": ev.contact_id,
                                  "x": ev.x, "y": ev.y, "t": ev.t})
                try:
                    self.core.on_client_message(ev.user_id, raw, now)
                except Exception:
                    pass  # replay is best effort

    # ------------------------------------------------------------- broadcast

    def _broadcast(self, outbound: list[Outbound]) -> None:
        """Enqueue messages for every client in identical order; overflowing
        clients get a poison pill and are dropped by their sender task."""
        for ob in outbound:
            text = encode_server_message(ob.message)
            for client in list(self.clients.values()):
                if ob.exclude_user is not None and client.user_id == ob.exclude_user:
                    continue
                try:
                    client.queue.put_nowait(text)
                except asyncio.QueueFull:
                    # condemn the stalled client: make room, deliver poison
                    try:
                        client.queue.get_nowait()
                    except asyncio.QueueEmpty:
                        pass
                    try:
                        client.queue.put_nowait(None)
                    except asyncio.QueueFull:
                        pass

    # ------------------------------------------------------------ ws handler

    async def _handle(self, websocket) -> None:
        conn_id = next(self._conn_seq)
        try:
            raw = await websocket.recv()
            msg = parse_client_message(raw)
            if not isinstance(msg, Hello):
                raise ProtocolError("first frame must be hello")
            user_id = f"{msg.user}#{conn_id}"
            async with self.lock:
                welcome = self.core.on_hello(Hello(user=user_id, protocol=msg.protocol))
            await websocket.send(encode_server_message(welcome))
        except ProtocolError as e:
            try:
                await websocket.send(encode_server_message(
                    ErrorMsg("protocol", str(e))))
                await websocket.close(code=1002)
            except ConnectionClosed:
                pass
            return
        except ConnectionClosed:
            return

        outq: asyncio.Queue = asyncio.Queue(maxsize=self.config.outbound_buffer)
        self.clients[conn_id] = _Client(user_id=user_id, queue=outq)

        async def sender():
            while True:
                item = await outq.get()
                if item is None:
                    await websocket.close(code=1008, reason="outbound overflow")
                    return
                await websocket.send(item)

        send_task = asyncio.create_task(sender())
        try:
            async for raw in websocket:
                try:
                    async with self.lock:
                        out = self.core.on_client_message(user_id, raw)
                except ProtocolError as e:
                    # this client only: error then close; state untouched
                    await websocket.send(encode_server_message(
                        ErrorMsg("protocol", str(e))))
                    await websocket.close(code=1002)
                    break
                except Exception as e:
                    await websocket.send(encode_server_message(
                        ErrorMsg("rejected", str(e))))
                    continue
                self._broadcast(out)
        except ConnectionClosed:
            pass
        finally:
            self.clients.pop(conn_id, None)
            send_task.cancel()

    # ------------------------------------------------------------ http layer

    def _process_request(self, connection, request: Request):
        path = request.path.split("?")[0]
        if path == "/ws":
            return None  # proceed with the WebSocket handshake
        if path == "/healthz":
            return self._http_response(http.HTTPStatus.OK, b"ok", "text/plain")
        if path == "/telemetry":
            body = json.dumps(self.core.telemetry_report()).encode()
            return self._http_response(http.HTTPStatus.OK, body, "application/json")
        if path == "/snapshot":
            return self._http_response(http.HTTPStatus.OK,
                                       self.core.snapshot_png(), "image/png")
        if self.config.static_dir:
            return self._serve_static(path)
        return self._http_response(http.HTTPStatus.NOT_FOUND, b"not found",
                                   "text/plain")

    def _serve_static(self, path: str):
        root = Path(self.config.static_dir).resolve()
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root)) or not target.is_file():
            return self._http_response(http.HTTPStatus.NOT_FOUND, b"not found",
                                       "text/plain")
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        return self._http_response(http.HTTPStatus.OK, target.read_bytes(), ctype)

    @staticmethod
    def _http_response(status: http.HTTPStatus, body: bytes, ctype: str) -> Response:
        headers = Headers([
            ("Content-Type", ctype),
            ("Content-Length", str(len(body))),
            ("Cache-Control", "no-store"),
        ])
        return Response(status.value, status.phrase, headers, body)

    # ----------------------------------------------------------------- ticker

    async def _ticker(self) -> None:
        loop = asyncio.get_running_loop()
        while not self._stop.is_set():
            async with self.lock:
                out, work = self.core.on_tick()
            self._broadcast(out)
            for item in work:
                loop.create_task(self._run_job(item))
            try:
                await asyncio.wait_for(self._stop.wait(),
                                       self.config.tick_ms / 1000.0)
            except asyncio.TimeoutError:
                pass

    async def _run_job(self, item) -> None:
        output = None
        error: Optional[Exception] = None
        try:
            output = await asyncio.to_thread(self.core.execute_job, item)
        except Exception as e:
            error = e
        async with self.lock:
            out = self.core.on_job_done(item, output, error)
        self._broadcast(out)

    # ------------------------------------------------------------------ serve

    async def run(self) -> None:
        try:
            server = await ws_serve(self._handle, self.config.host,
                                    self.config.port,
                                    process_request=self._process_request,
                                    max_size=2 ** 22)
        except OSError as e:
            raise BindFailure(f"cannot bind {self.config.host}:{self.config.port}: {e}")
        sock = next(iter(server.sockets))
        self.bound_port = sock.getsockname()[1]
        ticker = asyncio.create_task(self._ticker())
        self._started.set()
        try:
            await self._stop.wait()
        finally:
            ticker.cancel()
            server.close()
            await server.wait_closed()
            if self.config.record and self.core.recorded_events:
                write_event_log(self.config.record, self.core.recorded_events)

    def stop(self) -> None:
        self._stop.set()


class ServerThread:
    """Run a DrawingServer in a background thread (tests, load harness)."""

    def __init__(self, config: ServiceConfig, *, backend=None):
        self.server = DrawingServer(config, backend=backend)
        self._thread: Optional[threading.Thread] = None
        self._loop: Optional[asyncio.AbstractEventLoop] = None

    def __enter__(self) -> "ServerThread":
        started = threading.Event()

        def main():
            self._loop = asyncio.new_event_loop()
            asyncio.set_event_loop(self._loop)

            async def run_and_signal():
                task = asyncio.create_task(self.server.run())
                await self.server._started.wait()
                started.set()
                await task

            try:
                self._loop.run_until_complete(run_and_signal())
            finally:
                self._loop.close()

        self._thread = threading.Thread(target=main, daemon=True)
        self._thread.start()
        if not started.wait(timeout=15):
            raise RuntimeError("server did not start in time")
        return self

    @property
    def port(self) -> int:
        assert self.server.bound_port is not None
        return self.server.bound_port

    @property
    def ws_url(self) -> str:
        return f"ws://{self.server.config.host}:{self.port}/ws"

    @property
    def http_url(self) -> str:
        return f"http://{self.server.config.host}:{self.port}"

    def __exit__(self, *exc) -> None:
        if self._loop is not None:
            self._loop.call_soon_threadsafe(self.server.stop)
        if self._thread is not None:
            self._thread.join(timeout=10)
