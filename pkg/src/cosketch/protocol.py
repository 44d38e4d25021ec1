"""Wire protocol: single-line JSON text frames.

Client frames: hello, stroke_begin, stroke_point, stroke_end, ping.
Server frames: welcome, stroke_echo, blob_state, result_patch, telemetry,
error. Every state-changing server frame carries the canvas revision it
produced. Patch pixels travel as base64 PNG.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass
from typing import Any, Optional, Union

from .errors import ProtocolError

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class Hello:
    user: str
    protocol: int
    type: str = "hello"


@dataclass(frozen=True)
class StrokeMsg:
    type: str  # stroke_begin | stroke_point | stroke_end
    contact_id: int
    x: float
    y: float
    t: float


@dataclass(frozen=True)
class Ping:
    type: str = "ping"


ClientMessage = Union[Hello, StrokeMsg, Ping]

_STROKE_TYPES = ("stroke_begin", "stroke_point", "stroke_end")


def parse_client_message(raw: str | bytes) -> ClientMessage:
    try:
        data = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ProtocolError(f"frame is not valid JSON: {e}") from e
    if not isinstance(data, dict) or "type" not in data:
        raise ProtocolError("frame must be a JSON object with a 'type'")
    t = data["type"]
    try:
        if t == "hello":
            return Hello(user=str(data["user"]), protocol=int(data["protocol"]))
        if t in _STROKE_TYPES:
            return StrokeMsg(type=t, contact_id=int(data["contact_id"]),
                             x=float(data["x"]), y=float(data["y"]),
                             t=float(data["t"]))
        if t == "ping":
            return Ping()
    except (KeyError, TypeError, ValueError) as e:
        raise ProtocolError(f"malformed {t} frame: {e}") from e
    raise ProtocolError(f"unknown client message type {t!r}")


def encode_client_message(msg: ClientMessage) -> str:
    return json.dumps(asdict(msg), separators=(",", ":"))


@dataclass(frozen=True)
class Welcome:
    user_id: str
    canvas_w: int
    canvas_h: int
    revision: int
    protocol: int = PROTOCOL_VERSION
    type: str = "welcome"


@dataclass(frozen=True)
class StrokeEcho:
    user_id: str
    contact_id: int
    phase: str  # begin | point | end
    x: float
    y: float
    t: float
    revision: int
    type: str = "stroke_echo"


@dataclass(frozen=True)
class BlobStateMsg:
    blob_id: int
    state: str
    bbox: tuple[float, float, float, float]
    revision: int
    type: str = "blob_state"


@dataclass(frozen=True)
class ResultPatchMsg:
    blob_id: int
    x: int
    y: int
    w: int
    h: int
    pixels_png: str  # base64 PNG
    revision: int
    seq: int = 0     # dense per-patch ordinal; clients order patches by it
    type: str = "result_patch"


@dataclass(frozen=True)
class TelemetryMsg:
    report: dict
    type: str = "telemetry"


@dataclass(frozen=True)
class ErrorMsg:
    code: str
    message: str
    type: str = "error"


ServerMessage = Union[Welcome, StrokeEcho, BlobStateMsg, ResultPatchMsg,
                      TelemetryMsg, ErrorMsg]


def encode_server_message(msg: ServerMessage) -> str:
    d = asdict(msg)
    if isinstance(msg, BlobStateMsg):
        d["bbox"] = list(msg.bbox)
    return json.dumps(d, separators=(",", ":"))


def parse_server_message(raw: str | bytes) -> ServerMessage:
    try:
        data = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ProtocolError(f"frame is not valid JSON: {e}") from e
    if not isinstance(data, dict) or "type" not in data:
        raise ProtocolError("frame must be a JSON object with a 'type'")
    t = data["type"]
    try:
        if t == "welcome":
            return Welcome(user_id=data["user_id"], canvas_w=int(data["canvas_w"]),
                           canvas_h=int(data["canvas_h"]),
                           revision=int(data["revision"]),
                           protocol=int(data["protocol"]))
        if t == "stroke_echo":
            return StrokeEcho(user_id=data["user_id"],
                              contact_id=int(data["contact_id"]),
                              phase=data["phase"], x=float(data["x"]),
                              y=float(data["y"]), t=float(data["t"]),
                              revision=int(data["revision"]))
        if t == "blob_state":
            return BlobStateMsg(blob_id=int(data["blob_id"]), state=data["state"],
                                bbox=tuple(data["bbox"]),
                                revision=int(data["revision"]))
        if t == "result_patch":
            return ResultPatchMsg(blob_id=int(data["blob_id"]), x=int(data["x"]),
                                  y=int(data["y"]), w=int(data["w"]),
                                  h=int(data["h"]), pixels_png=data["pixels_png"],
                                  revision=int(data["revision"]),
                                  seq=int(data.get("seq", 0)))
        if t == "telemetry":
            return TelemetryMsg(report=data["report"])
        if t == "error":
            return ErrorMsg(code=data["code"], message=data["message"])
    except (KeyError, TypeError, ValueError) as e:
        raise ProtocolError(f"malformed {t} frame: {e}") from e
    raise ProtocolError(f"unknown server message type {t!r}")


def encode_patch_pixels(png: bytes) -> str:
    return base64.b64encode(png).decode("ascii")


def decode_patch_pixels(b64: str) -> bytes:
    try:
        return base64.b64decode(b64.encode("ascii"), validate=True)
    except Exception as e:
        raise ProtocolError(f"patch pixels are not valid base64: {e}") from e
