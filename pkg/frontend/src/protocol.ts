// Wire protocol: single-line JSON text frames, mirroring the server module.

export interface Hello {
  type: "hello";
  user: string;
  protocol: number;
}

export type StrokePhase = "begin" | "point" | "end";

export interface StrokeMsg {
  type: "stroke_begin" | "stroke_point" | "stroke_end";
  contact_id: number;
  x: number;
  y: number;
  t: number;
}

export interface Ping {
  type: "ping";
}

export type ClientMessage = Hello | StrokeMsg | Ping;

export interface Welcome {
  type: "welcome";
  user_id: string;
  canvas_w: number;
  canvas_h: number;
  revision: number;
  protocol: number;
}

export interface StrokeEcho {
  type: "stroke_echo";
  user_id: string;
  contact_id: number;
  phase: StrokePhase;
  x: number;
  y: number;
  t: number;
  revision: number;
}

export interface BlobStateMsg {
  type: "blob_state";
  blob_id: number;
  state: string;
  bbox: [number, number, number, number];
  revision: number;
}

export interface ResultPatchMsg {
  type: "result_patch";
  blob_id: number;
  x: number;
  y: number;
  w: number;
  h: number;
  pixels_png: string; // base64 PNG
  revision: number;
  seq: number;
}

export interface TelemetryMsg {
  type: "telemetry";
  report: unknown;
}

export interface ErrorMsg {
  type: "error";
  code: string;
  message: string;
}

export type ServerMessage =
  | Welcome
  | StrokeEcho
  | BlobStateMsg
  | ResultPatchMsg
  | TelemetryMsg
  | ErrorMsg;

export class ProtocolError extends Error {}

export function encodeClientMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}

function need(obj: Record<string, unknown>, key: string): unknown {
  if (!(key in obj)) throw new ProtocolError(`missing field ${key}`);
  return obj[key];
}

function asNumber(v: unknown, key: string): number {
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new ProtocolError(`field ${key} is not a finite number`);
  }
  return v;
}

function asString(v: unknown, key: string): string {
  if (typeof v !== "string") throw new ProtocolError(`field ${key} is not a string`);
  return v;
}

export function parseServerMessage(raw: string): ServerMessage {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch (e) {
    throw new ProtocolError(`frame is not valid JSON: ${e}`);
  }
  if (typeof data !== "object" || data === null || !("type" in data)) {
    throw new ProtocolError("frame must be a JSON object with a 'type'");
  }
  const d = data as Record<string, unknown>;
  switch (d.type) {
    case "welcome":
      return {
        type: "welcome",
        user_id: asString(need(d, "user_id"), "user_id"),
        canvas_w: asNumber(need(d, "canvas_w"), "canvas_w"),
        canvas_h: asNumber(need(d, "canvas_h"), "canvas_h"),
        revision: asNumber(need(d, "revision"), "revision"),
        protocol: asNumber(need(d, "protocol"), "protocol"),
      };
    case "stroke_echo":
      return {
        type: "stroke_echo",
        user_id: asString(need(d, "user_id"), "user_id"),
        contact_id: asNumber(need(d, "contact_id"), "contact_id"),
        phase: asString(need(d, "phase"), "phase") as StrokePhase,
        x: asNumber(need(d, "x"), "x"),
        y: asNumber(need(d, "y"), "y"),
        t: asNumber(need(d, "t"), "t"),
        revision: asNumber(need(d, "revision"), "revision"),
      };
    case "blob_state": {
      const bbox = need(d, "bbox");
      if (!Array.isArray(bbox) || bbox.length !== 4) {
        throw new ProtocolError("bbox must be a 4-array");
      }
      return {
        type: "blob_state",
        blob_id: asNumber(need(d, "blob_id"), "blob_id"),
        state: asString(need(d, "state"), "state"),
        bbox: bbox.map((v, i) => asNumber(v, `bbox[${i}]`)) as
          [number, number, number, number],
        revision: asNumber(need(d, "revision"), "revision"),
      };
    }
    case "result_patch":
      return {
        type: "result_patch",
        blob_id: asNumber(need(d, "blob_id"), "blob_id"),
        x: asNumber(need(d, "x"), "x"),
        y: asNumber(need(d, "y"), "y"),
        w: asNumber(need(d, "w"), "w"),
        h: asNumber(need(d, "h"), "h"),
        pixels_png: asString(need(d, "pixels_png"), "pixels_png"),
        revision: asNumber(need(d, "revision"), "revision"),
        seq: asNumber(d.seq ?? 0, "seq"),
      };
    case "telemetry":
      return { type: "telemetry", report: d.report };
    case "error":
      return {
        type: "error",
        code: asString(need(d, "code"), "code"),
        message: asString(need(d, "message"), "message"),
      };
    default:
      throw new ProtocolError(`unknown server message type ${String(d.type)}`);
  }
}
