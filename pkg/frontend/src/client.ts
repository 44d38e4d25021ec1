// Drawing client session: pointer capture -> stroke frames, live ink echo,
// revision-ordered patch application, snapshot resync.
//
// No outbound frame is ever sent before welcome arrives; stroke input while
// disconnected is dropped and surfaced through onDropped so the UI can show
// an indicator.

import { MoveCoalescer } from "./coalescer.js";
import { InkOverlay } from "./ink.js";
import { PatchBuffer } from "./patchBuffer.js";
import type { Bitmap } from "./bitmap.js";
import {
  encodeClientMessage,
  parseServerMessage,
  ProtocolError,
  type ResultPatchMsg,
  type ServerMessage,
  type Welcome,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
}

/** Decode a base64 PNG into RGBA bytes; null signals a corrupt payload. */
export type PixelDecoder = (
  pngBase64: string,
  w: number,
  h: number,
) => Uint8ClampedArray | null;

/** Fetch the authoritative canvas (GET /snapshot) as RGBA bytes. */
export type SnapshotFetcher = () => Promise<Uint8ClampedArray | null>;

export interface ClientOptions {
  user: string;
  bitmap: Bitmap;
  decoder: PixelDecoder;
  fetchSnapshot: SnapshotFetcher;
  now?: () => number;
  displayScale?: number; // display px per canvas px (2 on a 2x surface)
  onDropped?: (reason: string) => void;
  onPatchApplied?: (patch: ResultPatchMsg) => void;
  onError?: (code: string, message: string) => void;
}

export type ConnectionStatus = "connecting" | "ready" | "closed";

export class DrawingClient {
  status: ConnectionStatus = "connecting";
  userId = "";
  canvasW = 0;
  canvasH = 0;
  lastRevision = 0;
  readonly localInk = new InkOverlay();
  readonly remoteInk = new InkOverlay();

  private socket: SocketLike | null = null;
  private readonly coalescer = new MoveCoalescer();
  private readonly patches: PatchBuffer;
  private contactSeq = 0;
  private contactOfPointer = new Map<number, number>();
  private readonly now: () => number;
  private resyncing = false;

  constructor(private readonly opts: ClientOptions) {
    this.now = opts.now ?? (() => Date.now());
    this.patches = new PatchBuffer(
      (patch) => this.applyPatch(patch),
      (reason) => void this.resync(reason),
    );
  }

  attach(socket: SocketLike): void {
    this.socket = socket;
    this.status = "connecting";
    socket.send(
      encodeClientMessage({ type: "hello", user: this.opts.user, protocol: 1 }),
    );
  }

  detach(): void {
    this.socket = null;
    this.status = "closed";
    for (const pointer of [...this.contactOfPointer.keys()]) {
      this.contactOfPointer.delete(pointer);
    }
  }

  // ---------------------------------------------------------------- pointer

  private toCanvas(x: number, y: number): [number, number] {
    const s = this.opts.displayScale ?? 1;
    return [x / s, y / s];
  }

  pointerDown(pointerId: number, x: number, y: number, t: number): void {
    if (this.status !== "ready") {
      this.opts.onDropped?.("not connected");
      return;
    }
    const contact = ++this.contactSeq; // unique per touch, not per device
    this.contactOfPointer.set(pointerId, contact);
    const [cx, cy] = this.toCanvas(x, y);
    this.coalescer.begin(contact, t);
    this.localInk.begin(`local/${contact}`, cx, cy);
    this.send({ type: "stroke_begin", contact_id: contact, x: cx, y: cy, t });
  }

  pointerMove(pointerId: number, x: number, y: number, t: number): void {
    const contact = this.contactOfPointer.get(pointerId);
    if (contact === undefined || this.status !== "ready") return;
    if (!this.coalescer.move(contact, t)) return; // coalesced away
    const [cx, cy] = this.toCanvas(x, y);
    this.localInk.extend(`local/${contact}`, cx, cy);
    this.send({ type: "stroke_point", contact_id: contact, x: cx, y: cy, t });
  }

  pointerUp(pointerId: number, x: number, y: number, t: number): void {
    const contact = this.contactOfPointer.get(pointerId);
    if (contact === undefined || this.status !== "ready") return;
    this.contactOfPointer.delete(pointerId);
    this.coalescer.end(contact);
    const [cx, cy] = this.toCanvas(x, y);
    this.localInk.close(`local/${contact}`, cx, cy);
    this.send({ type: "stroke_end", contact_id: contact, x: cx, y: cy, t });
  }

  private send(msg: Parameters<typeof encodeClientMessage>[0]): void {
    if (this.socket === null || this.status !== "ready") {
      this.opts.onDropped?.("no outbound before welcome");
      return;
    }
    this.socket.send(encodeClientMessage(msg));
  }

  // --------------------------------------------------------------- inbound

  onFrame(raw: string): void {
    let msg: ServerMessage;
    try {
      msg = parseServerMessage(raw);
    } catch (e) {
      if (e instanceof ProtocolError) {
        void this.resync(`unparseable frame: ${e.message}`);
        return;
      }
      throw e;
    }
    this.handle(msg);
    this.patches.tick(this.now());
  }

  private handle(msg: ServerMessage): void {
    switch (msg.type) {
      case "welcome":
        this.userId = msg.user_id;
        this.canvasW = msg.canvas_w;
        this.canvasH = msg.canvas_h;
        this.lastRevision = msg.revision;
        this.status = "ready";
        break;
      case "stroke_echo": {
        const key = `${msg.user_id}/${msg.contact_id}`;
        if (msg.phase === "begin") this.remoteInk.begin(key, msg.x, msg.y);
        else if (msg.phase === "point") this.remoteInk.extend(key, msg.x, msg.y);
        else this.remoteInk.close(key, msg.x, msg.y);
        this.lastRevision = Math.max(this.lastRevision, msg.revision);
        break;
      }
      case "result_patch":
        this.patches.push(msg, this.now());
        break;
      case "blob_state":
        this.lastRevision = Math.max(this.lastRevision, msg.revision);
        break;
      case "telemetry":
        break;
      case "error":
        this.opts.onError?.(msg.code, msg.message);
        break;
    }
  }

  private applyPatch(patch: ResultPatchMsg): boolean {
    const rgba = this.opts.decoder(patch.pixels_png, patch.w, patch.h);
    if (rgba === null || rgba.length !== patch.w * patch.h * 4) return false;
    this.opts.bitmap.blit(patch.x, patch.y, patch.w, patch.h, rgba);
    this.lastRevision = Math.max(this.lastRevision, patch.revision);
    const region = { x: patch.x, y: patch.y, w: patch.w, h: patch.h };
    this.localInk.clearForRegion(region);
    this.remoteInk.clearForRegion(region);
    this.opts.onPatchApplied?.(patch);
    return true;
  }

  async resync(reason: string): Promise<void> {
    if (this.resyncing) return;
    this.resyncing = true;
    try {
      const pixels = await this.opts.fetchSnapshot();
      if (pixels !== null) {
        this.opts.bitmap.reset(pixels);
        this.patches.rebaseUnknown();
        this.localInk.clearForRegion(
          { x: 0, y: 0, w: this.canvasW, h: this.canvasH });
        this.remoteInk.clearForRegion(
          { x: 0, y: 0, w: this.canvasW, h: this.canvasH });
      } else {
        this.opts.onDropped?.(`resync failed (${reason})`);
      }
    } finally {
      this.resyncing = false;
    }
  }
}
