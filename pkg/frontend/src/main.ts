// Browser entry point: canvas rendering, pointer capture, WebSocket wiring.

import { DrawingClient, type PixelDecoder, type SnapshotFetcher } from "./client.js";
import type { Bitmap } from "./bitmap.js";
import type { InkStroke } from "./ink.js";

const PROVISIONAL_COLOR = "rgba(36, 99, 235, 0.9)"; // local ink until composite
const REMOTE_COLOR = "rgba(190, 60, 60, 0.75)";     // co-drawers' live ink

class CanvasBitmap implements Bitmap {
  constructor(
    private readonly ctx: CanvasRenderingContext2D,
    readonly width: number,
    readonly height: number,
  ) {
    this.reset(null);
  }

  blit(x: number, y: number, w: number, h: number, rgba: Uint8ClampedArray): void {
    this.ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), w, h), x, y);
  }

  reset(rgba: Uint8ClampedArray | null): void {
    if (rgba === null) {
      this.ctx.fillStyle = "#ffffff";
      this.ctx.fillRect(0, 0, this.width, this.height);
    } else {
      this.ctx.putImageData(
        new ImageData(new Uint8ClampedArray(rgba), this.width, this.height), 0, 0);
    }
  }
}

async function decodePngBase64(b64: string): Promise<Uint8ClampedArray | null> {
  try {
    const bytes = Uint8Array.from(atob(b64), (c) => c.charCodeAt(0));
    const blob = new Blob([bytes], { type: "image/png" });
    const img = await createImageBitmap(blob);
    const off = document.createElement("canvas");
    off.width = img.width;
    off.height = img.height;
    const ctx = off.getContext("2d")!;
    ctx.drawImage(img, 0, 0);
    return ctx.getImageData(0, 0, img.width, img.height).data;
  } catch {
    return null;
  }
}

function drawInk(ctx: CanvasRenderingContext2D, strokes: InkStroke[],
                 color: string): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = 3;
  ctx.lineCap = "round";
  ctx.lineJoin = "round";
  for (const s of strokes) {
    if (s.points.length === 0) continue;
    ctx.beginPath();
    ctx.moveTo(s.points[0].x, s.points[0].y);
    for (const p of s.points.slice(1)) ctx.lineTo(p.x, p.y);
    ctx.stroke();
  }
}

async function start(): Promise<void> {
  const status = document.getElementById("status")!;
  const base = document.getElementById("base") as HTMLCanvasElement;
  const overlay = document.getElementById("overlay") as HTMLCanvasElement;

  const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
  const socket = new WebSocket(wsUrl);

  // patch decode is async in the browser; queue frames to keep order
  const pending: string[] = [];
  let draining = false;

  const decodedCache = new Map<string, Uint8ClampedArray | null>();
  const decoder: PixelDecoder = (b64) => decodedCache.get(b64) ?? null;

  const fetchSnapshot: SnapshotFetcher = async () => {
    try {
      const resp = await fetch("/snapshot", { cache: "no-store" });
      const blob = await resp.blob();
      const img = await createImageBitmap(blob);
      const off = document.createElement("canvas");
      off.width = img.width;
      off.height = img.height;
      const ctx = off.getContext("2d")!;
      ctx.drawImage(img, 0, 0);
      return ctx.getImageData(0, 0, img.width, img.height).data;
    } catch {
      return null;
    }
  };

  let client: DrawingClient | null = null;

  async function drainFrames(): Promise<void> {
    if (draining) return;
    draining = true;
    while (pending.length > 0) {
      const raw = pending.shift()!;
      // pre-decode patch payloads so the client's decoder stays synchronous
      try {
        const parsed = JSON.parse(raw);
        if (parsed.type === "result_patch" && !decodedCache.has(parsed.pixels_png)) {
          decodedCache.set(parsed.pixels_png,
                           await decodePngBase64(parsed.pixels_png));
        }
        if (parsed.type === "welcome" && client === null) {
          const bitmap = new CanvasBitmap(
            base.getContext("2d")!, parsed.canvas_w, parsed.canvas_h);
          base.width = parsed.canvas_w;
          base.height = parsed.canvas_h;
          overlay.width = parsed.canvas_w;
          overlay.height = parsed.canvas_h;
          bitmap.reset(null);
          client = new DrawingClient({
            user: "web",
            bitmap,
            decoder,
            fetchSnapshot,
            displayScale: 1,
            onDropped: (why) => (status.textContent = `dropped: ${why}`),
            onError: (code, msg) => (status.textContent = `${code}: ${msg}`),
          });
          client.attach({ send: (d) => socket.send(d), close: () => socket.close() });
          wirePointers(client);
        }
      } catch {
        // the client surfaces protocol errors itself
      }
      client?.onFrame(raw);
      render();
    }
    draining = false;
  }

  socket.onmessage = (ev) => {
    pending.push(String(ev.data));
    void drainFrames();
  };
  socket.onopen = () => {
    socket.send(JSON.stringify({ type: "hello", user: "web", protocol: 1 }));
    status.textContent = "connected";
  };
  socket.onclose = () => {
    status.textContent = "disconnected";
    client?.detach();
  };

  function render(): void {
    if (!client) return;
    const ctx = overlay.getContext("2d")!;
    ctx.clearRect(0, 0, overlay.width, overlay.height);
    drawInk(ctx, client.localInk.all(), PROVISIONAL_COLOR);
    drawInk(ctx, client.remoteInk.all(), REMOTE_COLOR);
  }

  function wirePointers(c: DrawingClient): void {
    const pos = (ev: PointerEvent): [number, number] => {
      const rect = overlay.getBoundingClientRect();
      return [
        ((ev.clientX - rect.left) / rect.width) * overlay.width,
        ((ev.clientY - rect.top) / rect.height) * overlay.height,
      ];
    };
    overlay.addEventListener("pointerdown", (ev) => {
      overlay.setPointerCapture(ev.pointerId);
      const [x, y] = pos(ev);
      c.pointerDown(ev.pointerId, x, y, performance.now());
      render();
    });
    overlay.addEventListener("pointermove", (ev) => {
      const [x, y] = pos(ev);
      c.pointerMove(ev.pointerId, x, y, performance.now());
      render();
    });
    const up = (ev: PointerEvent) => {
      const [x, y] = pos(ev);
      c.pointerUp(ev.pointerId, x, y, performance.now());
      render();
    };
    overlay.addEventListener("pointerup", up);
    overlay.addEventListener("pointercancel", up);
  }
}

window.addEventListener("DOMContentLoaded", () => void start());
