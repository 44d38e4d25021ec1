// Revision-ordered patch application with bounded buffering.
//
// Patches carry a dense per-patch ordinal (seq). The next expected patch is
// lastApplied+1; anything ahead is buffered until the gap fills. A gap that
// persists past GAP_RESYNC_MS, a buffer above MAX_BUFFERED, or a patch that
// fails to decode all force a full snapshot resync.

import type { ResultPatchMsg } from "./protocol.js";

export const GAP_RESYNC_MS = 2000;
export const MAX_BUFFERED = 64;

export type ApplyFn = (patch: ResultPatchMsg) => boolean; // false -> corrupt
export type ResyncFn = (reason: string) => void;

export class PatchBuffer {
  private lastApplied = 0;
  private expectAny = false;
  private buffered = new Map<number, ResultPatchMsg>();
  private gapSince: number | null = null;

  constructor(
    private readonly apply: ApplyFn,
    private readonly resync: ResyncFn,
  ) {}

  get bufferedCount(): number {
    return this.buffered.size;
  }

  get applied(): number {
    return this.lastApplied;
  }

  /** Adopt the server's current patch ordinal after a resync/welcome. */
  rebase(seq: number): void {
    this.lastApplied = seq;
    this.expectAny = false;
    this.buffered.clear();
    this.gapSince = null;
  }

  /** After a snapshot resync the server-side ordinal is unknown: the next
   * arriving patch (lowest seq if several queued) sets the new baseline. */
  rebaseUnknown(): void {
    this.expectAny = true;
    this.buffered.clear();
    this.gapSince = null;
  }

  push(patch: ResultPatchMsg, nowMs: number): void {
    if (patch.seq <= this.lastApplied) return; // duplicate or stale
    this.buffered.set(patch.seq, patch);
    if (this.buffered.size > MAX_BUFFERED) {
      this.buffered.clear();
      this.gapSince = null;
      this.resync("patch buffer overflow");
      return;
    }
    this.drain(nowMs);
  }

  /** Call periodically (or on any message) so a stuck gap can time out. */
  tick(nowMs: number): void {
    this.drain(nowMs);
    if (this.gapSince !== null && nowMs - this.gapSince >= GAP_RESYNC_MS) {
      this.buffered.clear();
      this.gapSince = null;
      this.resync("revision gap timeout");
    }
  }

  private drain(nowMs: number): void {
    for (;;) {
      let next: ResultPatchMsg | undefined;
      if (this.expectAny && this.buffered.size > 0) {
        const lowest = Math.min(...this.buffered.keys());
        next = this.buffered.get(lowest);
      } else {
        next = this.buffered.get(this.lastApplied + 1);
      }
      if (next === undefined) break;
      this.buffered.delete(next.seq);
      if (!this.apply(next)) {
        this.buffered.clear();
        this.gapSince = null;
        this.resync("corrupt patch payload");
        return;
      }
      this.lastApplied = next.seq;
      this.expectAny = false;
    }
    if (this.buffered.size > 0) {
      if (this.gapSince === null) this.gapSince = nowMs;
    } else {
      this.gapSince = null;
    }
  }
}
