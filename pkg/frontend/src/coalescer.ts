// Pointer-move coalescing: at most MAX_POINTS_PER_S move samples per second
// per contact. Begins and ends always pass through.

export const MAX_POINTS_PER_S = 120;
const MIN_INTERVAL_MS = 1000 / MAX_POINTS_PER_S;

export class MoveCoalescer {
  private lastEmit = new Map<number, number>();

  begin(contactId: number, nowMs: number): boolean {
    this.lastEmit.set(contactId, nowMs);
    return true;
  }

  move(contactId: number, nowMs: number): boolean {
    const last = this.lastEmit.get(contactId);
    if (last === undefined) return false; // no open contact
    if (nowMs - last < MIN_INTERVAL_MS) return false;
    this.lastEmit.set(contactId, nowMs);
    return true;
  }

  end(contactId: number): boolean {
    return this.lastEmit.delete(contactId);
  }
}
