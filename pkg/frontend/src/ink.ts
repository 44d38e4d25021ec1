// Provisional ink overlay: strokes drawn locally (or echoed from co-drawers)
// in a distinct color until the generated patch for their area arrives.

export interface InkPoint {
  x: number;
  y: number;
}

export interface InkStroke {
  key: string; // "<user>/<contact>"
  points: InkPoint[];
  closed: boolean;
}

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export class InkOverlay {
  private strokes = new Map<string, InkStroke>();

  begin(key: string, x: number, y: number): void {
    this.strokes.set(key, { key, points: [{ x, y }], closed: false });
  }

  extend(key: string, x: number, y: number): void {
    const s = this.strokes.get(key);
    if (s) s.points.push({ x, y });
  }

  close(key: string, x: number, y: number): void {
    const s = this.strokes.get(key);
    if (s) {
      s.points.push({ x, y });
      s.closed = true;
    }
  }

  all(): InkStroke[] {
    return [...this.strokes.values()];
  }

  /** A result patch replaced this region: provisional ink there is stale. */
  clearForRegion(region: Rect): number {
    let removed = 0;
    for (const [key, s] of this.strokes) {
      if (!s.closed) continue; // an open contact is still being drawn
      if (this.intersects(s, region)) {
        this.strokes.delete(key);
        removed += 1;
      }
    }
    return removed;
  }

  private intersects(s: InkStroke, r: Rect): boolean {
    let minX = Infinity;
    let minY = Infinity;
    let maxX = -Infinity;
    let maxY = -Infinity;
    for (const p of s.points) {
      minX = Math.min(minX, p.x);
      minY = Math.min(minY, p.y);
      maxX = Math.max(maxX, p.x);
      maxY = Math.max(maxY, p.y);
    }
    return !(maxX < r.x || r.x + r.w <= minX || maxY < r.y || r.y + r.h <= minY);
  }
}
