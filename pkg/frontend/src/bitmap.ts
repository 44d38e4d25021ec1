// Canvas bitmap abstraction so the client logic can run without a DOM.

export interface Bitmap {
  readonly width: number;
  readonly height: number;
  blit(x: number, y: number, w: number, h: number, rgba: Uint8ClampedArray): void;
  reset(rgba: Uint8ClampedArray | null): void;
}

/** Plain array-backed bitmap (tests, hashing, node). */
export class MemoryBitmap implements Bitmap {
  readonly data: Uint8ClampedArray;

  constructor(
    readonly width: number,
    readonly height: number,
    fill: [number, number, number, number] = [255, 255, 255, 255],
  ) {
    this.data = new Uint8ClampedArray(width * height * 4);
    this.reset(null, fill);
  }

  blit(x: number, y: number, w: number, h: number, rgba: Uint8ClampedArray): void {
    for (let row = 0; row < h; row++) {
      const dst = ((y + row) * this.width + x) * 4;
      const src = row * w * 4;
      this.data.set(rgba.subarray(src, src + w * 4), dst);
    }
  }

  reset(
    rgba: Uint8ClampedArray | null,
    fill: [number, number, number, number] = [255, 255, 255, 255],
  ): void {
    if (rgba !== null) {
      this.data.set(rgba);
      return;
    }
    for (let i = 0; i < this.data.length; i += 4) {
      this.data[i] = fill[0];
      this.data[i + 1] = fill[1];
      this.data[i + 2] = fill[2];
      this.data[i + 3] = fill[3];
    }
  }

  /** FNV-1a over the raw pixels; matches across clients byte for byte. */
  hash(): string {
    let h = 0x811c9dc5;
    for (let i = 0; i < this.data.length; i++) {
      h ^= this.data[i];
      h = Math.imul(h, 0x01000193) >>> 0;
    }
    return h.toString(16).padStart(8, "0");
  }
}
