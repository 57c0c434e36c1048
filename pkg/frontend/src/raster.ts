/**
 * Software rasterizer for the two plot kinds: barycentric-interpolated
 * triangle fills (contour plots), anti-alias-free line segments, and a tiny
 * bitmap font for labels. Everything renders into an RGB byte buffer that
 * png.ts encodes.
 */

export type Color = [number, number, number];

export class Raster {
  readonly data: Uint8Array;

  constructor(readonly width: number, readonly height: number, fill: Color = [255, 255, 255]) {
    this.data = new Uint8Array(width * height * 3);
    for (let i = 0; i < width * height; i++) {
      this.data.set(fill, i * 3);
    }
  }

  set(x: number, y: number, color: Color): void {
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) return;
    this.data.set(color, (y * this.width + x) * 3);
  }

  line(x0: number, y0: number, x1: number, y1: number, color: Color): void {
    // Bresenham on rounded endpoints
    let xa = Math.round(x0);
    let ya = Math.round(y0);
    const xb = Math.round(x1);
    const yb = Math.round(y1);
    const dx = Math.abs(xb - xa);
    const dy = -Math.abs(yb - ya);
    const sx = xa < xb ? 1 : -1;
    const sy = ya < yb ? 1 : -1;
    let err = dx + dy;
    for (;;) {
      this.set(xa, ya, color);
      if (xa === xb && ya === yb) break;
      const e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        xa += sx;
      }
      if (e2 <= dx) {
        err += dx;
        ya += sy;
      }
    }
  }

  rect(x0: number, y0: number, x1: number, y1: number, color: Color): void {
    this.line(x0, y0, x1, y0, color);
    this.line(x1, y0, x1, y1, color);
    this.line(x1, y1, x0, y1, color);
    this.line(x0, y1, x0, y0, color);
  }

  /**
   * Fill a triangle, interpolating a scalar across it and mapping the value
   * through a colormap. Scanline over the bounding box with barycentric
   * inside tests; shared edges overdraw harmlessly.
   */
  fillTriangleInterp(
    pts: Array<[number, number]>,
    values: [number, number, number],
    map: (v: number) => Color,
  ): void {
    const [[x0, y0], [x1, y1], [x2, y2]] = pts;
    const minX = Math.max(0, Math.floor(Math.min(x0, x1, x2)));
    const maxX = Math.min(this.width - 1, Math.ceil(Math.max(x0, x1, x2)));
    const minY = Math.max(0, Math.floor(Math.min(y0, y1, y2)));
    const maxY = Math.min(this.height - 1, Math.ceil(Math.max(y0, y1, y2)));
    const det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    if (det === 0) return;
    for (let py = minY; py <= maxY; py++) {
      for (let px = minX; px <= maxX; px++) {
        const l1 = ((px - x0) * (y2 - y0) - (x2 - x0) * (py - y0)) / det;
        const l2 = ((x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)) / det;
        const l0 = 1 - l1 - l2;
        const eps = -1e-9;
        if (l0 >= eps && l1 >= eps && l2 >= eps) {
          this.set(px, py, map(l0 * values[0] + l1 * values[1] + l2 * values[2]));
        }
      }
    }
  }

  text(x: number, y: number, message: string, color: Color): void {
    let cx = x;
    for (const ch of message.toUpperCase()) {
      const glyph = FONT[ch] ?? FONT["?"];
      for (let row = 0; row < 5; row++) {
        for (let col = 0; col < 4; col++) {
          if ((glyph[row] >> (3 - col)) & 1) {
            this.set(cx + col, y + row, color);
          }
        }
      }
      cx += 5;
    }
  }
}

/** Diverging blue-white-red map, symmetric about zero. */
export function divergingMap(limit: number): (v: number) => Color {
  const lim = limit > 0 ? limit : 1;
  return (v: number) => {
    const s = Math.max(-1, Math.min(1, v / lim));
    if (s >= 0) {
      const t = 1 - s;
      return [255, Math.round(64 + 191 * t), Math.round(64 + 191 * t)];
    }
    const t = 1 + s;
    return [Math.round(64 + 191 * t), Math.round(64 + 191 * t), 255];
  };
}

export const PALETTE: Color[] = [
  [31, 119, 180],
  [214, 39, 40],
  [44, 160, 44],
  [148, 103, 189],
  [255, 127, 14],
  [23, 190, 207],
];

// 4x5 bitmap font, one nibble per row
const FONT: Record<string, number[]> = {
  "0": [0b0110, 0b1001, 0b1001, 0b1001, 0b0110],
  "1": [0b0010, 0b0110, 0b0010, 0b0010, 0b0111],
  "2": [0b0110, 0b1001, 0b0010, 0b0100, 0b1111],
  "3": [0b1110, 0b0001, 0b0110, 0b0001, 0b1110],
  "4": [0b1001, 0b1001, 0b1111, 0b0001, 0b0001],
  "5": [0b1111, 0b1000, 0b1110, 0b0001, 0b1110],
  "6": [0b0110, 0b1000, 0b1110, 0b1001, 0b0110],
  "7": [0b1111, 0b0001, 0b0010, 0b0100, 0b0100],
  "8": [0b0110, 0b1001, 0b0110, 0b1001, 0b0110],
  "9": [0b0110, 0b1001, 0b0111, 0b0001, 0b0110],
  A: [0b0110, 0b1001, 0b1111, 0b1001, 0b1001],
  B: [0b1110, 0b1001, 0b1110, 0b1001, 0b1110],
  C: [0b0111, 0b1000, 0b1000, 0b1000, 0b0111],
  D: [0b1110, 0b1001, 0b1001, 0b1001, 0b1110],
  E: [0b1111, 0b1000, 0b1110, 0b1000, 0b1111],
  F: [0b1111, 0b1000, 0b1110, 0b1000, 0b1000],
  G: [0b0111, 0b1000, 0b1011, 0b1001, 0b0111],
  H: [0b1001, 0b1001, 0b1111, 0b1001, 0b1001],
  I: [0b0111, 0b0010, 0b0010, 0b0010, 0b0111],
  J: [0b0011, 0b0001, 0b0001, 0b1001, 0b0110],
  K: [0b1001, 0b1010, 0b1100, 0b1010, 0b1001],
  L: [0b1000, 0b1000, 0b1000, 0b1000, 0b1111],
  M: [0b1001, 0b1111, 0b1111, 0b1001, 0b1001],
  N: [0b1001, 0b1101, 0b1011, 0b1001, 0b1001],
  O: [0b0110, 0b1001, 0b1001, 0b1001, 0b0110],
  P: [0b1110, 0b1001, 0b1110, 0b1000, 0b1000],
  Q: [0b0110, 0b1001, 0b1001, 0b1010, 0b0101],
  R: [0b1110, 0b1001, 0b1110, 0b1010, 0b1001],
  S: [0b0111, 0b1000, 0b0110, 0b0001, 0b1110],
  T: [0b1111, 0b0010, 0b0010, 0b0010, 0b0010],
  U: [0b1001, 0b1001, 0b1001, 0b1001, 0b0110],
  V: [0b1001, 0b1001, 0b1001, 0b0110, 0b0110],
  W: [0b1001, 0b1001, 0b1111, 0b1111, 0b1001],
  X: [0b1001, 0b0110, 0b0110, 0b0110, 0b1001],
  Y: [0b1001, 0b1001, 0b0110, 0b0010, 0b0010],
  Z: [0b1111, 0b0001, 0b0110, 0b1000, 0b1111],
  "-": [0b0000, 0b0000, 0b1111, 0b0000, 0b0000],
  "+": [0b0000, 0b0010, 0b0111, 0b0010, 0b0000],
  ".": [0b0000, 0b0000, 0b0000, 0b0000, 0b0010],
  ",": [0b0000, 0b0000, 0b0000, 0b0010, 0b0100],
  _: [0b0000, 0b0000, 0b0000, 0b0000, 0b1111],
  ":": [0b0000, 0b0010, 0b0000, 0b0010, 0b0000],
  "=": [0b0000, 0b1111, 0b0000, 0b1111, 0b0000],
  "/": [0b0001, 0b0010, 0b0010, 0b0100, 0b1000],
  " ": [0, 0, 0, 0, 0],
  "?": [0b0110, 0b1001, 0b0010, 0b0000, 0b0010],
};
