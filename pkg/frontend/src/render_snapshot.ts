/**
 * Director-field snapshot renderer: filled contour of the electric potential
 * on the triangulation with headless unit-length director glyphs at a
 * subsampled set of nodes.
 *
 * Usage: render_snapshot.js input.vtk output.png [--stride N] [--size W]
 *        [--glyphs-json PATH]
 *
 * --glyphs-json writes the glyph segments (node coordinates, unit direction)
 * as JSON for downstream checks.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { encodePng } from "./png";
import { divergingMap, Raster } from "./raster";
import { parseVtk, SnapshotBundle } from "./vtk";

export interface Glyph {
  x: number;
  y: number;
  dx: number; // unit direction
  dy: number;
}

/** Subsampled director glyphs; directors below the norm floor are skipped. */
export function computeGlyphs(bundle: SnapshotBundle, stride: number): Glyph[] {
  const rowLength = gridRowLength(bundle);
  const glyphs: Glyph[] = [];
  bundle.points.forEach(([x, y], i) => {
    const col = i % rowLength;
    const row = Math.floor(i / rowLength);
    if (col % stride !== 0 || row % stride !== 0) return;
    const [dx, dy] = bundle.directors[i];
    const norm = Math.hypot(dx, dy);
    if (norm <= 1e-12) return;
    glyphs.push({ x, y, dx: dx / norm, dy: dy / norm });
  });
  return glyphs;
}

/** Nodes arrive row-major from the structured mesh; recover the row length. */
function gridRowLength(bundle: SnapshotBundle): number {
  const y0 = bundle.points[0][1];
  let count = 0;
  for (const [, y] of bundle.points) {
    if (y === y0) count++;
    else break;
  }
  return Math.max(count, 1);
}

export function renderSnapshot(
  bundle: SnapshotBundle,
  size = 640,
  stride = 2,
): { raster: Raster; glyphs: Glyph[] } {
  const margin = 20;
  const xs = bundle.points.map((p) => p[0]);
  const ys = bundle.points.map((p) => p[1]);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const scale = (size - 2 * margin) / Math.max(xMax - xMin, yMax - yMin, 1e-300);
  const toPx = ([x, y]: [number, number]): [number, number] => [
    margin + (x - xMin) * scale,
    size - margin - (y - yMin) * scale, // image y grows downward
  ];

  const raster = new Raster(size, size);
  // color scale symmetric about zero so sign flips of the potential show up
  const limit = Math.max(...bundle.u.map(Math.abs));
  const map = divergingMap(limit);
  for (const tri of bundle.triangles) {
    const pts = tri.map((i) => toPx(bundle.points[i])) as Array<[number, number]>;
    const vals = tri.map((i) => bundle.u[i]) as [number, number, number];
    raster.fillTriangleInterp(pts, vals, map);
  }

  const glyphs = computeGlyphs(bundle, stride);
  const cell = gridRowLength(bundle) > 1 ? scale * spacing(bundle) : 10;
  const half = 0.45 * cell * stride;
  for (const g of glyphs) {
    const [cx, cy] = toPx([g.x, g.y]);
    // headless segment: directors are sign-ambiguous
    raster.line(cx - half * g.dx, cy + half * g.dy, cx + half * g.dx, cy - half * g.dy, [0, 0, 0]);
  }
  raster.rect(margin, margin, size - margin, size - margin, [40, 40, 40]);
  return { raster, glyphs };
}

function spacing(bundle: SnapshotBundle): number {
  const [x0] = bundle.points[0];
  const [x1] = bundle.points[1];
  return Math.abs(x1 - x0) || 1;
}

export function main(argv: string[]): number {
  const positional: string[] = [];
  let stride = 2;
  let size = 640;
  let glyphsJson: string | null = null;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--stride") stride = Number(argv[++i]);
    else if (arg === "--size") size = Number(argv[++i]);
    else if (arg === "--glyphs-json") glyphsJson = argv[++i];
    else positional.push(arg);
  }
  if (positional.length !== 2) {
    console.error("usage: render_snapshot input.vtk output.png [--stride N] [--size W] [--glyphs-json PATH]");
    return 2;
  }
  const [input, output] = positional;
  let bundle: SnapshotBundle;
  try {
    bundle = parseVtk(readFileSync(input, "utf8"));
  } catch (err) {
    console.error(`failed to parse ${input}: ${(err as Error).message}`);
    return 1;
  }
  const { raster, glyphs } = renderSnapshot(bundle, size, stride);
  writeFileSync(output, encodePng(raster.width, raster.height, raster.data));
  if (glyphsJson) {
    writeFileSync(glyphsJson, JSON.stringify(glyphs));
  }
  console.log(`${output}: ${raster.width}x${raster.height}, ${glyphs.length} glyphs`);
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
