/**
 * Reader for the simulator's legacy VTK 2.0 ASCII snapshots: POINTS, CELLS
 * (triangles), POINT_DATA with SCALARS u, TENSORS q (3x3) and VECTORS
 * director. Malformed input is rejected with the offending line number.
 */

export interface SnapshotBundle {
  points: Array<[number, number]>;
  triangles: Array<[number, number, number]>;
  u: number[];
  tensors: number[][]; // per point: [q00, q01, q10, q11]
  directors: Array<[number, number]>;
}

class VtkError extends Error {
  constructor(message: string, line: number) {
    super(`${message} (line ${line + 1})`);
    this.name = "VtkError";
  }
}

class Cursor {
  constructor(readonly lines: string[], public pos = 0) {}

  next(): string {
    if (this.pos >= this.lines.length) {
      throw new VtkError("unexpected end of file", this.pos);
    }
    return this.lines[this.pos++];
  }

  expect(predicate: (line: string) => boolean, what: string): string {
    const line = this.next();
    if (!predicate(line)) {
      throw new VtkError(`expected ${what}, got ${JSON.stringify(line)}`, this.pos - 1);
    }
    return line;
  }

  floats(count: number, what: string): number[] {
    const line = this.next();
    const parts = line.trim().split(/\s+/).map(Number);
    if (parts.length !== count || parts.some((v) => Number.isNaN(v))) {
      throw new VtkError(`expected ${count} numbers for ${what}`, this.pos - 1);
    }
    return parts;
  }
}

export function parseVtk(text: string): SnapshotBundle {
  const cur = new Cursor(text.split(/\r?\n/));
  cur.expect((l) => l.startsWith("# vtk DataFile Version 2"), "a VTK 2.0 header");
  cur.next(); // title
  cur.expect((l) => l.trim() === "ASCII", "ASCII format marker");
  cur.expect((l) => l.trim() === "DATASET UNSTRUCTURED_GRID", "an unstructured grid");

  const pointsHeader = cur.expect((l) => l.startsWith("POINTS"), "POINTS").split(/\s+/);
  const nPoints = Number(pointsHeader[1]);
  if (!Number.isInteger(nPoints) || nPoints <= 0) {
    throw new VtkError("bad POINTS count", cur.pos - 1);
  }
  const points: Array<[number, number]> = [];
  for (let i = 0; i < nPoints; i++) {
    const [x, y] = cur.floats(3, "a point");
    points.push([x, y]);
  }

  const cellsHeader = cur.expect((l) => l.startsWith("CELLS"), "CELLS").split(/\s+/);
  const nCells = Number(cellsHeader[1]);
  const triangles: Array<[number, number, number]> = [];
  for (let i = 0; i < nCells; i++) {
    const parts = cur.floats(4, "a triangle cell");
    if (parts[0] !== 3) {
      throw new VtkError("only triangle cells are supported", cur.pos - 1);
    }
    triangles.push([parts[1], parts[2], parts[3]]);
  }

  cur.expect((l) => l.startsWith("CELL_TYPES"), "CELL_TYPES");
  for (let i = 0; i < nCells; i++) {
    cur.expect((l) => l.trim() === "5", "cell type 5");
  }

  cur.expect((l) => l.trim() === `POINT_DATA ${nPoints}`, `POINT_DATA ${nPoints}`);
  cur.expect((l) => l.startsWith("SCALARS u"), "SCALARS u");
  cur.expect((l) => l.startsWith("LOOKUP_TABLE"), "LOOKUP_TABLE");
  const u: number[] = [];
  for (let i = 0; i < nPoints; i++) {
    u.push(cur.floats(1, "a potential value")[0]);
  }

  cur.expect((l) => l.startsWith("TENSORS q"), "TENSORS q");
  const tensors: number[][] = [];
  for (let i = 0; i < nPoints; i++) {
    const r0 = cur.floats(3, "a tensor row");
    const r1 = cur.floats(3, "a tensor row");
    cur.floats(3, "a tensor row"); // padded z row
    tensors.push([r0[0], r0[1], r1[0], r1[1]]);
  }

  cur.expect((l) => l.startsWith("VECTORS director"), "VECTORS director");
  const directors: Array<[number, number]> = [];
  for (let i = 0; i < nPoints; i++) {
    const [dx, dy] = cur.floats(3, "a director");
    directors.push([dx, dy]);
  }

  const maxIndex = Math.max(...triangles.flat());
  if (maxIndex >= nPoints) {
    throw new VtkError(`triangle index ${maxIndex} out of range`, 0);
  }
  return { points, triangles, u, tensors, directors };
}

export { VtkError };
