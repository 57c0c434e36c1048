/** Hand-built files in the simulator's documented output formats. */

export function vtkText(opts: {
  nx: number; // cells per side of the structured grid
  u?: (x: number, y: number) => number;
  director?: (x: number, y: number) => [number, number];
  tensor?: (x: number, y: number) => [number, number, number, number];
}): string {
  const n = opts.nx + 1;
  const pts: Array<[number, number]> = [];
  for (let row = 0; row < n; row++) {
    for (let col = 0; col < n; col++) {
      pts.push([-0.5 + col / opts.nx, -0.5 + row / opts.nx]);
    }
  }
  const tris: Array<[number, number, number]> = [];
  for (let row = 0; row < opts.nx; row++) {
    for (let col = 0; col < opts.nx; col++) {
      const v00 = row * n + col;
      const v10 = v00 + 1;
      const v01 = v00 + n;
      const v11 = v01 + 1;
      tris.push([v00, v10, v11], [v00, v11, v01]);
    }
  }
  const u = opts.u ?? (() => 0);
  const director = opts.director ?? (() => [0, 0] as [number, number]);
  const tensor = opts.tensor ?? (() => [0, 0, 0, 0] as [number, number, number, number]);

  const lines = [
    "# vtk DataFile Version 2.0",
    "fixture",
    "ASCII",
    "DATASET UNSTRUCTURED_GRID",
    `POINTS ${pts.length} double`,
    ...pts.map(([x, y]) => `${x} ${y} 0`),
    `CELLS ${tris.length} ${4 * tris.length}`,
    ...tris.map(([a, b, c]) => `3 ${a} ${b} ${c}`),
    `CELL_TYPES ${tris.length}`,
    ...tris.map(() => "5"),
    `POINT_DATA ${pts.length}`,
    "SCALARS u double 1",
    "LOOKUP_TABLE default",
    ...pts.map(([x, y]) => `${u(x, y)}`),
    "TENSORS q double",
    ...pts.flatMap(([x, y]) => {
      const [q00, q01, q10, q11] = tensor(x, y);
      return [`${q00} ${q01} 0`, `${q10} ${q11} 0`, "0 0 0"];
    }),
    "VECTORS director double",
    ...pts.map(([x, y]) => {
      const [dx, dy] = director(x, y);
      return `${dx} ${dy} 0`;
    }),
  ];
  return lines.join("\n") + "\n";
}

export const TIMESERIES_CSV = [
  "step,t,picard_iters,elastic,bulk,electric,coupling,polarization,total_energy,max_abs_entry,max_eigenvalue,max_trace_residual,max_asym_residual,mean_director_angle",
  "1,0.01,3,0.1,0.2,0.3,0.01,0.001,0.611,0.5,0.51,1e-13,0,0.2",
  "2,0.02,3,0.11,0.19,0.29,0.01,0.001,0.601,0.52,0.53,1e-13,0,0.21",
  "3,0.03,4,0.12,0.18,0.28,0.01,0.001,0.591,0.54,0.55,1e-13,0,0.22",
].join("\n") + "\n";
