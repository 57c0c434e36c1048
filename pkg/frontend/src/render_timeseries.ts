/**
 * Time-series / sweep-curve renderer: requested CSV columns against the time
 * column (or any other x column).
 *
 * Usage: render_timeseries.js input.csv output.png --columns a,b[,c...]
 *        [--x t] [--size W,H]
 */

import { readFileSync, writeFileSync } from "node:fs";
import { column, parseCsv, Table } from "./csv";
import { encodePng } from "./png";
import { PALETTE, Raster } from "./raster";

export function renderTimeseries(
  table: Table,
  columnNames: string[],
  xName = "t",
  width = 800,
  height = 480,
): Raster {
  const xs = column(table, xName);
  const series = columnNames.map((name) => ({ name, values: column(table, name) }));

  const finite = (vals: number[]) => vals.filter(Number.isFinite);
  const allY = finite(series.flatMap((s) => s.values));
  const yMin = allY.length ? Math.min(0, ...allY) : 0;
  const yMax = allY.length ? Math.max(...allY) : 1;
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const spanX = xMax - xMin || 1;
  const spanY = yMax - yMin || 1;

  const left = 50;
  const right = width - 15;
  const top = 15;
  const bottom = height - 30;
  const px = (x: number) => left + ((x - xMin) / spanX) * (right - left);
  const py = (y: number) => bottom - ((y - yMin) / spanY) * (bottom - top);

  const raster = new Raster(width, height);
  raster.rect(left, top, right, bottom, [40, 40, 40]);
  for (const frac of [0, 0.5, 1]) {
    const yv = yMin + frac * spanY;
    const xv = xMin + frac * spanX;
    raster.text(2, Math.round(py(yv)) - 2, yv.toPrecision(3), [40, 40, 40]);
    raster.text(Math.round(px(xv)) - 8, bottom + 6, xv.toPrecision(3), [40, 40, 40]);
  }
  raster.text(Math.round((left + right) / 2) - 2 * xName.length, height - 12, xName, [40, 40, 40]);

  series.forEach((s, k) => {
    const color = PALETTE[k % PALETTE.length];
    let prev: [number, number] | null = null;
    for (let i = 0; i < xs.length; i++) {
      const y = s.values[i];
      if (!Number.isFinite(y)) {
        prev = null;
        continue;
      }
      const pt: [number, number] = [px(xs[i]), py(y)];
      if (prev) raster.line(prev[0], prev[1], pt[0], pt[1], color);
      prev = pt;
    }
    raster.text(left + 6, top + 6 + 8 * k, s.name, color);
  });
  return raster;
}

export function main(argv: string[]): number {
  const positional: string[] = [];
  let columns: string[] = [];
  let xName = "t";
  let size: [number, number] = [800, 480];
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--columns") columns = argv[++i].split(",");
    else if (arg === "--x") xName = argv[++i];
    else if (arg === "--size") {
      const [w, h] = argv[++i].split(",").map(Number);
      size = [w, h];
    } else positional.push(arg);
  }
  if (positional.length !== 2 || columns.length === 0) {
    console.error(
      "usage: render_timeseries input.csv output.png --columns a,b [--x t] [--size W,H]",
    );
    return 2;
  }
  const [input, output] = positional;
  try {
    const table = parseCsv(readFileSync(input, "utf8"));
    const raster = renderTimeseries(table, columns, xName, size[0], size[1]);
    writeFileSync(output, encodePng(raster.width, raster.height, raster.data));
    console.log(`${output}: ${columns.length} series, ${table.rows.length} rows`);
    return 0;
  } catch (err) {
    console.error(`${input}: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
