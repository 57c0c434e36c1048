/** Reader for the simulator's comma-separated time-series and sweep files. */

export interface Table {
  columns: string[];
  rows: number[][];
}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new Error("empty CSV file");
  }
  const columns = lines[0].split(",");
  const rows = lines.slice(1).map((line, i) => {
    const cells = line.split(",").map(Number);
    if (cells.length !== columns.length) {
      throw new Error(`row ${i + 2} has ${cells.length} cells, expected ${columns.length}`);
    }
    return cells;
  });
  return { columns, rows };
}

export function column(table: Table, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) {
    throw new Error(
      `column ${JSON.stringify(name)} not found; available: ${table.columns.join(", ")}`,
    );
  }
  return table.rows.map((r) => r[idx]);
}
