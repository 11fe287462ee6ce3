/**
 * Scatter pane view model: one point per pixel at its raw signed gradient
 * pair (first input on x, second on y), neighborhood points highlighted in
 * green, and the Pearson correlation of the highlighted subset.
 */

export interface ScatterRow {
  pixel: number;
  gx: number;
  gy: number;
  highlighted: boolean;
}

export interface ScatterPoint {
  pixel: number;
  /** Plot position in [0, 1] x [0, 1], shared scale on both axes. */
  sx: number;
  sy: number;
  highlighted: boolean;
}

export interface ScatterViewModel {
  points: ScatterPoint[];
  /** Pearson correlation over the highlighted subset, if defined there. */
  correlation: number | null;
  /** Shared axis domain [lo, hi] used for both coordinates. */
  domain: [number, number];
}

export const SCATTER_CSV_HEADER = "pixel,gmri,gpet,highlight";

/** Parse the service's scatter CSV export. Throws on a foreign header. */
export function parseScatterCsv(text: string): ScatterRow[] {
  const lines = text.trim().split(/\r?\n/);
  if (lines[0] !== SCATTER_CSV_HEADER) {
    throw new Error(`unexpected scatter header: ${lines[0]}`);
  }
  return lines.slice(1).map((line) => {
    const [pixel, gx, gy, flag] = line.split(",");
    return {
      pixel: Number(pixel),
      gx: Number(gx),
      gy: Number(gy),
      highlighted: flag === "1",
    };
  });
}

/** Pearson correlation; null when either coordinate is constant. */
export function pearson(xs: readonly number[], ys: readonly number[]): number | null {
  const n = xs.length;
  if (n < 2) {
    return null;
  }
  const mx = xs.reduce((a, b) => a + b, 0) / n;
  const my = ys.reduce((a, b) => a + b, 0) / n;
  let sxy = 0;
  let sxx = 0;
  let syy = 0;
  for (let i = 0; i < n; i++) {
    const dx = xs[i] - mx;
    const dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx === 0 || syy === 0) {
    return null;
  }
  return sxy / Math.sqrt(sxx * syy);
}

/**
 * Scale rows into plot coordinates. Both axes share one domain, so equal
 * gradients land exactly on the diagonal sx == sy.
 */
export function scatterViewModel(rows: readonly ScatterRow[]): ScatterViewModel {
  let lo = Infinity;
  let hi = -Infinity;
  for (const row of rows) {
    lo = Math.min(lo, row.gx, row.gy);
    hi = Math.max(hi, row.gx, row.gy);
  }
  if (!Number.isFinite(lo)) {
    lo = 0;
    hi = 1;
  }
  const span = hi > lo ? hi - lo : 1;
  const points = rows.map((row) => ({
    pixel: row.pixel,
    sx: (row.gx - lo) / span,
    sy: (row.gy - lo) / span,
    highlighted: row.highlighted,
  }));
  const sel = rows.filter((row) => row.highlighted);
  return {
    points,
    correlation: pearson(
      sel.map((row) => row.gx),
      sel.map((row) => row.gy),
    ),
    domain: [lo, hi],
  };
}
