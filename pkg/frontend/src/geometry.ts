/**
 * Pixel indexing and cursor mapping. The service addresses pixels with
 * 1-based row-major indices: i = row * width + col + 1, rows and columns
 * counted from zero at the top-left corner.
 */

/** Zoom insets cover a square window of this radius around the pixel. */
export const INSET_RADIUS = 10;

export function toIndex(row: number, col: number, width: number): number {
  return row * width + col + 1;
}

export function toRowCol(index: number, width: number): { row: number; col: number } {
  const zero = index - 1;
  return { row: Math.floor(zero / width), col: zero % width };
}

/** True when index addresses a pixel of a height-by-width image. */
export function indexInBounds(index: number, width: number, height: number): boolean {
  return Number.isInteger(index) && index >= 1 && index <= width * height;
}

/** Center pixel of an image; for 128x128 this is index 8257. */
export function centerIndex(width: number, height: number): number {
  return toIndex(Math.floor(height / 2), Math.floor(width / 2), width);
}

/** Screen rectangle a pane occupies, plus the image extents it shows. */
export interface PaneGeometry {
  left: number;
  top: number;
  width: number;
  height: number;
  imageWidth: number;
  imageHeight: number;
}

/**
 * Map a cursor position to the pixel index under it, or null when the
 * cursor is outside the pane rectangle.
 */
export function cursorToPixel(geom: PaneGeometry, x: number, y: number): number | null {
  const fx = (x - geom.left) / geom.width;
  const fy = (y - geom.top) / geom.height;
  if (fx < 0 || fx >= 1 || fy < 0 || fy >= 1) {
    return null;
  }
  const col = Math.min(geom.imageWidth - 1, Math.floor(fx * geom.imageWidth));
  const row = Math.min(geom.imageHeight - 1, Math.floor(fy * geom.imageHeight));
  return toIndex(row, col, geom.imageWidth);
}

/** Clipped inset window around a pixel, in image coordinates. */
export interface InsetWindow {
  rowStart: number;
  rowEnd: number; // exclusive
  colStart: number;
  colEnd: number; // exclusive
  /** Position of the principle pixel inside the window. */
  centerRow: number;
  centerCol: number;
}

export function insetWindow(
  index: number,
  width: number,
  height: number,
  radius: number = INSET_RADIUS,
): InsetWindow {
  const { row, col } = toRowCol(index, width);
  const rowStart = Math.max(0, row - radius);
  const colStart = Math.max(0, col - radius);
  return {
    rowStart,
    rowEnd: Math.min(height, row + radius + 1),
    colStart,
    colEnd: Math.min(width, col + radius + 1),
    centerRow: row - rowStart,
    centerCol: col - colStart,
  };
}
