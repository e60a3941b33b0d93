/** Point-to-region resolution for taps on the rendered slide. */

import type { Region, SlideDocument } from "./types.js";

/** A bbox covers the half-open pixel range [x, x+w) x [y, y+h). */
export function contains(region: Region, x: number, y: number): boolean {
  const { x: bx, y: by, w, h } = region.bbox;
  return x >= bx && x < bx + w && y >= by && y < by + h;
}

export function regionsAt(
  doc: SlideDocument,
  x: number,
  y: number,
): Region[] {
  return doc.regions.filter((region) => contains(region, x, y));
}

/**
 * The region a tap lands on: the smallest-area region containing the
 * point, so content nested inside a container wins over the container.
 * Equal areas tie-break on the lower region id. Null on background.
 */
export function hitTest(
  doc: SlideDocument,
  x: number,
  y: number,
): Region | null {
  let best: Region | null = null;
  for (const region of regionsAt(doc, x, y)) {
    if (best === null) {
      best = region;
      continue;
    }
    const area = region.bbox.w * region.bbox.h;
    const bestArea = best.bbox.w * best.bbox.h;
    if (area < bestArea || (area === bestArea && region.id < best.id)) {
      best = region;
    }
  }
  return best;
}
