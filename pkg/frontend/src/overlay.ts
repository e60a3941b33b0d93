/** Pure geometry for the region overlay drawn on top of the slide image. */

import type { Coarse, SlideDocument } from "./types.js";

export const COARSE_COLORS: Record<Coarse, string> = {
  text: "#2563eb",
  figure: "#16a34a",
  equation: "#9333ea",
  table: "#ea580c",
  other: "#6b7280",
};

export interface OverlayRect {
  regionId: number;
  left: number;
  top: number;
  width: number;
  height: number;
  color: string;
  highlighted: boolean;
  label: string;
}

/**
 * Rectangles to draw for a document rendered at the given scale.
 * Pure: same inputs, same output, document untouched.
 */
export function overlayRects(
  doc: SlideDocument,
  scale: number,
  highlight: number | null = null,
): OverlayRect[] {
  return doc.regions.map((region) => ({
    regionId: region.id,
    left: region.bbox.x * scale,
    top: region.bbox.y * scale,
    width: region.bbox.w * scale,
    height: region.bbox.h * scale,
    color: COARSE_COLORS[region.coarse],
    highlighted: region.id === highlight,
    label: `${region.class} ${region.id}`,
  }));
}
