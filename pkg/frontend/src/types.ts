/** Wire types for the slide document JSON served by the capture service. */

export interface BBox {
  x: number;
  y: number;
  w: number;
  h: number;
}

export type Coarse = "text" | "figure" | "equation" | "table" | "other";

export interface TablePayload {
  grid: [number, number];
  cells: number;
  cell_texts: string[];
}

export type Payload =
  | { text: string }
  | { figure_class: string }
  | { equation_description: string }
  | { table: TablePayload }
  | { error: string };

export interface Region {
  id: number;
  class: string;
  coarse: Coarse;
  bbox: BBox;
  confidence: number;
  payload: Payload;
}

export interface SlideDocument {
  image_ref: string;
  width: number;
  height: number;
  regions: Region[];
  reading_order: number[];
  version: "1";
}

export function regionById(doc: SlideDocument, id: number): Region {
  const region = doc.regions.find((r) => r.id === id);
  if (!region) {
    throw new Error(`document has no region ${id}`);
  }
  return region;
}
