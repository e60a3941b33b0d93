/** Shared fixtures: canned documents, a recorded server, a seeded RNG. */

import type { FetchLike } from "../src/api.js";
import type { BBox, Coarse, Payload, Region, SlideDocument } from "../src/types.js";

export function makeRegion(
  id: number,
  cls: string,
  coarse: Coarse,
  bbox: BBox,
  payload: Payload,
): Region {
  return { id, class: cls, coarse, bbox, confidence: 0.9, payload };
}

/**
 * Three regions whose array order is deliberately scrambled relative to
 * reading_order, so order-sensitive behavior cannot pass by accident.
 */
export function threeRegionDoc(): SlideDocument {
  return {
    image_ref: "abc123deadbeef00",
    width: 128,
    height: 96,
    regions: [
      makeRegion(
        7,
        "paragraph",
        "text",
        { x: 10, y: 30, w: 80, h: 20 },
        { text: "first point" },
      ),
      makeRegion(
        9,
        "equation",
        "equation",
        { x: 15, y: 60, w: 70, h: 14 },
        { equation_description: "x equals one" },
      ),
      makeRegion(
        4,
        "title",
        "text",
        { x: 10, y: 5, w: 100, h: 12 },
        { text: "welcome" },
      ),
    ],
    reading_order: [4, 7, 9],
    version: "1",
  };
}

export const THREE_REGION_TRANSCRIPT =
  "Title: welcome\nParagraph: first point\nEquation: x equals one\n";

export const THREE_REGION_LINES: Record<number, string> = {
  4: "Title: welcome",
  7: "Paragraph: first point",
  9: "Equation: x equals one",
};

/** A figure containing a smaller text region, for nested hit tests. */
export function nestedDoc(): SlideDocument {
  return {
    image_ref: "feedface00000000",
    width: 128,
    height: 96,
    regions: [
      makeRegion(
        5,
        "diagram",
        "figure",
        { x: 10, y: 10, w: 80, h: 60 },
        { figure_class: "diagram" },
      ),
      makeRegion(
        2,
        "caption",
        "text",
        { x: 20, y: 20, w: 20, h: 10 },
        { text: "inner label" },
      ),
    ],
    reading_order: [5, 2],
    version: "1",
  };
}

/** Deterministic 32-bit RNG so random tests are reproducible. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
}

export interface Route {
  method: string;
  /** Matched against the URL's path plus query string. */
  path: string | RegExp;
  status?: number;
  body: string | (() => string);
  contentType?: string;
}

export interface RecordedServer {
  fetchFn: FetchLike;
  requests: RecordedRequest[];
}

/**
 * Replays canned responses and logs every request, so client behavior
 * is asserted without any real network.
 */
export function recordedServer(routes: Route[]): RecordedServer {
  const requests: RecordedRequest[] = [];
  const fetchFn: FetchLike = (url, init) => {
    const method = init?.method ?? "GET";
    requests.push({ url, method, body: init?.body ?? null });
    const target = new URL(url);
    const pathAndQuery = target.pathname + target.search;
    for (const route of routes) {
      const matches =
        typeof route.path === "string"
          ? route.path === pathAndQuery
          : route.path.test(pathAndQuery);
      if (matches && route.method === method) {
        const body =
          typeof route.body === "function" ? route.body() : route.body;
        return Promise.resolve(
          new Response(body, {
            status: route.status ?? 200,
            headers: {
              "content-type": route.contentType ?? "application/json",
            },
          }),
        );
      }
    }
    return Promise.resolve(
      new Response(JSON.stringify({ error: "not found" }), {
        status: 404,
        headers: { "content-type": "application/json" },
      }),
    );
  };
  return { fetchFn, requests };
}

export function tick(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
