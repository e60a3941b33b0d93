/** Typed client for the capture service; fetch is injectable for tests. */

import type { SlideDocument } from "./types.js";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorFrom(response: Response): Promise<ApiError> {
  let detail = "";
  try {
    const body = (await response.json()) as { error?: string };
    detail = body.error ?? "";
  } catch {
    detail = "";
  }
  return new ApiError(
    response.status,
    detail || `request failed with status ${response.status}`,
  );
}

export interface AudioOptions {
  mode?: "read_all" | "interactive" | "non_interactive";
  region?: number;
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  async capture(image: BodyInit): Promise<SlideDocument> {
    const response = await this.fetchFn(`${this.baseUrl}/capture`, {
      method: "POST",
      body: image,
    });
    if (!response.ok) {
      throw await errorFrom(response);
    }
    return (await response.json()) as SlideDocument;
  }

  async slide(id: string): Promise<SlideDocument> {
    const response = await this.fetchFn(
      `${this.baseUrl}/slides/${encodeURIComponent(id)}`,
    );
    if (!response.ok) {
      throw await errorFrom(response);
    }
    return (await response.json()) as SlideDocument;
  }

  async audio(id: string, options: AudioOptions = {}): Promise<string> {
    const params = new URLSearchParams();
    if (options.mode !== undefined) {
      params.set("mode", options.mode);
    }
    if (options.region !== undefined) {
      params.set("region", String(options.region));
    }
    const query = params.toString();
    const url =
      `${this.baseUrl}/slides/${encodeURIComponent(id)}/audio` +
      (query ? `?${query}` : "");
    const response = await this.fetchFn(url);
    if (!response.ok) {
      throw await errorFrom(response);
    }
    return response.text();
  }

  async health(): Promise<{ status: string }> {
    const response = await this.fetchFn(`${this.baseUrl}/healthz`);
    if (!response.ok) {
      throw await errorFrom(response);
    }
    return (await response.json()) as { status: string };
  }
}
