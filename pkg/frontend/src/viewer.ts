/** Controller gluing the HTTP client, speech output, and state machine. */

import { ApiError } from "./api.js";
import type { ApiClient } from "./api.js";
import { hitTest } from "./hittest.js";
import type { SpeechAdapter } from "./speech.js";
import type { ViewerState } from "./state.js";
import {
  advance,
  canPlay,
  initialState,
  startReadAll,
  startRegionSpeech,
  stopped,
  withCaption,
  withCaptureFailure,
  withDocument,
} from "./state.js";

export interface ViewerOptions {
  api: ApiClient;
  speech: SpeechAdapter;
  /** Non-blocking notice for taps that land on background, etc. */
  onCue?: (message: string) => void;
  /** Caption pacing when speech is unavailable; tests inject an instant one. */
  captionPause?: (text: string) => Promise<void>;
}

function defaultPause(text: string): Promise<void> {
  const ms = Math.max(400, 35 * text.length);
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function transcriptLines(transcript: string): string[] {
  return transcript.split("\n").filter((line) => line.length > 0);
}

export class Viewer {
  private api: ApiClient;
  private speech: SpeechAdapter;
  private onCue: (message: string) => void;
  private captionPause: (text: string) => Promise<void>;
  private current: ViewerState;
  private listeners: Array<(state: ViewerState) => void> = [];
  /** Bumped to invalidate whatever playback loop is in flight. */
  private session = 0;
  /** Last region voiced, so keyboard navigation resumes from there. */
  private cursor: number | null = null;

  constructor(baseUrl: string, options: ViewerOptions) {
    this.api = options.api;
    this.speech = options.speech;
    this.onCue = options.onCue ?? (() => undefined);
    this.captionPause = options.captionPause ?? defaultPause;
    this.current = initialState(baseUrl);
  }

  get state(): ViewerState {
    return this.current;
  }

  subscribe(listener: (state: ViewerState) => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((entry) => entry !== listener);
    };
  }

  private setState(state: ViewerState): void {
    this.current = state;
    for (const listener of this.listeners) {
      listener(state);
    }
  }

  /** Send a captured frame to the server and adopt the resulting document. */
  async capture(image: BodyInit): Promise<void> {
    this.stop();
    try {
      const doc = await this.api.capture(image);
      this.cursor = null;
      this.setState(withDocument(this.current, doc));
    } catch (error) {
      const message =
        error instanceof ApiError
          ? `capture failed: ${error.message}`
          : "capture failed: server unreachable";
      this.setState(withCaptureFailure(this.current, message));
    }
  }

  /** Resolve a tap in document pixel coordinates. Background is a no-op. */
  async tap(x: number, y: number): Promise<void> {
    const doc = this.current.doc;
    if (!doc) {
      return;
    }
    const hit = hitTest(doc, x, y);
    if (!hit) {
      this.onCue("nothing readable there");
      return;
    }
    await this.speakRegion(hit.id);
  }

  /** Fetch and play the script for one region. */
  async speakRegion(regionId: number): Promise<void> {
    const doc = this.current.doc;
    if (!doc) {
      return;
    }
    this.stop();
    const token = this.session;
    let transcript: string;
    try {
      transcript = await this.api.audio(doc.image_ref, { region: regionId });
    } catch (error) {
      const message =
        error instanceof ApiError ? error.message : "audio fetch failed";
      this.onCue(message);
      return;
    }
    if (token !== this.session) {
      return;
    }
    this.cursor = regionId;
    this.setState(startRegionSpeech(this.current, regionId));
    await this.playLine(transcript.trimEnd(), token);
    if (token === this.session) {
      this.setState(stopped(this.current));
    }
  }

  /** Read every region in the document's reading order. */
  async readAll(): Promise<void> {
    if (!canPlay(this.current)) {
      return;
    }
    const doc = this.current.doc!;
    this.stop();
    const token = this.session;
    let transcript: string;
    try {
      transcript = await this.api.audio(doc.image_ref, { mode: "read_all" });
    } catch (error) {
      const message =
        error instanceof ApiError ? error.message : "audio fetch failed";
      this.onCue(message);
      return;
    }
    if (token !== this.session) {
      return;
    }
    const lines = transcriptLines(transcript);
    const count = Math.min(lines.length, doc.reading_order.length);
    if (count === 0) {
      return;
    }
    this.setState(startReadAll(this.current));
    for (let index = 0; index < count; index += 1) {
      this.cursor = doc.reading_order[index];
      const finished = await this.playLine(lines[index], token);
      if (!finished || token !== this.session) {
        return;
      }
      this.setState(advance(this.current));
      if (this.current.playback.kind === "idle") {
        return;
      }
    }
    if (token === this.session) {
      this.setState(stopped(this.current));
    }
  }

  /** Interrupt whatever is playing and return to idle. */
  stop(): void {
    this.session += 1;
    this.speech.cancel();
    if (
      this.current.playback.kind !== "idle" ||
      this.current.caption !== null
    ) {
      this.setState(stopped(this.current));
    }
  }

  /** Keyboard navigation: speak the next region in reading order. */
  async next(): Promise<void> {
    await this.step(1);
  }

  /** Keyboard navigation: speak the previous region in reading order. */
  async prev(): Promise<void> {
    await this.step(-1);
  }

  private async step(delta: number): Promise<void> {
    const doc = this.current.doc;
    if (!doc || doc.reading_order.length === 0) {
      return;
    }
    const order = doc.reading_order;
    const position =
      this.cursor === null ? -1 : order.indexOf(this.cursor);
    let target: number;
    if (position === -1) {
      target = delta > 0 ? 0 : order.length - 1;
    } else {
      target = Math.min(order.length - 1, Math.max(0, position + delta));
    }
    await this.speakRegion(order[target]);
  }

  /**
   * Voice one line, mirroring it as a caption. Falls back to caption-only
   * pacing when no speech output exists. Returns false when interrupted.
   */
  private async playLine(line: string, token: number): Promise<boolean> {
    this.setState(withCaption(this.current, line));
    try {
      if (this.speech.available) {
        await this.speech.speak(line);
      } else {
        await this.captionPause(line);
      }
    } catch {
      return false;
    }
    return token === this.session;
  }
}
