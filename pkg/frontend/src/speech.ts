/** Speech output behind a narrow interface so tests can record and control it. */

export interface SpeechAdapter {
  /** Whether speech output can actually be produced in this environment. */
  readonly available: boolean;
  /** Resolves when the utterance finishes, or rejects if it was cancelled. */
  speak(text: string): Promise<void>;
  /** Stop the current utterance immediately. */
  cancel(): void;
}

interface PendingUtterance {
  text: string;
  resolve: () => void;
  reject: (reason: Error) => void;
}

/**
 * Recording fake for tests. By default every utterance resolves on the
 * next microtask; with manual mode the test drives completion itself.
 */
export class FakeSpeech implements SpeechAdapter {
  readonly available: boolean;
  readonly spoken: string[] = [];
  readonly cancelled: string[] = [];
  private manual: boolean;
  private pending: PendingUtterance[] = [];

  constructor(options: { available?: boolean; manual?: boolean } = {}) {
    this.available = options.available ?? true;
    this.manual = options.manual ?? false;
  }

  speak(text: string): Promise<void> {
    this.spoken.push(text);
    if (!this.manual) {
      return Promise.resolve();
    }
    return new Promise((resolve, reject) => {
      this.pending.push({ text, resolve, reject });
    });
  }

  cancel(): void {
    for (const utterance of this.pending) {
      this.cancelled.push(utterance.text);
      utterance.reject(new Error("speech cancelled"));
    }
    this.pending = [];
  }

  /** Manual mode: finish the oldest in-flight utterance. */
  finishNext(): void {
    const utterance = this.pending.shift();
    if (!utterance) {
      throw new Error("no pending utterance");
    }
    utterance.resolve();
  }

  get pendingCount(): number {
    return this.pending.length;
  }
}

interface SynthesisLike {
  speak(utterance: { text: string; onend: unknown; onerror: unknown }): void;
  cancel(): void;
}

/**
 * Adapter over the browser speech synthesis API. Reports unavailable
 * when the platform does not expose it, so callers can fall back to
 * caption-only playback.
 */
export function browserSpeech(): SpeechAdapter {
  const host = globalThis as {
    speechSynthesis?: SynthesisLike;
    SpeechSynthesisUtterance?: new (text: string) => {
      text: string;
      onend: unknown;
      onerror: unknown;
    };
  };
  const synthesis = host.speechSynthesis;
  const Utterance = host.SpeechSynthesisUtterance;
  if (!synthesis || !Utterance) {
    return {
      available: false,
      speak: () => Promise.resolve(),
      cancel: () => undefined,
    };
  }
  return {
    available: true,
    speak(text: string): Promise<void> {
      return new Promise((resolve, reject) => {
        const utterance = new Utterance(text);
        utterance.onend = () => resolve();
        utterance.onerror = () => reject(new Error("speech failed"));
        synthesis.speak(utterance);
      });
    },
    cancel(): void {
      synthesis.cancel();
    },
  };
}
