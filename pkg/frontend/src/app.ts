/** Browser entry point: wires DOM controls to the viewer controller. */

import { ApiClient } from "./api.js";
import { overlayRects } from "./overlay.js";
import { browserSpeech } from "./speech.js";
import type { ViewerState } from "./state.js";
import { canPlay } from "./state.js";
import { Viewer } from "./viewer.js";

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

export function mount(baseUrl: string): Viewer {
  const api = new ApiClient(baseUrl);
  const speech = browserSpeech();
  const cueNode = element<HTMLDivElement>("cue");
  let cueTimer: ReturnType<typeof setTimeout> | null = null;

  const viewer = new Viewer(baseUrl, {
    api,
    speech,
    onCue: (message) => {
      cueNode.textContent = message;
      if (cueTimer) {
        clearTimeout(cueTimer);
      }
      cueTimer = setTimeout(() => {
        cueNode.textContent = "";
      }, 2000);
    },
  });

  const fileInput = element<HTMLInputElement>("frame");
  const captureButton = element<HTMLButtonElement>("capture");
  const readAllButton = element<HTMLButtonElement>("read-all");
  const stopButton = element<HTMLButtonElement>("stop");
  const banner = element<HTMLDivElement>("banner");
  const caption = element<HTMLDivElement>("caption");
  const stage = element<HTMLDivElement>("stage");
  const image = element<HTMLImageElement>("slide");
  const overlay = element<HTMLDivElement>("overlay");

  function scale(state: ViewerState): number {
    if (!state.doc || state.doc.width === 0) {
      return 1;
    }
    return image.clientWidth > 0 ? image.clientWidth / state.doc.width : 1;
  }

  function render(state: ViewerState): void {
    banner.textContent = state.banner ?? "";
    banner.hidden = state.banner === null;
    caption.textContent = state.caption ?? "";
    readAllButton.disabled = !canPlay(state);
    stopButton.disabled = state.playback.kind === "idle";
    overlay.replaceChildren();
    if (!state.doc) {
      return;
    }
    for (const rect of overlayRects(state.doc, scale(state), state.highlight)) {
      const box = document.createElement("div");
      box.className = rect.highlighted ? "region highlighted" : "region";
      box.style.left = `${rect.left}px`;
      box.style.top = `${rect.top}px`;
      box.style.width = `${rect.width}px`;
      box.style.height = `${rect.height}px`;
      box.style.borderColor = rect.color;
      box.title = rect.label;
      overlay.appendChild(box);
    }
  }

  viewer.subscribe(render);
  render(viewer.state);

  captureButton.addEventListener("click", () => {
    const file = fileInput.files?.[0];
    if (!file) {
      return;
    }
    image.src = URL.createObjectURL(file);
    void viewer.capture(file);
  });

  readAllButton.addEventListener("click", () => {
    void viewer.readAll();
  });
  stopButton.addEventListener("click", () => {
    viewer.stop();
  });

  stage.addEventListener("click", (event) => {
    const state = viewer.state;
    if (!state.doc) {
      return;
    }
    const bounds = image.getBoundingClientRect();
    const factor = scale(state);
    const x = (event.clientX - bounds.left) / factor;
    const y = (event.clientY - bounds.top) / factor;
    void viewer.tap(Math.floor(x), Math.floor(y));
  });

  document.addEventListener("keydown", (event) => {
    if (event.key === "ArrowRight" || event.key === "n") {
      void viewer.next();
    } else if (event.key === "ArrowLeft" || event.key === "p") {
      void viewer.prev();
    } else if (event.key === "Escape") {
      viewer.stop();
    }
  });

  return viewer;
}

declare global {
  interface Window {
    slideViewer?: Viewer;
  }
}

if (typeof document !== "undefined" && document.getElementById("stage")) {
  window.slideViewer = mount(window.location.origin);
}
