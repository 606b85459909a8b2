// Wires the state machine to the page; at most one request in flight, and
// controls are disabled while one is pending.

import { renderBars } from "./bars.js";
import { uploadImage } from "./flow.js";
import { present } from "./present.js";
import { initialState, reset, startRecognition } from "./state.js";
import type { ViewState } from "./types.js";

interface Elements {
  fileInput: HTMLInputElement;
  uploadButton: HTMLButtonElement;
  startButton: HTMLButtonElement;
  resetButton: HTMLButtonElement;
  sampleFrame: HTMLElement;
  resultPanel: HTMLElement;
  barsPanel: HTMLElement;
  statusLine: HTMLElement;
}

export class Controller {
  private state: ViewState = initialState();
  private requestInFlight = false;

  constructor(private readonly els: Elements) {
    els.uploadButton.addEventListener("click", () => els.fileInput.click());
    els.fileInput.addEventListener("change", () => void this.onFileChosen());
    els.startButton.addEventListener("click", () =>
      this.setState(startRecognition(this.state)),
    );
    els.resetButton.addEventListener("click", () => this.setState(reset(this.state)));
    this.render();
  }

  private setState(next: ViewState): void {
    this.state = next;
    this.render();
  }

  private async onFileChosen(): Promise<void> {
    const file = this.els.fileInput.files?.[0];
    this.els.fileInput.value = "";
    if (!file || this.requestInFlight) return;
    this.requestInFlight = true;
    try {
      this.setState(
        await uploadImage(
          this.state,
          { name: file.name, size: file.size, type: file.type, blob: file },
          fetch.bind(globalThis),
        ),
      );
    } finally {
      this.requestInFlight = false;
    }
  }

  private render(): void {
    const view = present(this.state);
    this.els.uploadButton.disabled = view.uploadDisabled;
    this.els.startButton.disabled = view.startDisabled;
    this.els.resetButton.disabled = view.resetDisabled;

    this.els.sampleFrame.innerHTML = "";
    if (view.sampleImage) {
      const img = document.createElement("img");
      img.src = view.sampleImage;
      img.alt = "cropped face sample";
      this.els.sampleFrame.appendChild(img);
    } else {
      this.els.sampleFrame.textContent = view.sampleText;
    }

    this.els.resultPanel.textContent = view.resultText;

    this.els.barsPanel.innerHTML = "";
    if (view.showBars && this.state.probabilities) {
      renderBars(this.els.barsPanel, this.state.probabilities);
    } else {
      this.els.barsPanel.textContent = view.barsText;
    }

    this.els.statusLine.textContent = view.statusText;
  }
}
