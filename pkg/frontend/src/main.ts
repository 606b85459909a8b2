import { getHealth } from "./api.js";
import { Controller } from "./controller.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

new Controller({
  fileInput: byId<HTMLInputElement>("file-input"),
  uploadButton: byId<HTMLButtonElement>("upload-button"),
  startButton: byId<HTMLButtonElement>("start-button"),
  resetButton: byId<HTMLButtonElement>("reset-button"),
  sampleFrame: byId("sample-frame"),
  resultPanel: byId("result-panel"),
  barsPanel: byId("bars-panel"),
  statusLine: byId("status-line"),
});

void getHealth().then((loaded) => {
  if (!loaded) {
    byId("status-line").textContent = "Server is up but no model is loaded.";
  }
});
