/** Browser entry point: binds the app controller to the DOM. */

import { App } from "./app.js";
import { MaskBuffer, Tool, hasPrompt } from "./prompt-state.js";

function encodeMaskToPng(mask: MaskBuffer): string {
  const canvas = document.createElement("canvas");
  canvas.width = mask.width;
  canvas.height = mask.height;
  const ctx = canvas.getContext("2d")!;
  const img = ctx.createImageData(mask.width, mask.height);
  for (let i = 0; i < mask.data.length; i++) {
    const v = mask.data[i] ? 255 : 0;
    img.data[4 * i] = v;
    img.data[4 * i + 1] = v;
    img.data[4 * i + 2] = v;
    img.data[4 * i + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
  return canvas.toDataURL("image/png").split(",")[1];
}

const app = new App({
  baseUrl: "",
  transport: (url, init) => fetch(url, init),
  encodeMask: encodeMaskToPng,
  confirmDiscard: () => window.confirm("Switching tools clears the current prompt. Continue?"),
});

const canvas = document.getElementById("editor") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const fileInput = document.getElementById("file") as HTMLInputElement;
const submitBtn = document.getElementById("submit") as HTMLButtonElement;
const undoBtn = document.getElementById("undo") as HTMLButtonElement;
const redoBtn = document.getElementById("redo") as HTMLButtonElement;
const overlayBtn = document.getElementById("toggle-overlay") as HTMLButtonElement;
const timingEl = document.getElementById("timing") as HTMLSpanElement;
const noticesEl = document.getElementById("notices") as HTMLDivElement;

let sourceImage: HTMLImageElement | null = null;
let resultImage: HTMLImageElement | null = null;
let overlayImage: HTMLImageElement | null = null;

for (const tool of ["dot", "line", "brush", "eraser"] as Tool[]) {
  document.getElementById(`tool-${tool}`)!.addEventListener("click", () => {
    app.selectTool(tool);
  });
}

fileInput.addEventListener("change", () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  const reader = new FileReader();
  reader.onload = () => {
    const dataUrl = reader.result as string;
    const img = new Image();
    img.onload = () => {
      sourceImage = img;
      resultImage = null;
      overlayImage = null;
      canvas.width = img.width;
      canvas.height = img.height;
      app.loadImage(dataUrl.split(",")[1], img.width, img.height);
    };
    img.src = dataUrl;
  };
  reader.readAsDataURL(file);
});

function canvasPoint(ev: MouseEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  const x = ((ev.clientX - rect.left) / rect.width) * canvas.width;
  const y = ((ev.clientY - rect.top) / rect.height) * canvas.height;
  return [Math.round(x), Math.round(y)];
}

canvas.addEventListener("click", (ev) => {
  const [x, y] = canvasPoint(ev);
  app.pointer(x, y, "click");
});
canvas.addEventListener("dblclick", (ev) => {
  const [x, y] = canvasPoint(ev);
  app.pointer(x, y, "dblclick");
});
let dragging = false;
canvas.addEventListener("mousedown", () => (dragging = true));
window.addEventListener("mouseup", () => (dragging = false));
canvas.addEventListener("mousemove", (ev) => {
  if (dragging && (app.state.tool === "brush" || app.state.tool === "eraser")) {
    const [x, y] = canvasPoint(ev);
    app.pointer(x, y, "drag");
  }
});

submitBtn.addEventListener("click", () => void app.submit());
undoBtn.addEventListener("click", () => app.undo());
redoBtn.addEventListener("click", () => app.redo());
overlayBtn.addEventListener("click", () => app.toggleOverlay());

app.notices.subscribe((notices) => {
  noticesEl.innerHTML = "";
  for (const n of notices) {
    const div = document.createElement("div");
    div.className = `notice notice-${n.level}`;
    div.textContent = n.message + (n.retryable ? " (retry available)" : "");
    const close = document.createElement("button");
    close.textContent = "x";
    close.addEventListener("click", () => app.notices.dismiss(n.id));
    div.appendChild(close);
    if (n.retryable) {
      const retry = document.createElement("button");
      retry.textContent = "retry";
      retry.addEventListener("click", () => {
        app.notices.dismiss(n.id);
        void app.submit();
      });
      div.appendChild(retry);
    }
    noticesEl.appendChild(div);
  }
});

function drawPromptMarks(): void {
  ctx.save();
  ctx.strokeStyle = "#00e5ff";
  ctx.fillStyle = "#00e5ff";
  ctx.lineWidth = 2;
  const s = app.state;
  if (s.dot) {
    ctx.beginPath();
    ctx.arc(s.dot[0], s.dot[1], 5, 0, 2 * Math.PI);
    ctx.fill();
  }
  if (s.line.length > 0) {
    ctx.beginPath();
    ctx.moveTo(s.line[0][0], s.line[0][1]);
    for (const [x, y] of s.line.slice(1)) ctx.lineTo(x, y);
    ctx.stroke();
    for (const [x, y] of s.line) {
      ctx.beginPath();
      ctx.arc(x, y, 3, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
  if (s.mask) {
    ctx.globalAlpha = 0.45;
    ctx.fillStyle = "#ffd54f";
    for (let y = 0; y < s.mask.height; y++) {
      for (let x = 0; x < s.mask.width; x++) {
        if (s.mask.data[y * s.mask.width + x]) ctx.fillRect(x, y, 1, 1);
      }
    }
  }
  ctx.restore();
}

function redraw(): void {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  // removal result sits beneath the toggleable mask overlay
  const base = resultImage ?? sourceImage;
  if (base) ctx.drawImage(base, 0, 0);
  if (overlayImage && app.overlayVisible) {
    ctx.globalAlpha = 0.6;
    ctx.drawImage(overlayImage, 0, 0);
    ctx.globalAlpha = 1.0;
  }
  if (!resultImage) drawPromptMarks();
}

app.onRender(() => {
  submitBtn.disabled = app.pending || !app.image || !hasPrompt(app.state);
  undoBtn.disabled = !app.history.canUndo();
  redoBtn.disabled = !app.history.canRedo();
  if (app.result) {
    timingEl.textContent = `${app.result.timingMs.toFixed(1)} ms`;
    resultImage = new Image();
    resultImage.onload = redraw;
    resultImage.src = `data:image/png;base64,${app.result.removal}`;
    if (app.result.overlay) {
      overlayImage = new Image();
      overlayImage.onload = redraw;
      overlayImage.src = `data:image/png;base64,${app.result.overlay}`;
    }
  } else {
    resultImage = null;
    overlayImage = null;
  }
  redraw();
});

redraw();
