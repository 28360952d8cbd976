/** Browser wiring: canvas annotation against the live service.
 *
 * Left click places a positive (foreground) click, right click a negative
 * one; the returned mask renders as a translucent overlay with the click
 * markers on top. Undo/reset mirror the server; a slider controls overlay
 * opacity; the metrics panel shows per-click latency and, when a ground-truth
 * mask was uploaded, live IoU.
 */

import { AnnotationApi } from "./api.js";
import { imageToDisplay } from "./coords.js";
import { renderOverlay } from "./rle.js";
import { AnnotationSession, SessionState } from "./session.js";

const POSITIVE_COLOR = "#2e7d32";
const NEGATIVE_COLOR = "#c62828";

export function mountApp(root: HTMLElement, baseUrl = ""): void {
  root.innerHTML = `
    <div class="toolbar">
      <label>image <input type="file" id="image-input" accept="image/*"></label>
      <label>ground truth (optional) <input type="file" id="gt-input" accept="image/*"></label>
      <label>zoom
        <select id="scale-select">
          <option value="0.5">0.5x</option>
          <option value="1" selected>1x</option>
          <option value="2">2x</option>
        </select>
      </label>
      <label>overlay <input type="range" id="opacity" min="0" max="100" value="50"></label>
      <button id="undo">undo</button>
      <button id="reset">reset</button>
      <a id="download" download="mask.png">download mask</a>
    </div>
    <div id="stage" style="position:relative">
      <canvas id="image-canvas" style="position:absolute;left:0;top:0"></canvas>
      <canvas id="overlay-canvas" style="position:absolute;left:0;top:0"></canvas>
    </div>
    <div id="metrics"></div>
    <div id="toast" style="color:#c62828"></div>
  `;

  const imageCanvas = root.querySelector<HTMLCanvasElement>("#image-canvas")!;
  const overlayCanvas = root.querySelector<HTMLCanvasElement>("#overlay-canvas")!;
  const metrics = root.querySelector<HTMLDivElement>("#metrics")!;
  const toast = root.querySelector<HTMLDivElement>("#toast")!;
  const scaleSelect = root.querySelector<HTMLSelectElement>("#scale-select")!;
  const download = root.querySelector<HTMLAnchorElement>("#download")!;

  let bitmap: ImageBitmap | null = null;
  let scale = 1;

  const api = new AnnotationApi(baseUrl);
  const session = new AnnotationSession(api, {
    onState: (state) => redraw(state),
    onError: (message) => {
      toast.textContent = message;
      setTimeout(() => {
        if (toast.textContent === message) toast.textContent = "";
      }, 4000);
    },
  });

  function redraw(state: SessionState): void {
    if (!bitmap) return;
    const w = Math.round(state.width * scale);
    const h = Math.round(state.height * scale);
    imageCanvas.width = overlayCanvas.width = w;
    imageCanvas.height = overlayCanvas.height = h;
    const stage = root.querySelector<HTMLDivElement>("#stage")!;
    stage.style.width = `${w}px`;
    stage.style.height = `${h}px`;

    imageCanvas.getContext("2d")!.drawImage(bitmap, 0, 0, w, h);

    const ctx = overlayCanvas.getContext("2d")!;
    ctx.clearRect(0, 0, w, h);
    if (state.mask) {
      const rgba = renderOverlay(state.mask, state.height, state.width,
                                 { r: 66, g: 133, b: 244 }, state.overlayOpacity);
      const off = new OffscreenCanvas(state.width, state.height);
      off.getContext("2d")!.putImageData(
        new ImageData(new Uint8ClampedArray(rgba), state.width, state.height), 0, 0);
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(off, 0, 0, w, h);
    }
    for (const click of state.clicks) {
      const p = imageToDisplay(click, scale);
      ctx.beginPath();
      ctx.arc(p.x, p.y, 4, 0, 2 * Math.PI);
      ctx.fillStyle = click.polarity === "positive" ? POSITIVE_COLOR : NEGATIVE_COLOR;
      ctx.fill();
      ctx.strokeStyle = "#ffffff";
      ctx.stroke();
    }

    const parts = [`clicks: ${state.clicks.length}`];
    if (state.lastLatencyMs != null) parts.push(`latency: ${state.lastLatencyMs.toFixed(1)} ms`);
    if (state.lastIou != null) parts.push(`IoU: ${state.lastIou.toFixed(3)}`);
    metrics.textContent = parts.join("  |  ");
    if (state.id) download.href = api.maskUrl(state.id);
  }

  overlayCanvas.addEventListener("click", (ev) => {
    const rect = overlayCanvas.getBoundingClientRect();
    void session.placeClickAt(
      { x: ev.clientX - rect.left, y: ev.clientY - rect.top }, "positive", scale);
  });
  overlayCanvas.addEventListener("contextmenu", (ev) => {
    ev.preventDefault();
    const rect = overlayCanvas.getBoundingClientRect();
    void session.placeClickAt(
      { x: ev.clientX - rect.left, y: ev.clientY - rect.top }, "negative", scale);
  });

  root.querySelector<HTMLButtonElement>("#undo")!.addEventListener("click", () => void session.undo());
  root.querySelector<HTMLButtonElement>("#reset")!.addEventListener("click", () => void session.reset());
  root.querySelector<HTMLInputElement>("#opacity")!.addEventListener("input", (ev) => {
    session.setOverlayOpacity(Number((ev.target as HTMLInputElement).value) / 100);
  });
  scaleSelect.addEventListener("change", () => {
    scale = Number(scaleSelect.value);
    redraw(session.snapshot);
  });

  const imageInput = root.querySelector<HTMLInputElement>("#image-input")!;
  const gtInput = root.querySelector<HTMLInputElement>("#gt-input")!;
  imageInput.addEventListener("change", async () => {
    const file = imageInput.files?.[0];
    if (!file) return;
    if (!file.type.startsWith("image/")) {
      toast.textContent = "not an image file";
      return;
    }
    bitmap = await createImageBitmap(file);
    const gt = gtInput.files?.[0] ?? undefined;
    await session.open(file, gt);
  });
}

declare global {
  interface Window {
    mountClicksegApp?: typeof mountApp;
  }
}

if (typeof window !== "undefined") {
  window.mountClicksegApp = mountApp;
}
