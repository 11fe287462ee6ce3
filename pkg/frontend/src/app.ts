/**
 * Browser wiring: builds the pane grid, connects the hover socket, and
 * routes slider and mouse events through the pure state and renderer
 * modules. Only this file touches the DOM.
 */

import { ServiceClient, browserTransport } from "./client.js";
import type { HoverSocket } from "./client.js";
import {
  applyHoverResult,
  initialState,
  setGamma1,
  setGamma2,
  withGuidance,
  withRequestedPixel,
  withSession,
} from "./state.js";
import type { ViewState } from "./state.js";
import { Renderer, canSelectOn } from "./panes.js";
import type { PaneImage, PaneName, PaneSurface } from "./panes.js";
import { cursorToPixel } from "./geometry.js";
import { GAMMA_MAX, GAMMA_MIN } from "./gamma.js";
import { parseScatterCsv, scatterViewModel } from "./scatter.js";
import type { ScatterRow } from "./scatter.js";

const PANE_ORDER: ReadonlyArray<[PaneName, string]> = [
  ["x1", "input 1"],
  ["x2", "input 2"],
  ["fused", "fused"],
  ["jacobian_x1", "jacobian wrt input 1"],
  ["jacobian_x2", "jacobian wrt input 2"],
  ["inset_x1", "inset 1"],
  ["inset_x2", "inset 2"],
  ["guidance_x1", "guidance 1"],
  ["guidance_x2", "guidance 2"],
  ["guidance_rgb", "guidance composite"],
];

const PANE_CSS_WIDTH = 256;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== "") {
    node.textContent = text;
  }
  return node;
}

class CanvasSurface implements PaneSurface {
  canvases = new Map<PaneName, HTMLCanvasElement>();
  banner: HTMLElement;
  readout: HTMLElement;

  constructor(banner: HTMLElement, readout: HTMLElement) {
    this.banner = banner;
    this.readout = readout;
  }

  putImage(pane: PaneName, image: PaneImage): void {
    const canvas = this.canvases.get(pane);
    if (canvas === undefined) {
      return;
    }
    if (canvas.width !== image.width || canvas.height !== image.height) {
      canvas.width = image.width;
      canvas.height = image.height;
    }
    const ctx = canvas.getContext("2d");
    if (ctx !== null) {
      // copy pins the buffer type the ImageData constructor expects
      const data = new Uint8ClampedArray(image.rgba);
      ctx.putImageData(new ImageData(data, image.width, image.height), 0, 0);
    }
  }

  setBanner(message: string | null): void {
    this.banner.textContent = message ?? "";
    this.banner.style.display = message === null ? "none" : "block";
  }

  setReadout(text: string): void {
    this.readout.textContent = text;
  }
}

export class App {
  private client: ServiceClient;
  private state: ViewState = initialState();
  private surface: CanvasSurface;
  private renderer: Renderer;
  private hover: HoverSocket | null = null;
  private scatterRows: ScatterRow[] | null = null;
  private scatterCanvas: HTMLCanvasElement;

  constructor(client: ServiceClient, root: HTMLElement) {
    this.client = client;
    const banner = el("div", {
      style: "display:none;background:#b00020;color:#fff;padding:6px 10px;margin:6px 0;",
    });
    const readout = el("div", { style: "font:13px monospace;margin:6px 0;min-height:1.2em;" });
    this.surface = new CanvasSurface(banner, readout);
    this.renderer = new Renderer(this.surface);
    this.scatterCanvas = el("canvas", {
      width: "280",
      height: "280",
      style: "border:1px solid #999;background:#fff;",
    });
    this.buildDom(root, banner, readout);
  }

  private buildDom(root: HTMLElement, banner: HTMLElement, readout: HTMLElement): void {
    const controls = el("div", { style: "margin:6px 0;display:flex;gap:12px;align-items:center;" });
    const modelSelect = el("select");
    const pairSelect = el("select");
    const connect = el("button", {}, "open session");
    controls.append("model ", modelSelect, " pair ", pairSelect, connect);

    const sliders = el("div", { style: "margin:6px 0;display:flex;gap:16px;align-items:center;" });
    const gammaRange = { min: String(GAMMA_MIN), max: String(GAMMA_MAX), step: "0.01" };
    const slider1 = el("input", { type: "range", ...gammaRange, value: "1" });
    const slider2 = el("input", { type: "range", ...gammaRange, value: "1" });
    const guidanceButton = el("button", {}, "compute guidance");
    const progress = el("span", { style: "font:12px monospace;" });
    sliders.append("jacobian gamma ", slider1, " guidance gamma ", slider2, guidanceButton, progress);

    const grid = el("div", {
      style: "display:flex;flex-wrap:wrap;gap:10px;align-items:flex-start;",
    });
    for (const [pane, label] of PANE_ORDER) {
      const cell = el("div", { style: "text-align:center;font:12px sans-serif;" });
      const canvas = el("canvas", {
        style: `width:${PANE_CSS_WIDTH}px;image-rendering:pixelated;border:1px solid #999;` +
          `cursor:${canSelectOn(pane) ? "crosshair" : "default"};`,
      });
      this.surface.canvases.set(pane, canvas);
      if (canSelectOn(pane)) {
        canvas.addEventListener("mousemove", (ev) => this.onPointer(canvas, ev));
        canvas.addEventListener("click", (ev) => this.onPointer(canvas, ev));
      }
      cell.append(canvas, el("div", {}, label));
      grid.append(cell);
    }
    const scatterCell = el("div", { style: "text-align:center;font:12px sans-serif;" });
    scatterCell.append(this.scatterCanvas, el("div", {}, "guidance scatter"));
    grid.append(scatterCell);

    root.append(controls, sliders, banner, readout, grid);

    connect.addEventListener("click", () => {
      void this.openSession(modelSelect.value, pairSelect.value);
    });
    slider1.addEventListener("input", () => {
      this.state = setGamma1(this.state, Number(slider1.value));
      this.renderer.regamma(this.state);
    });
    slider2.addEventListener("input", () => {
      this.state = setGamma2(this.state, Number(slider2.value));
      this.renderer.regamma(this.state);
      this.paintScatter();
    });
    // persist gammas for server-side exports once the drag settles
    slider1.addEventListener("change", () => void this.pushDisplay());
    slider2.addEventListener("change", () => void this.pushDisplay());
    guidanceButton.addEventListener("click", () => void this.runGuidance(progress));

    void this.populate(modelSelect, pairSelect);
  }

  private async populate(modelSelect: HTMLSelectElement, pairSelect: HTMLSelectElement): Promise<void> {
    const [models, pairs] = await Promise.all([this.client.models(), this.client.pairs()]);
    for (const name of models) {
      modelSelect.append(el("option", { value: name }, name));
    }
    for (const id of pairs) {
      pairSelect.append(el("option", { value: id }, id));
    }
  }

  private async openSession(model: string, pair: string): Promise<void> {
    this.hover?.close();
    const info = await this.client.createSession(model, pair);
    this.state = withSession(this.state, info);
    this.scatterRows = null;
    this.renderer.paintSession(info);
    this.hover = this.client.openHover(info.session);
    this.hover.onMessage((result) => {
      this.state = applyHoverResult(this.state, result);
      this.renderer.paintHover(this.state, result);
      this.paintScatter();
    });
    await this.hover.ready();
    if (this.state.requestedPixel !== null) {
      this.hover.request(this.state.requestedPixel);
    }
  }

  private onPointer(canvas: HTMLCanvasElement, ev: MouseEvent): void {
    const info = this.state.session;
    if (info === null || this.hover === null) {
      return;
    }
    const rect = canvas.getBoundingClientRect();
    const pixel = cursorToPixel(
      {
        left: rect.left,
        top: rect.top,
        width: rect.width,
        height: rect.height,
        imageWidth: info.width,
        imageHeight: info.height,
      },
      ev.clientX,
      ev.clientY,
    );
    if (pixel !== null && pixel !== this.state.requestedPixel) {
      this.state = withRequestedPixel(this.state, pixel);
      this.hover.request(pixel);
    }
  }

  private async pushDisplay(): Promise<void> {
    const info = this.state.session;
    if (info === null) {
      return;
    }
    await this.client.setDisplay(info.session, {
      gamma_corr1: this.state.gamma1,
      gamma_corr2: this.state.gamma2,
    });
  }

  private async runGuidance(progress: HTMLElement): Promise<void> {
    const info = this.state.session;
    if (info === null) {
      return;
    }
    const started = await this.client.startGuidance(info.session);
    let status = started.status;
    while (status === "pending" || status === "running") {
      const job = await this.client.jobStatus(started.job);
      status = job.status;
      progress.textContent = `guidance ${job.status} ${job.progress.done}/${job.progress.total}`;
      await new Promise((resolve) => setTimeout(resolve, 500));
    }
    if (status !== "done") {
      this.surface.setBanner(`guidance job ended: ${status}`);
      return;
    }
    progress.textContent = "guidance done";
    this.state = withGuidance(this.state, await this.client.guidance(info.session));
    this.renderer.paintGuidance(this.state);
    const csv = await fetch(this.client.exportUrl(info.session, "scatter.csv"));
    this.scatterRows = parseScatterCsv(await csv.text());
    this.paintScatter();
  }

  /** Scatter from cached rows; highlight follows the latest hover frame. */
  private paintScatter(): void {
    if (this.scatterRows === null) {
      return;
    }
    const highlighted = new Set(this.state.frame?.highlight ?? []);
    const rows = this.scatterRows.map((row) => ({
      ...row,
      highlighted: highlighted.has(row.pixel),
    }));
    const vm = scatterViewModel(rows);
    const ctx = this.scatterCanvas.getContext("2d");
    if (ctx === null) {
      return;
    }
    const size = this.scatterCanvas.width;
    ctx.fillStyle = "#fff";
    ctx.fillRect(0, 0, size, size);
    const pad = 10;
    const scale = size - 2 * pad;
    for (const point of vm.points) {
      if (point.highlighted) {
        continue;
      }
      ctx.fillStyle = "#777";
      ctx.fillRect(pad + point.sx * scale - 1, pad + (1 - point.sy) * scale - 1, 2, 2);
    }
    for (const point of vm.points) {
      if (!point.highlighted) {
        continue;
      }
      ctx.fillStyle = "#0c0";
      ctx.fillRect(pad + point.sx * scale - 2, pad + (1 - point.sy) * scale - 2, 4, 4);
    }
    ctx.fillStyle = "#000";
    ctx.font = "12px monospace";
    const corr = vm.correlation === null ? "n/a" : vm.correlation.toFixed(3);
    ctx.fillText(`r = ${corr}`, pad, size - 2);
  }
}

/** Mount the UI under a root element and return the app instance. */
export function startApp(baseUrl: string, root: HTMLElement): App {
  return new App(new ServiceClient(baseUrl, browserTransport()), root);
}

if (typeof document !== "undefined") {
  const root = document.getElementById("fuselens-root");
  if (root !== null) {
    const base = root.dataset.service ?? "http://127.0.0.1:8077";
    startApp(base, root);
  }
}
