/**
 * DOM wiring: one session view bound to one websocket connection.
 *
 * Flow is one-directional. UI events go through `interact` to become
 * protocol messages; server messages go through `applyServer` into the
 * view; every change triggers a full redraw and panel sync from the view.
 */
import { connect, type SessionClient } from "./client.js";
import { PINNABLE_TILES, TILE_CHARS, type ServerMessage } from "./protocol.js";
import { TILE_COLORS, render } from "./render.js";
import {
  applyServer,
  initialView,
  interact,
  setConnection,
  setPalette,
  togglePathOverlay,
  withPending,
  type UiEvent,
  type ViewState,
} from "./state.js";

const CELL = 28;

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
}

const canvas = byId<HTMLCanvasElement>("level");
const ctx = canvas.getContext("2d");
if (ctx === null) throw new Error("canvas 2d context unavailable");

const paletteBox = byId<HTMLDivElement>("palette");
const targetsBox = byId<HTMLDivElement>("targets");
const metricsBox = byId<HTMLDivElement>("metrics");
const statusBox = byId<HTMLDivElement>("status");
const errorBox = byId<HTMLDivElement>("error");
const connBadge = byId<HTMLSpanElement>("connection");
const pathToggle = byId<HTMLInputElement>("path-toggle");
const legendBox = byId<HTMLDivElement>("legend");

const stepBtn = byId<HTMLButtonElement>("btn-step");
const runBtn = byId<HTMLButtonElement>("btn-run");
const pauseBtn = byId<HTMLButtonElement>("btn-pause");
const resetBtn = byId<HTMLButtonElement>("btn-reset");
const widthInput = byId<HTMLInputElement>("reset-width");
const heightInput = byId<HTMLInputElement>("reset-height");
const seedInput = byId<HTMLInputElement>("reset-seed");
const rateInput = byId<HTMLInputElement>("run-rate");

let view: ViewState = initialView();
let client: SessionClient;
let paletteDomain: string | null = null;
let sliderMetrics: string[] = [];

function wsUrl(): string {
  const override = new URLSearchParams(location.search).get("ws");
  if (override !== null) return override;
  const host = location.hostname !== "" ? location.hostname : "127.0.0.1";
  return `ws://${host}:8765`;
}

function update(next: ViewState): void {
  view = next;
  syncPanels();
  render(ctx!, view, CELL);
}

function dispatch(ev: UiEvent): void {
  const ia = interact(view, ev);
  if (ia === null) return;
  client.send(ia.message);
  update(withPending(view, ia.pending));
}

// -- panel sync ---------------------------------------------------------------

function fmt(x: number): string {
  return Number.isInteger(x) ? String(x) : x.toFixed(3);
}

function buildPalette(domain: string): void {
  paletteBox.replaceChildren();
  const tiles = PINNABLE_TILES[domain] ?? [];
  for (const tile of [...tiles, null]) {
    const btn = document.createElement("button");
    btn.className = "tile-btn";
    if (tile === null) {
      btn.textContent = "erase";
      btn.dataset.tile = "";
    } else {
      const ch = TILE_CHARS[tile];
      btn.textContent = `${ch} ${tile}`;
      btn.dataset.tile = tile;
      btn.style.borderLeft = `10px solid ${TILE_COLORS[ch] ?? "#888"}`;
    }
    btn.addEventListener("click", () => {
      update(setPalette(view, tile));
    });
    paletteBox.appendChild(btn);
  }
  if (tiles.length === 0) {
    const note = document.createElement("span");
    note.className = "muted";
    note.textContent = "no pinnable tiles in this domain";
    paletteBox.appendChild(note);
  }
}

function buildSliders(): void {
  const st = view.state;
  targetsBox.replaceChildren();
  if (st === null) return;
  const cap = st.shape.width * st.shape.height;
  sliderMetrics = Object.keys(st.targets);
  for (const metric of sliderMetrics) {
    const [lo, hi] = st.targets[metric];
    const row = document.createElement("div");
    row.className = "target-row";
    const label = document.createElement("label");
    label.textContent = `${metric} [${lo}..${hi}]`;
    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = "0";
    slider.max = String(cap);
    slider.step = "1";
    slider.value = String(Math.round((lo + hi) / 2));
    slider.dataset.metric = metric;
    slider.addEventListener("change", () => {
      dispatch({ kind: "slider_commit", metric, value: Number(slider.value) });
    });
    row.append(label, slider);
    targetsBox.appendChild(row);
  }
}

function syncSliderLabels(): void {
  const st = view.state;
  if (st === null) return;
  if (Object.keys(st.targets).join(",") !== sliderMetrics.join(",")) {
    buildSliders();
    return;
  }
  for (const row of targetsBox.querySelectorAll<HTMLDivElement>(".target-row")) {
    const slider = row.querySelector<HTMLInputElement>("input")!;
    const label = row.querySelector<HTMLLabelElement>("label")!;
    const metric = slider.dataset.metric!;
    const [lo, hi] = st.targets[metric];
    label.textContent = `${metric} [${lo}..${hi}]`;
    slider.disabled = st.running;
  }
}

function syncMetrics(): void {
  metricsBox.replaceChildren();
  const st = view.state;
  if (st === null) return;
  const terms = view.metrics?.terms ?? {};
  const unreachable = new Set(st.unreachable ?? []);
  for (const [name, value] of Object.entries(st.metrics)) {
    const row = document.createElement("div");
    row.className = "metric-row";
    const flag = unreachable.has(name) ? " (unreachable)" : "";
    const term = name in terms ? ` · term ${fmt(terms[name])}` : "";
    row.textContent = `${name}: ${value}${flag}${term}`;
    metricsBox.appendChild(row);
  }
  const loss = document.createElement("div");
  loss.className = "metric-row loss";
  loss.textContent = `loss: ${fmt(st.loss)}`;
  metricsBox.appendChild(loss);
}

function syncStatus(): void {
  const st = view.state;
  if (st === null) {
    statusBox.textContent = "waiting for first state…";
    return;
  }
  const parts = [
    `${st.domain} ${st.shape.width}×${st.shape.height}`,
    st.max_steps !== undefined ? `step ${st.t}/${st.max_steps}` : `step ${st.t}`,
    st.changes !== undefined ? `changes ${st.changes}` : "",
    st.ep_reward !== undefined ? `episode reward ${fmt(st.ep_reward)}` : "",
    st.last_reward !== undefined ? `last reward ${fmt(st.last_reward)}` : "",
    st.done ? "episode done (reset to continue)" : "",
    st.running ? "running" : "paused",
  ].filter((p) => p !== "");
  statusBox.textContent = parts.join(" · ");
}

function syncButtons(): void {
  const st = view.state;
  const editable = st !== null && !st.running;
  stepBtn.disabled = !editable || (st !== null && st.done);
  runBtn.disabled = !editable || (st !== null && st.done);
  pauseBtn.disabled = st === null || !st.running;
  resetBtn.disabled = st === null && view.connection !== "open";
  for (const btn of paletteBox.querySelectorAll<HTMLButtonElement>("button")) {
    btn.disabled = !editable;
    const tile = btn.dataset.tile === "" ? null : btn.dataset.tile;
    btn.classList.toggle("selected", tile === view.palette);
  }
  for (const slider of targetsBox.querySelectorAll<HTMLInputElement>("input")) {
    slider.disabled = !editable;
  }
}

function syncPanels(): void {
  connBadge.textContent = view.connection;
  connBadge.className = `badge ${view.connection}`;
  const st = view.state;
  if (st !== null) {
    if (canvas.width !== st.shape.width * CELL || canvas.height !== st.shape.height * CELL) {
      canvas.width = st.shape.width * CELL;
      canvas.height = st.shape.height * CELL;
    }
    if (st.domain !== paletteDomain) {
      paletteDomain = st.domain;
      buildPalette(st.domain);
      buildSliders();
    }
    syncSliderLabels();
  }
  syncMetrics();
  syncStatus();
  syncButtons();
  if (view.lastError !== null) {
    errorBox.textContent = `${view.lastError.code}: ${view.lastError.message}`;
    errorBox.hidden = false;
  } else if (view.connection === "closed") {
    errorBox.textContent = "connection closed; reload to reconnect";
    errorBox.hidden = false;
  } else {
    errorBox.hidden = true;
  }
}

function buildLegend(): void {
  legendBox.replaceChildren();
  for (const [tile, ch] of Object.entries(TILE_CHARS)) {
    const item = document.createElement("span");
    item.className = "legend-item";
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.background = TILE_COLORS[ch] ?? "#888";
    item.append(swatch, ` ${ch} ${tile}`);
    legendBox.appendChild(item);
  }
}

// -- event handlers -----------------------------------------------------------

canvas.addEventListener("click", (ev: MouseEvent) => {
  const st = view.state;
  if (st === null) return;
  const rect = canvas.getBoundingClientRect();
  const col = Math.floor((ev.clientX - rect.left) / CELL);
  const row = Math.floor((ev.clientY - rect.top) / CELL);
  if (row < 0 || row >= st.shape.height || col < 0 || col >= st.shape.width) return;
  dispatch({ kind: "cell_click", row, col });
});

stepBtn.addEventListener("click", () => dispatch({ kind: "toolbar", action: "step" }));
pauseBtn.addEventListener("click", () => dispatch({ kind: "toolbar", action: "pause" }));
runBtn.addEventListener("click", () => {
  const rate = rateInput.value === "" ? undefined : Number(rateInput.value);
  dispatch({ kind: "toolbar", action: "run", rate });
});
resetBtn.addEventListener("click", () => {
  const w = widthInput.value === "" ? undefined : Number(widthInput.value);
  const h = heightInput.value === "" ? undefined : Number(heightInput.value);
  const seed = seedInput.value === "" ? undefined : Number(seedInput.value);
  const shape = w !== undefined && h !== undefined ? { width: w, height: h } : undefined;
  dispatch({ kind: "toolbar", action: "reset", shape, seed });
});
pathToggle.addEventListener("change", () => update(togglePathOverlay(view)));

// -- boot ---------------------------------------------------------------------

buildLegend();
syncPanels();

client = connect(wsUrl(), {
  onOpen: () => update(setConnection(view, "open")),
  onClose: () => update(setConnection(view, "closed")),
  onMessage: (msg: ServerMessage) => update(applyServer(view, msg)),
});
