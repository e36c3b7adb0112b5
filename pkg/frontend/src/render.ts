/**
 * Canvas rendering of the latest server state.
 *
 * Everything drawn comes from the server's `state` message; the only
 * client-side additions are overlays (pending edits, the path highlight)
 * that are visually distinct from confirmed tiles. The path overlay is a
 * display aid computed from the rendered text, not a metric readout.
 */
import { TILE_CHARS } from "./protocol.js";
import type { PendingEdit, ViewState } from "./state.js";

/** Fill color per tile character; covers every entry of TILE_CHARS. */
export const TILE_COLORS: Record<string, string> = {
  ".": "#f2ede1", // air
  "#": "#55504a", // wall
  P: "#3178c6", // player
  D: "#c2571f", // door
  K: "#d9a514", // key
  E: "#b03a3a", // enemy
  "%": "#22262d", // outside the active map
};

const UNKNOWN_COLOR = "#ff00ff";
const GRID_LINE = "rgba(0, 0, 0, 0.15)";
const FROZEN_MARK = "rgba(20, 20, 20, 0.85)";
const AGENT_RING = "#10b981";
const PATH_FILL = "rgba(49, 198, 107, 0.4)";
const PENDING_SET = "rgba(49, 120, 198, 0.65)";
const PENDING_CLEAR = "rgba(178, 60, 60, 0.8)";

const MASK_PREFIX = "!";

export interface ParsedGrid {
  /** Tile rows, one string per row, one character per cell. */
  tiles: string[];
  /** Frozen mask rows (`*` frozen, `.` free), or null when omitted. */
  mask: string[] | null;
}

/** Split the level text format into tile rows and the optional mask block. */
export function parseGrid(text: string): ParsedGrid {
  const lines = text.split("\n").filter((ln) => ln.length > 0);
  const tiles = lines.filter((ln) => !ln.startsWith(MASK_PREFIX));
  const mask = lines.filter((ln) => ln.startsWith(MASK_PREFIX)).map((ln) => ln.slice(1));
  return { tiles, mask: mask.length > 0 ? mask : null };
}

const BLOCKING = new Set(["#", "%", "E"]);

/**
 * Shortest player-to-door route through walkable tiles, or null when either
 * endpoint is missing or no route exists. Breadth-first over 4-neighbors;
 * walls, the outside border, and enemies block.
 */
export function shortestPath(tiles: string[]): Array<[number, number]> | null {
  const h = tiles.length;
  if (h === 0) return null;
  const w = tiles[0].length;
  let start: [number, number] | null = null;
  outer: for (let r = 0; r < h; r++) {
    for (let c = 0; c < w; c++) {
      if (tiles[r][c] === TILE_CHARS.player) {
        start = [r, c];
        break outer;
      }
    }
  }
  if (start === null) return null;

  const parent = new Map<number, number>();
  const key = (r: number, c: number) => r * w + c;
  const queue: Array<[number, number]> = [start];
  parent.set(key(start[0], start[1]), -1);
  let goal: [number, number] | null = null;
  while (queue.length > 0 && goal === null) {
    const [r, c] = queue.shift()!;
    for (const [dr, dc] of [[-1, 0], [1, 0], [0, -1], [0, 1]] as const) {
      const nr = r + dr;
      const nc = c + dc;
      if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
      const k = key(nr, nc);
      if (parent.has(k)) continue;
      const ch = tiles[nr][nc];
      if (BLOCKING.has(ch)) continue;
      parent.set(k, key(r, c));
      if (ch === TILE_CHARS.door) {
        goal = [nr, nc];
        break;
      }
      queue.push([nr, nc]);
    }
  }
  if (goal === null) return null;

  const path: Array<[number, number]> = [];
  let k = key(goal[0], goal[1]);
  while (k !== -1) {
    path.push([Math.floor(k / w), k % w]);
    k = parent.get(k)!;
  }
  path.reverse();
  return path;
}

// -- drawing ------------------------------------------------------------------

function drawFrozenMark(ctx: CanvasRenderingContext2D, x: number, y: number, s: number): void {
  const m = Math.max(2, Math.floor(s * 0.22));
  ctx.fillStyle = FROZEN_MARK;
  ctx.beginPath();
  ctx.moveTo(x + s - 2, y + 2);
  ctx.lineTo(x + s - 2 - m, y + 2);
  ctx.lineTo(x + s - 2, y + 2 + m);
  ctx.closePath();
  ctx.fill();
}

function drawPending(
  ctx: CanvasRenderingContext2D,
  edit: PendingEdit,
  cell: number,
): void {
  if (edit.kind === "set_target") return;
  const x = edit.col * cell;
  const y = edit.row * cell;
  ctx.lineWidth = 2;
  if (edit.kind === "set_pinpoint") {
    ctx.strokeStyle = PENDING_SET;
    ctx.strokeRect(x + 2, y + 2, cell - 4, cell - 4);
    const ch = TILE_CHARS[edit.tile];
    if (ch !== undefined) {
      ctx.fillStyle = PENDING_SET;
      ctx.font = `${Math.floor(cell * 0.6)}px monospace`;
      ctx.textAlign = "center";
      ctx.textBaseline = "middle";
      ctx.fillText(ch, x + cell / 2, y + cell / 2);
    }
  } else {
    ctx.strokeStyle = PENDING_CLEAR;
    ctx.beginPath();
    ctx.moveTo(x + 4, y + 4);
    ctx.lineTo(x + cell - 4, y + cell - 4);
    ctx.moveTo(x + cell - 4, y + 4);
    ctx.lineTo(x + 4, y + cell - 4);
    ctx.stroke();
  }
}

/** Paint the whole view onto a 2D canvas context at `cell` pixels per tile. */
export function render(ctx: CanvasRenderingContext2D, view: ViewState, cell: number): void {
  const st = view.state;
  if (st === null) return;
  const { tiles } = parseGrid(st.grid);
  const h = tiles.length;
  const w = h > 0 ? tiles[0].length : 0;

  for (let r = 0; r < h; r++) {
    for (let c = 0; c < w; c++) {
      ctx.fillStyle = TILE_COLORS[tiles[r][c]] ?? UNKNOWN_COLOR;
      ctx.fillRect(c * cell, r * cell, cell, cell);
    }
  }

  ctx.strokeStyle = GRID_LINE;
  ctx.lineWidth = 1;
  for (let r = 0; r <= h; r++) {
    ctx.beginPath();
    ctx.moveTo(0, r * cell + 0.5);
    ctx.lineTo(w * cell, r * cell + 0.5);
    ctx.stroke();
  }
  for (let c = 0; c <= w; c++) {
    ctx.beginPath();
    ctx.moveTo(c * cell + 0.5, 0);
    ctx.lineTo(c * cell + 0.5, h * cell);
    ctx.stroke();
  }

  for (let r = 0; r < h && r < st.frozen.length; r++) {
    for (let c = 0; c < w && c < st.frozen[r].length; c++) {
      if (st.frozen[r][c] === "*" && tiles[r][c] !== TILE_CHARS.border) {
        drawFrozenMark(ctx, c * cell, r * cell, cell);
      }
    }
  }

  if (view.pathOverlay) {
    const path = shortestPath(tiles);
    if (path !== null) {
      ctx.fillStyle = PATH_FILL;
      for (const [r, c] of path) {
        ctx.fillRect(c * cell + 3, r * cell + 3, cell - 6, cell - 6);
      }
    }
  }

  const [ar, ac] = st.pos;
  ctx.strokeStyle = AGENT_RING;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(ac * cell + cell / 2, ar * cell + cell / 2, cell * 0.38, 0, Math.PI * 2);
  ctx.stroke();

  for (const edit of view.pending) {
    drawPending(ctx, edit, cell);
  }
}
