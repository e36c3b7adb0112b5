/**
 * Message types for session protocol v1, mirroring
 * `src/levelgen/protocol_v1.schema.json` in the backend package. The schema
 * is the source of truth; the test suite validates every builder against it.
 */

export interface Shape {
  width: number;
  height: number;
}

/** Environment settings accepted by `reset.config`. */
export interface ResetConfig {
  domain?: "binary" | "maze" | "dungeon";
  pinpoints?: string[];
  controllable?: string[];
  init_mode?: "weighted" | "empty";
  max_steps?: number;
  change_budget?: number;
}

export interface ResetMessage {
  type: "reset";
  shape?: Shape;
  seed?: number;
  sample?: boolean;
  config?: ResetConfig;
}

export interface SetPinpointMessage {
  type: "set_pinpoint";
  row: number;
  col: number;
  tile: string;
}

export interface ClearPinpointMessage {
  type: "clear_pinpoint";
  row: number;
  col: number;
}

export interface SetTargetMessage {
  type: "set_target";
  metric: string;
  value: number;
}

export interface StepMessage {
  type: "step";
}

export interface RunMessage {
  type: "run";
  rate?: number;
}

export interface PauseMessage {
  type: "pause";
}

export type ClientMessage =
  | ResetMessage
  | SetPinpointMessage
  | ClearPinpointMessage
  | SetTargetMessage
  | StepMessage
  | RunMessage
  | PauseMessage;

export interface StateMessage {
  type: "state";
  revision: number;
  domain: string;
  shape: Shape;
  /** Level text format: tile rows, then optionally a `!`-prefixed frozen-mask block. */
  grid: string;
  /** One string per row, `*` frozen / `.` free. */
  frozen: string[];
  pos: [number, number];
  t: number;
  max_steps?: number;
  changes?: number;
  metrics: Record<string, number>;
  unreachable?: string[];
  loss: number;
  targets: Record<string, [number, number]>;
  running: boolean;
  done: boolean;
  ep_reward?: number;
  last_reward?: number;
}

export interface MetricsMessage {
  type: "metrics";
  revision: number;
  metrics: Record<string, number>;
  unreachable?: string[];
  loss: number;
  targets: Record<string, [number, number]>;
  /** Per-metric loss contribution; terms sum to loss. */
  terms: Record<string, number>;
}

export type ErrorCode =
  | "schema"
  | "not_paused"
  | "illegal_pinpoint"
  | "illegal_target"
  | "bad_config"
  | "runtime";

export interface ErrorMessage {
  type: "error";
  code: ErrorCode;
  message: string;
}

export type ServerMessage = StateMessage | MetricsMessage | ErrorMessage;

// -- builders ---------------------------------------------------------------

export function reset(opts: Omit<ResetMessage, "type"> = {}): ResetMessage {
  return { type: "reset", ...opts };
}

export function setPinpoint(row: number, col: number, tile: string): SetPinpointMessage {
  return { type: "set_pinpoint", row, col, tile };
}

export function clearPinpoint(row: number, col: number): ClearPinpointMessage {
  return { type: "clear_pinpoint", row, col };
}

export function setTarget(metric: string, value: number): SetTargetMessage {
  return { type: "set_target", metric, value };
}

export function step(): StepMessage {
  return { type: "step" };
}

export function run(rate?: number): RunMessage {
  return rate === undefined ? { type: "run" } : { type: "run", rate };
}

export function pause(): PauseMessage {
  return { type: "pause" };
}

// -- tile legend ------------------------------------------------------------

/** One character per tile, identical to the backend text format. */
export const TILE_CHARS: Record<string, string> = {
  air: ".",
  wall: "#",
  player: "P",
  door: "D",
  key: "K",
  enemy: "E",
  border: "%",
};

/** Tiles a designer may pin, per domain. */
export const PINNABLE_TILES: Record<string, string[]> = {
  binary: [],
  maze: ["player", "door"],
  dungeon: ["player", "key", "door"],
};

export function tileForChar(ch: string): string | undefined {
  for (const [tile, c] of Object.entries(TILE_CHARS)) {
    if (c === ch) return tile;
  }
  return undefined;
}
