/**
 * View state and the message reducer.
 *
 * The UI never fabricates level state: it renders the latest server-confirmed
 * `state` message and nothing else. A revision watermark drops stale or
 * reordered messages, and optimistic edits live in a separate pending list
 * that is drawn as overlays until the server acknowledges (any message that
 * advances the watermark) or rejects (an error) them.
 */
import type {
  ClientMessage,
  ErrorMessage,
  MetricsMessage,
  ServerMessage,
  Shape,
  StateMessage,
} from "./protocol.js";
import { clearPinpoint, pause, reset, run, setPinpoint, setTarget, step } from "./protocol.js";

export type Connection = "connecting" | "open" | "closed";

export type PendingEdit =
  | { kind: "set_pinpoint"; row: number; col: number; tile: string; sentAt: number }
  | { kind: "clear_pinpoint"; row: number; col: number; sentAt: number }
  | { kind: "set_target"; metric: string; value: number; sentAt: number };

export interface ViewState {
  connection: Connection;
  /** Latest server-confirmed full state; the only source of rendered tiles. */
  state: StateMessage | null;
  /** Latest metrics refresh (terms panel); never newer than the watermark. */
  metrics: MetricsMessage | null;
  /** Revision watermark: highest revision rendered so far. */
  revision: number;
  /** Tile palette selection; null means the eraser (clear pinpoint). */
  palette: string | null;
  pending: PendingEdit[];
  pathOverlay: boolean;
  lastError: ErrorMessage | null;
}

export function initialView(): ViewState {
  return {
    connection: "connecting",
    state: null,
    metrics: null,
    revision: 0,
    palette: null,
    pending: [],
    pathOverlay: false,
    lastError: null,
  };
}

/** Fold one server message into the view. Stale revisions are ignored. */
export function applyServer(view: ViewState, msg: ServerMessage): ViewState {
  if (msg.type === "error") {
    // rejected edit: drop optimistic overlays, keep confirmed state
    return { ...view, pending: [], lastError: msg };
  }
  if (msg.revision <= view.revision) {
    return view; // stale or duplicate: watermark wins
  }
  const pending = view.pending.filter((e) => e.sentAt >= msg.revision);
  if (msg.type === "state") {
    return { ...view, state: msg, revision: msg.revision, pending, lastError: null };
  }
  return { ...view, metrics: msg, revision: msg.revision, pending, lastError: null };
}

export function setConnection(view: ViewState, connection: Connection): ViewState {
  return { ...view, connection };
}

export function setPalette(view: ViewState, palette: string | null): ViewState {
  return { ...view, palette };
}

export function togglePathOverlay(view: ViewState): ViewState {
  return { ...view, pathOverlay: !view.pathOverlay };
}

// -- interaction mapping ------------------------------------------------------

export type UiEvent =
  | { kind: "cell_click"; row: number; col: number }
  | { kind: "slider_commit"; metric: string; value: number }
  | { kind: "toolbar"; action: "step" }
  | { kind: "toolbar"; action: "run"; rate?: number }
  | { kind: "toolbar"; action: "pause" }
  | { kind: "toolbar"; action: "reset"; shape?: Shape; seed?: number };

export interface Interaction {
  message: ClientMessage;
  pending?: PendingEdit;
}

function editsDisabled(view: ViewState): boolean {
  return view.state === null || view.state.running;
}

/**
 * Map a UI event to a protocol message, or null when the event is disabled
 * (edits while the agent runs, or before the first state arrives).
 */
export function interact(view: ViewState, ev: UiEvent): Interaction | null {
  switch (ev.kind) {
    case "cell_click": {
      if (editsDisabled(view)) return null;
      if (view.palette === null) {
        return {
          message: clearPinpoint(ev.row, ev.col),
          pending: { kind: "clear_pinpoint", row: ev.row, col: ev.col, sentAt: view.revision },
        };
      }
      return {
        message: setPinpoint(ev.row, ev.col, view.palette),
        pending: {
          kind: "set_pinpoint",
          row: ev.row,
          col: ev.col,
          tile: view.palette,
          sentAt: view.revision,
        },
      };
    }
    case "slider_commit": {
      if (editsDisabled(view)) return null;
      return {
        message: setTarget(ev.metric, ev.value),
        pending: {
          kind: "set_target",
          metric: ev.metric,
          value: ev.value,
          sentAt: view.revision,
        },
      };
    }
    case "toolbar": {
      switch (ev.action) {
        case "step":
          if (editsDisabled(view)) return null;
          return { message: step() };
        case "run":
          if (view.state === null || view.state.running) return null;
          return { message: run(ev.rate) };
        case "pause":
          if (view.state === null || !view.state.running) return null;
          return { message: pause() };
        case "reset":
          return { message: reset({ shape: ev.shape, seed: ev.seed }) };
      }
    }
  }
}

/** Record an optimistic edit after its message was actually sent. */
export function withPending(view: ViewState, edit: PendingEdit | undefined): ViewState {
  return edit === undefined ? view : { ...view, pending: [...view.pending, edit] };
}
