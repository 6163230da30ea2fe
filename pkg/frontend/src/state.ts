import type { ComponentLabel, SessionInfo } from "./api.js";
import type { RleMask } from "./rle.js";

export type Highlight = {
  componentId: number;
  frame: string;
  mask: RleMask;
};

export type UiState = {
  phase: "idle" | "open" | "finalizing" | "finalized";
  sessionId: string | null;
  dataset: string | null;
  frames: string[];
  activeFrame: string | null;
  // component awaiting accept/reject; at most one in flight
  pending: Highlight | null;
  labels: Record<string, ComponentLabel>;
  modelId: string | null;
  error: string | null;
};

export type UiEvent =
  | { kind: "sessionOpened"; info: SessionInfo }
  | { kind: "frameSelected"; frame: string }
  | { kind: "clickResolved"; highlight: Highlight }
  | { kind: "highlightRejected" }
  | { kind: "labelConfirmed"; labels: Record<string, ComponentLabel> }
  | { kind: "finalizeRequested" }
  | { kind: "finalizeSucceeded"; modelId: string }
  | { kind: "requestFailed"; message: string }
  | { kind: "errorDismissed" };

export function initialState(): UiState {
  return {
    phase: "idle",
    sessionId: null,
    dataset: null,
    frames: [],
    activeFrame: null,
    pending: null,
    labels: {},
    modelId: null,
    error: null,
  };
}

/** Pure reducer: UI state is a function of server responses plus the
 * in-flight interaction, so a replayed event log restores the view. */
export function reduce(state: UiState, event: UiEvent): UiState {
  switch (event.kind) {
    case "sessionOpened":
      return {
        ...initialState(),
        phase: "open",
        sessionId: event.info.session_id,
        dataset: event.info.dataset,
        frames: event.info.frames,
        activeFrame: event.info.frames[0] ?? null,
      };
    case "frameSelected":
      if (!state.frames.includes(event.frame)) return state;
      return { ...state, activeFrame: event.frame, pending: null };
    case "clickResolved":
      if (state.phase !== "open") return state;
      return { ...state, pending: event.highlight, error: null };
    case "highlightRejected":
      return { ...state, pending: null };
    case "labelConfirmed":
      return { ...state, labels: event.labels, pending: null, error: null };
    case "finalizeRequested":
      if (state.phase !== "open") return state;
      return { ...state, phase: "finalizing", error: null };
    case "finalizeSucceeded":
      return { ...state, phase: "finalized", modelId: event.modelId, pending: null };
    case "requestFailed":
      // roll the optimistic transition back and surface the error inline
      return {
        ...state,
        phase: state.phase === "finalizing" ? "open" : state.phase,
        error: event.message,
      };
    case "errorDismissed":
      return { ...state, error: null };
  }
}

export function labeledApples(state: UiState): number {
  return Object.values(state.labels).filter((l) => l === "apple").length;
}
