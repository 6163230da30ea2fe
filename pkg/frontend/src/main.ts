import { ApiClient, ApiError, type ComponentLabel } from "./api.js";
import { initialState, labeledApples, reduce, type UiEvent, type UiState } from "./state.js";
import { FrameViewer } from "./viewer.js";
import { maskArea } from "./rle.js";

const api = new ApiClient("");
let state: UiState = initialState();

const el = (id: string) => document.getElementById(id)!;
const canvas = el("frame") as HTMLCanvasElement;
const viewer = new FrameViewer(canvas);

function dispatch(event: UiEvent): void {
  state = reduce(state, event);
  renderChrome();
}

function fail(err: unknown): void {
  const message = err instanceof ApiError ? err.detail : String(err);
  dispatch({ kind: "requestFailed", message });
}

function renderChrome(): void {
  el("status").textContent =
    state.phase === "idle"
      ? "no session"
      : `${state.dataset} | session ${state.sessionId?.slice(0, 8)} | ${state.phase}`;
  const banner = el("error");
  banner.textContent = state.error ?? "";
  banner.style.display = state.error ? "block" : "none";
  el("labels").textContent = Object.entries(state.labels)
    .map(([c, l]) => `#${c}: ${l}`)
    .join("  ") || "no labeled clusters";
  const pendingBar = el("pending");
  if (state.pending) {
    pendingBar.style.display = "block";
    el("pending-info").textContent =
      `component ${state.pending.componentId}, ${maskArea(state.pending.mask)} px ` +
      `- accept (A) / reject (R)`;
  } else {
    pendingBar.style.display = "none";
  }
  (el("finalize") as HTMLButtonElement).disabled =
    state.phase !== "open" || labeledApples(state) === 0;
  const frameList = el("frames");
  frameList.replaceChildren(
    ...state.frames.map((f) => {
      const b = document.createElement("button");
      b.textContent = f;
      b.className = f === state.activeFrame ? "active" : "";
      b.onclick = () => selectFrame(f);
      return b;
    }),
  );
}

async function openSession(): Promise<void> {
  const dataset = (el("dataset") as HTMLInputElement).value.trim();
  if (!dataset) return;
  try {
    const info = await api.createSession(dataset);
    dispatch({ kind: "sessionOpened", info });
    if (info.frames.length) await selectFrame(info.frames[0]);
  } catch (err) {
    fail(err);
  }
}

async function selectFrame(frame: string): Promise<void> {
  dispatch({ kind: "frameSelected", frame });
  viewer.setOverlay(null);
  await viewer.loadFrame(api.frameUrl(frame));
}

async function onCanvasClick(ev: MouseEvent): Promise<void> {
  if (state.phase !== "open" || !state.sessionId || !state.activeFrame) return;
  const rect = canvas.getBoundingClientRect();
  const pixel = viewer.clickToPixel(ev.clientX - rect.left, ev.clientY - rect.top);
  if (!pixel) return; // outside the frame: no request
  try {
    const resp = await api.click(state.sessionId, state.activeFrame, pixel.x, pixel.y);
    dispatch({
      kind: "clickResolved",
      highlight: {
        componentId: resp.component_id,
        frame: state.activeFrame,
        mask: resp.highlight_mask_rle,
      },
    });
    viewer.setOverlay(resp.highlight_mask_rle);
  } catch (err) {
    fail(err);
  }
}

async function acceptPending(label: ComponentLabel): Promise<void> {
  if (!state.pending || !state.sessionId) return;
  try {
    const resp = await api.label(state.sessionId, state.pending.componentId, label);
    dispatch({ kind: "labelConfirmed", labels: resp.labels });
    viewer.setOverlay(null);
  } catch (err) {
    fail(err);
  }
}

function rejectPending(): void {
  dispatch({ kind: "highlightRejected" });
  viewer.setOverlay(null);
}

async function finalize(): Promise<void> {
  if (!state.sessionId) return;
  dispatch({ kind: "finalizeRequested" });
  try {
    const resp = await api.finalize(state.sessionId);
    dispatch({ kind: "finalizeSucceeded", modelId: resp.model_id });
    await preview(resp.model_id);
  } catch (err) {
    fail(err); // e.g. 422 when no apple cluster is labeled
  }
}

async function preview(modelId: string): Promise<void> {
  if (!state.activeFrame) return;
  try {
    const resp = await api.detect(modelId, state.activeFrame);
    const union = resp.detections[0]?.mask_rle ?? null;
    viewer.setOverlay(union);
    el("status").textContent = `model ${modelId.slice(0, 8)}: ` +
      `${resp.detections.length} detections on ${state.activeFrame}`;
  } catch (err) {
    fail(err);
  }
}

el("open").onclick = () => void openSession();
el("finalize").onclick = () => void finalize();
el("accept-apple").onclick = () => void acceptPending("apple");
el("accept-background").onclick = () => void acceptPending("background");
el("accept-ground").onclick = () => void acceptPending("ground");
el("reject").onclick = rejectPending;
el("dismiss").onclick = () => dispatch({ kind: "errorDismissed" });
canvas.addEventListener("click", (ev) => void onCanvasClick(ev));
canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  const rect = canvas.getBoundingClientRect();
  viewer.zoom(ev.clientX - rect.left, ev.clientY - rect.top, ev.deltaY < 0 ? 1.25 : 0.8);
});
let dragging = false;
canvas.addEventListener("mousedown", (ev) => {
  if (ev.button === 1 || ev.shiftKey) dragging = true;
});
window.addEventListener("mouseup", () => (dragging = false));
canvas.addEventListener("mousemove", (ev) => {
  if (dragging) viewer.pan(ev.movementX, ev.movementY);
});
window.addEventListener("keydown", (ev) => {
  if (ev.key === "a" || ev.key === "A") void acceptPending("apple");
  if (ev.key === "r" || ev.key === "R") rejectPending();
});

renderChrome();
