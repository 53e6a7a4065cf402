import { ApiClient } from "./api";
import { FeedbackWidget } from "./feedback";
import { renderTurn } from "./render";
import { ChatStore } from "./state";
import { ZOOM_LEVELS, type Zoom } from "./types";

export interface App {
  store: ChatStore;
  widgets: FeedbackWidget[];
  root: HTMLElement;
}

function zoomStep(current: Zoom, delta: 1 | -1): Zoom {
  const i = ZOOM_LEVELS.indexOf(current);
  const next = Math.min(ZOOM_LEVELS.length - 1, Math.max(0, i + delta));
  return ZOOM_LEVELS[next];
}

/** Builds the single-page chat UI inside `root`. Exported for tests. */
export function createApp(doc: Document, root: HTMLElement, api: ApiClient): App {
  const store = new ChatStore(api);
  const widgets: FeedbackWidget[] = [];

  const history = doc.createElement("div");
  history.className = "history";
  const form = doc.createElement("form");
  form.className = "ask-form";
  const input = doc.createElement("input");
  input.className = "question-input";
  input.placeholder = "Ask the publication…";
  const askButton = doc.createElement("button");
  askButton.className = "ask-button";
  askButton.type = "submit";
  askButton.textContent = "ask";
  const zoomSelect = doc.createElement("select");
  zoomSelect.className = "zoom-select";
  for (const z of ZOOM_LEVELS) {
    const opt = doc.createElement("option");
    opt.value = z;
    opt.textContent = z;
    opt.selected = z === store.zoom;
    zoomSelect.appendChild(opt);
  }
  const zoomIn = doc.createElement("button");
  zoomIn.type = "button";
  zoomIn.className = "zoom-in";
  zoomIn.textContent = "zoom in";
  const zoomOut = doc.createElement("button");
  zoomOut.type = "button";
  zoomOut.className = "zoom-out";
  zoomOut.textContent = "zoom out";

  form.append(input, askButton, zoomSelect, zoomIn, zoomOut);
  root.append(history, form);

  const controls: (HTMLButtonElement | HTMLInputElement | HTMLSelectElement)[] = [
    input,
    askButton,
    zoomSelect,
    zoomIn,
    zoomOut,
  ];

  const sync = () => {
    for (const c of controls) c.disabled = store.pending;
    zoomSelect.value = store.zoom;
  };
  store.onChange(sync);

  const appendTurns = () => {
    history.replaceChildren();
    widgets.length = 0;
    for (const turn of store.turns) {
      const node = renderTurn(doc, turn, api);
      if (turn.role === "engine" && turn.query_id && !turn.refused) {
        const widget = new FeedbackWidget(doc, api, turn.query_id);
        widgets.push(widget);
        node.appendChild(widget.root);
      }
      history.appendChild(node);
    }
  };

  const run = async (go: () => Promise<unknown>) => {
    await go();
    appendTurns();
  };

  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const q = input.value;
    input.value = "";
    void run(() => store.ask(q));
  });
  zoomSelect.addEventListener("change", () => store.setZoom(zoomSelect.value as Zoom));
  zoomIn.addEventListener("click", () => void run(() => store.reask(zoomStep(store.zoom, 1))));
  zoomOut.addEventListener("click", () => void run(() => store.reask(zoomStep(store.zoom, -1))));

  doc.defaultView?.addEventListener("online", () => {
    for (const w of widgets) void w.retryQueued();
  });

  sync();
  return { store, widgets, root };
}
