import type { ApiClient } from "./api";
import type { ChatTurn, DataPoints } from "./types";

const MARKER_RE = /\[([^\]\s]+#v(\d+)#c\d+)\]/g;

export interface ChunkRef {
  chunkId: string;
  pubId: string;
  version: number;
}

export function parseChunkId(chunkId: string): ChunkRef {
  const m = /^(.*)#v(\d+)#c\d+$/.exec(chunkId);
  if (!m) return { chunkId, pubId: chunkId, version: 1 };
  return { chunkId, pubId: m[1], version: Number(m[2]) };
}

/** Tooltip copy for one citation, fetched from the publication endpoint. */
export async function citationDetails(api: ApiClient, ref: ChunkRef): Promise<string> {
  try {
    const pub = await api.publication(ref.pubId, ref.version);
    const chunk = pub.chunks.find((c) => c.chunk_id === ref.chunkId);
    const authors = pub.authors.map((a) => a.name).join(", ") || "unknown authors";
    const lines = [pub.title, authors, pub.date];
    if (chunk) lines.push(chunk.text);
    return lines.join("\n");
  } catch {
    return "details unavailable";
  }
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/**
 * Answer text with [chunk_id] markers replaced by numbered superscript
 * elements. Hover or click loads the tooltip from the publication endpoint.
 */
export function renderAnswerText(doc: Document, turn: ChatTurn, api: ApiClient): HTMLElement {
  const container = el(doc, "div", "answer-text");
  const seen = new Map<string, number>();
  let last = 0;
  const text = turn.text;
  for (const m of text.matchAll(MARKER_RE)) {
    container.appendChild(doc.createTextNode(text.slice(last, m.index)));
    last = (m.index ?? 0) + m[0].length;
    const chunkId = m[1];
    if (!seen.has(chunkId)) seen.set(chunkId, seen.size + 1);
    const sup = el(doc, "sup", "citation-marker", String(seen.get(chunkId)));
    sup.dataset.chunkId = chunkId;
    sup.setAttribute("role", "button");
    sup.tabIndex = 0;
    const tooltip = el(doc, "span", "citation-tooltip hidden");
    sup.appendChild(tooltip);
    let loaded = false;
    const show = async () => {
      tooltip.classList.remove("hidden");
      if (loaded) return;
      loaded = true;
      tooltip.textContent = "loading…";
      tooltip.textContent = await citationDetails(api, parseChunkId(chunkId));
    };
    sup.addEventListener("click", show);
    sup.addEventListener("mouseenter", show);
    sup.addEventListener("mouseleave", () => tooltip.classList.add("hidden"));
    container.appendChild(sup);
  }
  container.appendChild(doc.createTextNode(text.slice(last)));
  return container;
}

/** Sortable table for the data zoom's effects; clicking a header sorts by that column. */
export function renderDataPoints(doc: Document, data: DataPoints): HTMLElement {
  const wrap = el(doc, "div", "data-points");
  const table = el(doc, "table", "effects-table");
  const head = el(doc, "tr");
  const body = el(doc, "tbody");
  let rows = [...data.effects.rows];
  let sortCol = -1;
  let ascending = true;

  const fill = () => {
    body.replaceChildren();
    for (const row of rows) {
      const tr = el(doc, "tr");
      for (const cell of row) tr.appendChild(el(doc, "td", undefined, String(cell)));
      body.appendChild(tr);
    }
  };

  data.effects.columns.forEach((name, i) => {
    const th = el(doc, "th", "sortable", name);
    th.addEventListener("click", () => {
      ascending = sortCol === i ? !ascending : true;
      sortCol = i;
      rows = [...rows].sort((a, b) => {
        const [x, y] = [a[i], b[i]];
        const cmp =
          typeof x === "number" && typeof y === "number"
            ? x - y
            : String(x).localeCompare(String(y));
        return ascending ? cmp : -cmp;
      });
      fill();
    });
    head.appendChild(th);
  });
  table.appendChild(head);
  table.appendChild(body);
  fill();
  wrap.appendChild(table);

  if (data.datasets.length > 0) {
    const list = el(doc, "ul", "dataset-list");
    for (const ds of data.datasets) {
      const item = el(doc, "li");
      const link = el(doc, "a", "dataset-link", ds.name);
      link.href = `/v1/data/${encodeURIComponent(ds.dataset_id)}`;
      item.appendChild(link);
      list.appendChild(item);
    }
    wrap.appendChild(list);
  }
  return wrap;
}

export function renderTurn(doc: Document, turn: ChatTurn, api: ApiClient): HTMLElement {
  const node = el(doc, "div", `turn turn-${turn.role}`);
  if (turn.role === "user") {
    node.appendChild(el(doc, "div", "user-text", turn.text));
    return node;
  }
  if (turn.refused) {
    node.classList.add("refused");
    node.appendChild(el(doc, "div", "banner refusal-banner", "inconclusive"));
    node.appendChild(el(doc, "div", "answer-text", turn.text));
    return node;
  }
  for (const warning of turn.warnings) {
    node.appendChild(el(doc, "div", "banner warning-banner", warning));
  }
  node.appendChild(renderAnswerText(doc, turn, api));
  if (turn.confidence_label) {
    node.appendChild(el(doc, "div", "confidence", `confidence: ${turn.confidence_label}`));
  }
  if (turn.data_points) node.appendChild(renderDataPoints(doc, turn.data_points));
  return node;
}

export function renderConversation(
  doc: Document,
  container: HTMLElement,
  turns: ChatTurn[],
  api: ApiClient,
): void {
  container.replaceChildren();
  for (const turn of turns) container.appendChild(renderTurn(doc, turn, api));
}
