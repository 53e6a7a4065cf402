import type { ApiClient } from "./api";
import type { ChatTurn, QueryResponse, Zoom } from "./types";

/**
 * Client-side conversation state: turn history, the active zoom level, and
 * the single in-flight query. The engine is stateless per query, so
 * follow-up context is carried by prepending the last two Q/A pairs to the
 * outgoing question text.
 */
export class ChatStore {
  turns: ChatTurn[] = [];
  zoom: Zoom = "abstract";
  pending = false;
  lastQuestion: string | null = null;

  private listeners: (() => void)[] = [];

  constructor(private api: ApiClient) {}

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }

  setZoom(zoom: Zoom): void {
    this.zoom = zoom;
    this.notify();
  }

  /** The question as sent to the engine: last 2 Q/A pairs prepended for context. */
  contextualQuestion(question: string): string {
    const parts: string[] = [];
    const engineTurns = this.turns.filter((t) => t.role === "engine" && !t.refused);
    for (const answer of engineTurns.slice(-2)) {
      const i = this.turns.indexOf(answer);
      const ask = this.turns[i - 1];
      if (ask && ask.role === "user") {
        parts.push(`Previously asked: ${ask.text} Previous answer: ${stripMarkers(answer.text)}`);
      }
    }
    parts.push(question);
    return parts.join(" ");
  }

  async ask(question: string): Promise<ChatTurn | null> {
    const trimmed = question.trim();
    if (!trimmed || this.pending) return null; // at most one in-flight query
    this.pending = true;
    this.lastQuestion = trimmed;
    const sent = this.contextualQuestion(trimmed);
    this.turns.push({
      role: "user",
      text: trimmed,
      citations: [],
      warnings: [],
      timestamp: new Date().toISOString(),
    });
    this.notify();
    try {
      const res = await this.api.query(sent, this.zoom);
      const turn = engineTurn(res);
      this.turns.push(turn);
      return turn;
    } finally {
      this.pending = false;
      this.notify();
    }
  }

  /** One-click re-ask of the last question at a different zoom level. */
  async reask(zoom: Zoom): Promise<ChatTurn | null> {
    if (!this.lastQuestion || this.pending) return null;
    this.zoom = zoom;
    return this.ask(this.lastQuestion);
  }
}

export function engineTurn(res: QueryResponse): ChatTurn {
  return {
    role: "engine",
    text: res.answer_detail,
    citations: res.supporting_studies,
    confidence_label: res.confidence_label,
    warnings: res.warnings,
    query_id: res.query_id,
    timestamp: new Date().toISOString(),
    refused: res.refused,
    data_points: res.data_points,
  };
}

export function stripMarkers(text: string): string {
  return text.replace(/\s*\[[^\]\s]+#v\d+#c\d+\]/g, "");
}
