import type { ApiClient } from "./api";
import type { FeedbackBody } from "./types";

/**
 * Thumbs up/down widget for one engine turn. A turn submits at most one
 * rating (repeat clicks are debounced into the first). A network failure
 * queues the POST; `retryQueued` (wired to the window's online event)
 * retries it once.
 */
export class FeedbackWidget {
  readonly root: HTMLElement;
  status = "";
  private submitted = false;
  private queued: FeedbackBody | null = null;
  private statusNode: HTMLElement;
  private reasonBox: HTMLTextAreaElement;

  constructor(
    doc: Document,
    private api: ApiClient,
    private queryId: string,
  ) {
    this.root = doc.createElement("div");
    this.root.className = "feedback";
    const up = doc.createElement("button");
    up.className = "feedback-up";
    up.textContent = "\u{1F44D}";
    const down = doc.createElement("button");
    down.className = "feedback-down";
    down.textContent = "\u{1F44E}";
    this.reasonBox = doc.createElement("textarea");
    this.reasonBox.className = "feedback-reason hidden";
    this.reasonBox.placeholder = "What was wrong?";
    const send = doc.createElement("button");
    send.className = "feedback-send hidden";
    send.textContent = "send";
    this.statusNode = doc.createElement("span");
    this.statusNode.className = "feedback-status";

    up.addEventListener("click", () => void this.submit("up"));
    down.addEventListener("click", () => {
      this.reasonBox.classList.remove("hidden");
      send.classList.remove("hidden");
    });
    send.addEventListener("click", () =>
      void this.submit("down", this.reasonBox.value || undefined),
    );

    for (const n of [up, down, this.reasonBox, send, this.statusNode]) this.root.appendChild(n);
  }

  private setStatus(text: string): void {
    this.status = text;
    this.statusNode.textContent = text;
  }

  async submit(rating: "up" | "down", flagReason?: string): Promise<void> {
    if (this.submitted) return;
    this.submitted = true;
    const body: FeedbackBody = { query_id: this.queryId, rating };
    if (flagReason !== undefined) body.flag_reason = flagReason;
    await this.post(body);
  }

  private async post(body: FeedbackBody): Promise<void> {
    try {
      const status = await this.api.feedback(body);
      this.setStatus(status === 404 ? "session expired" : "recorded");
    } catch {
      this.queued = body;
      this.setStatus("offline — will retry");
    }
  }

  async retryQueued(): Promise<void> {
    if (!this.queued) return;
    const body = this.queued;
    this.queued = null;
    await this.post(body);
  }
}
