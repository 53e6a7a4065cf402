import type { FeedbackBody, Publication, QueryResponse, Zoom } from "./types";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function raiseForError(res: Response): Promise<void> {
  if (res.ok) return;
  let code = "error";
  let message = `HTTP ${res.status}`;
  try {
    const body = await res.json();
    if (body && body.error) {
      code = body.error.code ?? code;
      message = body.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the HTTP status message
  }
  throw new ApiError(res.status, code, message);
}

/**
 * Thin client for the public publication API. Publication metadata is
 * cached per (pub_id, version) so citation tooltips do not re-fetch.
 */
export class ApiClient {
  private pubCache = new Map<string, Publication>();

  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
    private apiKey?: string,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private headers(): Record<string, string> {
    const h: Record<string, string> = { "Content-Type": "application/json" };
    if (this.apiKey) h["X-API-Key"] = this.apiKey;
    return h;
  }

  async query(question: string, zoom: Zoom): Promise<QueryResponse> {
    const res = await this.fetchImpl(`${this.baseUrl}/v1/query`, {
      method: "POST",
      headers: this.headers(),
      body: JSON.stringify({ question, zoom }),
    });
    await raiseForError(res);
    return (await res.json()) as QueryResponse;
  }

  async publication(pubId: string, version?: number): Promise<Publication> {
    const cacheKey = `${pubId}@${version ?? "latest"}`;
    const cached = this.pubCache.get(cacheKey);
    if (cached) return cached;
    // ids contain "#", a URL fragment delimiter, so every path segment is encoded
    const query = version === undefined ? "" : `?version=${version}`;
    const res = await this.fetchImpl(
      `${this.baseUrl}/v1/publications/${encodeURIComponent(pubId)}${query}`,
      { headers: this.headers() },
    );
    await raiseForError(res);
    const pub = (await res.json()) as Publication;
    this.pubCache.set(cacheKey, pub);
    return pub;
  }

  /** Returns the HTTP status (204 recorded, 404 session expired). */
  async feedback(body: FeedbackBody): Promise<number> {
    const res = await this.fetchImpl(`${this.baseUrl}/v1/feedback`, {
      method: "POST",
      headers: this.headers(),
      body: JSON.stringify(body),
    });
    if (res.status !== 204 && res.status !== 404) await raiseForError(res);
    return res.status;
  }
}
