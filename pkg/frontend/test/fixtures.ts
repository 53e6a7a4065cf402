import type { FetchLike } from "../src/api";
import type { Publication, QueryResponse } from "../src/types";

export const CHUNK_A = "ap:aaaaaaaaaaaa#v1#c0";
export const CHUNK_B = "ap:bbbbbbbbbbbb#v2#c1";

export const PUB_A: Publication = {
  pub_id: "ap:aaaaaaaaaaaa",
  version: 1,
  title: "Aspirin and Stroke Risk",
  authors: [{ name: "R. Chen" }, { name: "M. Okafor" }],
  date: "2020-01-01",
  keywords: ["aspirin"],
  venue: null,
  references: [],
  status: "active",
  superseded_by: null,
  chunks: [
    { chunk_id: CHUNK_A, section: "results", ordinal: 0, text: "Aspirin reduced stroke risk." },
  ],
};

export const PUB_B: Publication = {
  pub_id: "ap:bbbbbbbbbbbb",
  version: 2,
  title: "A Replication Study",
  authors: [{ name: "J. Silva" }],
  date: "2021-06-15",
  keywords: [],
  venue: "Journal of Replication",
  references: [],
  status: "active",
  superseded_by: null,
  chunks: [
    { chunk_id: CHUNK_B, section: "results", ordinal: 1, text: "The effect replicated." },
  ],
};

export function answerFixture(overrides: Partial<QueryResponse> = {}): QueryResponse {
  return {
    query_id: "q:0001",
    answer_summary: "Aspirin reduced stroke risk.",
    answer_detail: `Aspirin reduced stroke risk. [${CHUNK_A}] The effect replicated. [${CHUNK_B}]`,
    supporting_studies: [
      { publication_id: "ap:aaaaaaaaaaaa", version: 1, chunk_ids: [CHUNK_A] },
      { publication_id: "ap:bbbbbbbbbbbb", version: 2, chunk_ids: [CHUNK_B] },
    ],
    confidence_score: 0.6,
    confidence_label: "medium",
    warnings: [],
    derivation: "This answer is based on 2 passages from 2 publications dated 2020-01-01.",
    refused: false,
    ...overrides,
  };
}

export interface RecordedRequest {
  method: string;
  path: string;
  body?: unknown;
}

/**
 * In-memory stand-in for the HTTP service: dispatches on path, records
 * every request, and lets tests swap responses or fail the network.
 */
export class FixtureServer {
  requests: RecordedRequest[] = [];
  publications = new Map<string, Publication>([
    ["ap:aaaaaaaaaaaa", PUB_A],
    ["ap:bbbbbbbbbbbb", PUB_B],
  ]);
  nextAnswer: QueryResponse = answerFixture();
  feedbackStatus = 204;
  offline = false;

  readonly fetch: FetchLike = async (input, init) => {
    if (this.offline) throw new TypeError("network unreachable");
    const url = new URL(input, "http://fixture");
    const path = decodeURIComponent(url.pathname);
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.requests.push({ method: init?.method ?? "GET", path, body });

    if (path === "/v1/query") return json(200, this.nextAnswer);
    if (path === "/v1/feedback") {
      if (this.feedbackStatus === 204) return new Response(null, { status: 204 });
      return json(this.feedbackStatus, {
        error: { code: "not_found", message: "unknown query_id" },
      });
    }
    if (path.startsWith("/v1/publications/")) {
      const pub = this.publications.get(path.slice("/v1/publications/".length));
      if (!pub) return json(404, { error: { code: "not_found", message: "no such publication" } });
      return json(200, pub);
    }
    return json(404, { error: { code: "not_found", message: `no route ${path}` } });
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
