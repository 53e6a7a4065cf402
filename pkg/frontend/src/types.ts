export const ZOOM_LEVELS = ["headline", "abstract", "detailed", "data"] as const;

export type Zoom = (typeof ZOOM_LEVELS)[number];

export interface SupportingStudy {
  publication_id: string;
  version: number;
  chunk_ids: string[];
  doi?: string;
}

export interface EffectsTable {
  columns: string[];
  rows: (string | number)[][];
}

export interface DataPoints {
  effects: EffectsTable;
  datasets: { dataset_id: string; name: string }[];
}

export interface QueryResponse {
  query_id: string;
  answer_summary: string;
  answer_detail: string;
  supporting_studies: SupportingStudy[];
  confidence_score: number;
  confidence_label: "low" | "medium" | "high";
  warnings: string[];
  derivation: string;
  refused: boolean;
  data_points?: DataPoints;
}

export interface PublicationAuthor {
  name: string;
  affiliation?: string | null;
  orcid?: string | null;
}

export interface PublicationChunk {
  chunk_id: string;
  section: string;
  ordinal: number;
  text: string;
}

export interface Publication {
  pub_id: string;
  version: number;
  title: string;
  authors: PublicationAuthor[];
  date: string;
  keywords: string[];
  venue: string | null;
  references: string[];
  status: string;
  superseded_by: string | null;
  chunks: PublicationChunk[];
}

export interface FeedbackBody {
  query_id: string;
  rating: "up" | "down";
  flag_reason?: string;
}

export interface ChatTurn {
  role: "user" | "engine";
  text: string;
  citations: SupportingStudy[];
  confidence_label?: "low" | "medium" | "high";
  warnings: string[];
  query_id?: string;
  timestamp: string;
  refused?: boolean;
  data_points?: DataPoints;
}
