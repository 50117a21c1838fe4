export type Outcome = "correct" | "incorrect" | "mixed";

export interface SampleInfo {
  sample_id: string;
  outcome: Outcome;
  targets: number[];
  top_class: number;
  prediction_set: number[];
}

export interface SamplePage {
  items: SampleInfo[];
  total: number;
  page: number;
  page_size: number;
}

export type JobStatus = "running" | "done" | "failed";

export type AssetKind = "input" | "saliency" | "reconstruction" | "pv" | "panel";

export interface ExplanationJob {
  id: string;
  sample_id: string;
  class_index: number;
  status: JobStatus;
  assets: Record<AssetKind, string>;
  asset_urls: Record<AssetKind, string>;
  scores: number[] | null;
  error: string | null;
}

export interface SampleFilters {
  outcome?: Outcome;
  classIndex?: number;
}
