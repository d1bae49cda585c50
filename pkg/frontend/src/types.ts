// Wire types mirroring the review service's JSON payloads.

export interface TokenProbability {
  token: string;
  probability: number;
}

export interface PredictionColumn {
  model_id: string;
  template_id: string;
  topk: TokenProbability[];
}

export interface EntitySpan {
  entity_id: string;
  start: number;
  end: number;
  surface: string;
}

export interface SentenceView {
  sentence_id: string;
  doc_id: string;
  text: string;
  char_range: [number, number];
  entities: EntitySpan[];
}

export interface InstanceView {
  instance_id: string;
  sentence_id: string;
  kind: "pair" | "anaphoric";
  nested: boolean;
  e1: EntitySpan;
  e2: EntitySpan | null;
  gold_label: string | null;
  judged: boolean;
  sentence: SentenceView | null;
  predictions: PredictionColumn[];
}

export interface InstancePage {
  items: InstanceView[];
  page: number;
  page_size: number;
  total: number;
}

export interface ServiceMeta {
  models: string[];
  templates: string[];
  label_set: string[];
  shown_k: number;
  total_instances: number;
}

export type Rating = "accurate" | "generic" | "irrelevant";

export interface JudgmentPayload {
  instance_id: string;
  model_id: string;
  template_id: string;
  selected_tokens: string[];
  rating: Rating;
  annotator_id: string;
}

export interface SelectionPayload {
  family: "bert_like" | "roberta_like";
  model_id: string;
  annotator_id: string;
  rationale?: string;
}

export interface LabelPayload {
  instance_id: string;
  label: string;
  annotator_id: string;
}

export interface ActiveSelections {
  bert_like: (SelectionPayload & { selection_id: string }) | null;
  roberta_like: (SelectionPayload & { selection_id: string }) | null;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  field: string | null;
}

export interface InstanceFilters {
  kind?: "pair" | "anaphoric";
  labeled?: boolean;
  entity_count?: number;
  models?: string[];
  templates?: string[];
  page: number;
  page_size: number;
}
