/** Wire types of the local diagnosis service API. */

export interface RecommendationEntry {
  disease: string;
  treatment: string[];
  symptoms: string[];
  sources: string[];
}

export interface StageResult {
  label: string;
  /** Full per-class probability vector, in model label order. */
  confidence: Record<string, number>;
}

export interface Diagnosis {
  id: string;
  timestamp: string;
  image_ref: string;
  stage1: StageResult;
  /** Present only when stage 1 hit the cascade trigger label. */
  stage2?: StageResult;
  recommendation_key: string;
  model_versions: Record<string, string>;
  /** Embedded by POST /api/diagnose so the UI renders in one round trip. */
  recommendation?: RecommendationEntry;
}

export interface HistoryPage {
  items: Diagnosis[];
  next_before: string | null;
}

export interface ModelInfo {
  digest: string;
  labels: string[];
  input_size: number;
}

export interface ModelsResponse {
  disease: ModelInfo;
  level: ModelInfo;
  trigger_label: string;
}
