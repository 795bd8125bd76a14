// Shapes returned by the /api/v1 endpoints.

export interface FeatureDescriptor {
  id: string;
  kind: 'continuous' | 'ordinal-code' | 'categorical-code' | 'binary';
  category: string;
  display: string;
  valid_range: [number, number];
  options: Record<string, string> | null;
}

export interface Schema {
  version: number;
  features: FeatureDescriptor[];
  labels: string[];
}

export type Answers = Record<string, number>;

export interface PredictResponse {
  risks: Record<string, number>;
  disclaimer: string;
  schema_version: number;
}

export interface ExplainResponse {
  disease: string;
  base: number;
  fx: number;
  phi: Record<string, number>;
  top: [string, number][];
  disclaimer: string;
  schema_version: number;
}

export interface ImportanceEntry {
  feature_id: string;
  mean_abs_shap: number;
  rank: number;
}

export interface ApiError {
  code: string;
  message: string;
  details: { field: string; reason: string }[];
}

export interface RiskDelta {
  disease: string;
  before: number;
  after: number;
  delta: number;
  direction: 'up' | 'down' | 'same';
}

export interface SessionState {
  answers: Answers;
  baseline: { answers: Answers; risks: Record<string, number> } | null;
  currentRisks: Record<string, number> | null;
  focusedDisease: string | null;
}
