/** Wire types for the slider service plus UI-side state shapes. */

export interface CatalogEntry {
  name: string;
  positive: string;
  negative: string;
  target: string;
  alpha_min: number;
  alpha_max: number;
  alpha_default: number;
}

export interface SliderControl {
  entry: CatalogEntry;
  scale: number;
}

export interface SliderRef {
  name: string;
  scale: number;
}

export interface GenerateRequest {
  prompt: string;
  seed: number;
  steps?: number | null;
  sliders: SliderRef[];
}

export interface GenerateResponse {
  image: string;
  applied: SliderRef[];
  is_base: boolean;
  prompt: string;
  seed: number;
  steps: number;
  elapsed_ms: number;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  field?: string;
}

export interface SessionState {
  prompt: string;
  seed: number;
  seedLocked: boolean;
  steps: number | null;
  /** Ordered active slider stack; names unique. */
  stack: SliderRef[];
}

export interface HistoryStage {
  label: string;
  image: string;
  stack: SliderRef[];
}
