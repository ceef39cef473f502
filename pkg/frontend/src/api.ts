/** Typed client for the explain service. All numbers shown in the UI come
 * from these responses; the client never derives metric values itself. */

export interface ContinuousFeature {
  name: string;
  kind: "continuous";
  min: number;
  max: number;
  mean: number;
  stddev: number;
}

export interface CategoricalFeature {
  name: string;
  kind: "categorical";
  categories: string[];
}

export type Feature = ContinuousFeature | CategoricalFeature;

export interface SchemaResponse {
  features: Feature[];
  class_count: number;
  class_labels: string[] | null;
  p_set: number[];
  masks: string[][];
  eps: number;
  has_classifier: boolean;
  has_density: boolean;
  bundle_id: string;
}

export type FeatureValue = number | string;

export interface GenerateRequest {
  instance: Record<string, FeatureValue>;
  target_class?: number | "flip";
  n?: number;
  p?: number;
  mask?: string[];
  rank_by_score?: boolean;
  seed?: number;
}

export interface Counterfactual {
  features: Record<string, FeatureValue | null>;
  valid: boolean | null;
  class_prob: number | null;
  proximity_num: number | null;
  changed_features: string[];
  score: number | null;
  explanation?: string;
}

export interface GenerateResponse {
  counterfactuals: Counterfactual[];
  target_class: number;
  target_label: string;
  model_info: {
    bundle_id: string;
    p_set: number[];
    masks: string[][];
    class_count: number;
  };
  timing_ms: number;
}

export interface ClassifyResponse {
  probabilities: number[];
  predicted_class: number;
  predicted_label: string;
}

export interface FieldError {
  field: string;
  message: string;
}

/** Server-reported failure; carries the structured field errors. */
export class ApiError extends Error {
  readonly status: number;
  readonly errors: FieldError[];

  constructor(status: number, errors: FieldError[]) {
    super(errors.map((e) => (e.field ? `${e.field}: ${e.message}` : e.message)).join("; ") || `HTTP ${status}`);
    this.name = "ApiError";
    this.status = status;
    this.errors = errors;
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let errors: FieldError[] = [];
  try {
    const body = (await res.json()) as { errors?: FieldError[] };
    if (Array.isArray(body.errors)) errors = body.errors;
  } catch {
    // non-JSON error body; fall through to a bare status error
  }
  return new ApiError(res.status, errors);
}

export class ApiClient {
  /** Base URL without a trailing slash; "" targets the serving origin. */
  readonly baseUrl: string;

  constructor(baseUrl = "") {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async get<T>(path: string): Promise<T> {
    const res = await fetch(`${this.baseUrl}${path}`);
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw await parseError(res);
    return (await res.json()) as T;
  }

  health(): Promise<{ status: string; bundle_loaded: boolean }> {
    return this.get("/healthz");
  }

  schema(): Promise<SchemaResponse> {
    return this.get("/schema");
  }

  classify(instance: Record<string, FeatureValue>): Promise<ClassifyResponse> {
    return this.post("/classify", { instance });
  }

  generate(request: GenerateRequest): Promise<GenerateResponse> {
    return this.post("/generate", request);
  }
}
