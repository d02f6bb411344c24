// Client-side mirrors of the /v1 API payloads. The dashboard never invents
// state: everything rendered comes from these shapes as the server sent them.

export type LifecycleState =
  | "Created"
  | "AcquiringData"
  | "Training"
  | "TrainingFailed"
  | "PendingApproval"
  | "Rejected"
  | "Serving"
  | "Retraining"
  | "Archived"
  | "Deleted";

export interface ParamSpec {
  name: string;
  type: "string" | "int" | "float" | "bool" | "enum";
  default: unknown;
  enum_values: string[] | null;
  description: string;
  required: boolean;
}

export interface TemplateMeta {
  description: string;
  output_kind: string;
  approval_required: boolean;
  inputs: { name: string; kind: string; required: boolean }[];
  params: ParamSpec[];
  resources: { cpu_millis: number; memory_mb: number };
}

export interface TemplateEntry {
  name: string;
  version: string;
  digest: string;
  meta: TemplateMeta;
}

export interface ModelVersion {
  version: number;
  run_id: string;
  metrics: Record<string, number>;
  created_at: number;
  snapshot_digest: string;
  reason: string;
  approved: boolean;
  rejected: boolean;
  archived: boolean;
}

export interface ModelInstance {
  model_id: string;
  template: { name: string; version: string; digest: string };
  state: LifecycleState;
  versions: ModelVersion[];
  serving_version: number | null;
  pending_version: number | null;
  active_run_id: string | null;
  created_at: number;
  config: Record<string, unknown>;
  endpoint?: { status: string; loaded_version: number } | null;
}

export interface DriftReport {
  model_id: string;
  computed_at: number;
  per_feature: Record<string, number>;
  prediction_psi: number | null;
  threshold: number;
  drifted: boolean;
  status: string;
  max_psi: number;
}

export interface MetricsPayload {
  model_id: string;
  training_metrics: Record<string, number>;
  rolling: { labeled: number; accuracy: number | null; matches?: number };
}

export interface PlatformEvent {
  seq: number;
  kind: string;
  model_id: string | null;
  at: number;
  payload: Record<string, unknown>;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail: Record<string, unknown>[];
}
