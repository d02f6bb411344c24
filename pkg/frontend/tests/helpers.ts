// Mocked-API plumbing shared by the dashboard tests.

import { ApiClient, type FetchLike } from "../src/api";
import { EventFeed } from "../src/sse";
import { AppStore } from "../src/store";
import type { LifecycleState, ModelInstance, TemplateEntry } from "../src/types";

export function makeModel(state: LifecycleState, id = "fcr-001"): ModelInstance {
  return {
    model_id: id,
    template: { name: "fcr", version: "1.0.0", digest: "d".repeat(64) },
    state,
    versions:
      state === "Created" || state === "AcquiringData" || state === "Training"
        ? []
        : [
            {
              version: 1,
              run_id: "run-000001",
              metrics: { val_accuracy: 0.97 },
              created_at: 1767225600,
              snapshot_digest: "s".repeat(64),
              reason: "manual",
              approved: state === "Serving" || state === "Archived",
              rejected: state === "Rejected",
              archived: false,
            },
          ],
    serving_version: state === "Serving" || state === "Archived" ? 1 : null,
    pending_version: state === "PendingApproval" ? 1 : null,
    active_run_id: null,
    created_at: 1767225600,
    config: {},
  };
}

export const FCR_TEMPLATE: TemplateEntry = {
  name: "fcr",
  version: "1.0.0",
  digest: "d".repeat(64),
  meta: {
    description: "Failure code recommendation",
    output_kind: "class-label",
    approval_required: true,
    inputs: [{ name: "description", kind: "text", required: true }],
    params: [
      { name: "alpha_grid", type: "string", default: "0.1,1.0", enum_values: null, description: "", required: false },
      { name: "holdout_ratio", type: "float", default: 0.8, enum_values: null, description: "", required: false },
      { name: "seed", type: "int", default: 17, enum_values: null, description: "", required: false },
      { name: "compare_to", type: "enum", default: "closed", enum_values: ["open", "closed", "completed"], description: "", required: false },
      { name: "strict", type: "bool", default: false, enum_values: null, description: "", required: false },
    ],
    resources: { cpu_millis: 500, memory_mb: 256 },
  },
};

export interface MockBackend {
  models: ModelInstance[];
  templates: TemplateEntry[];
  calls: { method: string; path: string; body?: unknown }[];
  responses: Map<string, { status: number; body: unknown }>;
}

export function makeBackend(models: ModelInstance[] = []): MockBackend {
  return { models, templates: [FCR_TEMPLATE], calls: [], responses: new Map() };
}

function jsonResponse(status: number, body: unknown): Response {
  return {
    ok: status < 400,
    status,
    statusText: String(status),
    text: () => Promise.resolve(JSON.stringify(body)),
  } as unknown as Response;
}

export function mockFetch(backend: MockBackend): FetchLike {
  return (input, init) => {
    const method = init?.method ?? "GET";
    const path = input.toString();
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    backend.calls.push({ method, path, body });
    const override = backend.responses.get(`${method} ${path}`);
    if (override) return Promise.resolve(jsonResponse(override.status, override.body));
    if (method === "GET" && path === "/v1/models") {
      return Promise.resolve(jsonResponse(200, backend.models));
    }
    if (method === "GET" && path === "/v1/templates") {
      return Promise.resolve(jsonResponse(200, backend.templates));
    }
    if (method === "GET" && path === "/v1/healthz") {
      return Promise.resolve(jsonResponse(200, { status: "ok", version: "test" }));
    }
    const modelMatch = path.match(/^\/v1\/models\/([^/]+)$/);
    if (method === "GET" && modelMatch) {
      const model = backend.models.find((m) => m.model_id === modelMatch[1]);
      return Promise.resolve(
        model
          ? jsonResponse(200, model)
          : jsonResponse(404, { error: { code: "not-found", message: "no such model", detail: [] } }),
      );
    }
    if (method === "GET" && /\/(metrics|drift)$/.test(path)) {
      return Promise.resolve(
        jsonResponse(404, { error: { code: "not-found", message: "none", detail: [] } }),
      );
    }
    // lifecycle POSTs acknowledge; state only changes via events + refetch
    return Promise.resolve(jsonResponse(200, { ok: true }));
  };
}

export function makeApp(backend: MockBackend): { api: ApiClient; feed: EventFeed; store: AppStore } {
  const fetchFn = mockFetch(backend);
  const api = new ApiClient(fetchFn);
  const feed = new EventFeed(fetchFn);
  const store = new AppStore(api, feed);
  return { api, feed, store };
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
