// Thin typed client of the /v1 REST surface. Every dashboard action maps to
// exactly one call here; errors carry the server's code + detail verbatim.

import type {
  ApiErrorBody,
  DriftReport,
  MetricsPayload,
  ModelInstance,
  TemplateEntry,
} from "./types";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ApiErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    private readonly base = "",
  ) {}

  token(): string | null {
    return sessionStorage.getItem("mf_token");
  }

  setToken(token: string | null): void {
    if (token) sessionStorage.setItem("mf_token", token);
    else sessionStorage.removeItem("mf_token");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    const token = this.token();
    if (token) headers["Authorization"] = `Bearer ${token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const resp = await this.fetchFn(this.base + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    const parsed = text ? JSON.parse(text) : null;
    if (!resp.ok) {
      const err: ApiErrorBody = parsed?.error ?? {
        code: String(resp.status),
        message: text || resp.statusText,
        detail: [],
      };
      throw new ApiError(resp.status, err);
    }
    return parsed as T;
  }

  health(): Promise<{ status: string; version: string }> {
    return this.request("GET", "/v1/healthz");
  }

  listTemplates(): Promise<TemplateEntry[]> {
    return this.request("GET", "/v1/templates");
  }

  listModels(): Promise<ModelInstance[]> {
    return this.request("GET", "/v1/models");
  }

  getModel(id: string): Promise<ModelInstance> {
    return this.request("GET", `/v1/models/${id}`);
  }

  createModel(template: string, config: Record<string, unknown>): Promise<ModelInstance> {
    return this.request("POST", "/v1/models", { template, config });
  }

  deleteModel(id: string): Promise<unknown> {
    return this.request("DELETE", `/v1/models/${id}`);
  }

  train(id: string): Promise<unknown> {
    return this.request("POST", `/v1/models/${id}/train`, {});
  }

  approve(id: string): Promise<unknown> {
    return this.request("POST", `/v1/models/${id}/approve`);
  }

  reject(id: string): Promise<unknown> {
    return this.request("POST", `/v1/models/${id}/reject`);
  }

  rollback(id: string, version: number): Promise<unknown> {
    return this.request("POST", `/v1/models/${id}/rollback`, { version });
  }

  archive(id: string): Promise<unknown> {
    return this.request("POST", `/v1/models/${id}/archive`);
  }

  infer(id: string, request: Record<string, unknown>): Promise<unknown> {
    return this.request("POST", `/v1/models/${id}/infer`, request);
  }

  metrics(id: string): Promise<MetricsPayload> {
    return this.request("GET", `/v1/models/${id}/metrics`);
  }

  drift(id: string): Promise<DriftReport> {
    return this.request("GET", `/v1/models/${id}/drift`);
  }
}
