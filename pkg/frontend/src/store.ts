// App state: caches the latest API payloads and refreshes them when the
// event stream reports a change. Views re-render from here; nothing in the
// UI mutates this state optimistically.

import type { ApiClient } from "./api";
import type { EventFeed } from "./sse";
import type { ModelInstance, PlatformEvent, TemplateEntry } from "./types";

const MODEL_EVENT_KINDS = new Set([
  "ModelCreated",
  "DataFetched",
  "TrainingStarted",
  "TrainingSucceeded",
  "TrainingFailed",
  "ModelPendingApproval",
  "ModelApproved",
  "ModelRejected",
  "ModelDeployed",
  "RetrainScheduled",
  "RetrainSkipped",
  "DriftDetected",
  "AccuracyDegraded",
  "ModelArchived",
  "ModelDeleted",
  "ModelRolledBack",
]);

export class AppStore {
  models: ModelInstance[] = [];
  templates: TemplateEntry[] = [];
  recentEvents: PlatformEvent[] = [];
  private listeners = new Set<() => void>();
  private refreshing: Promise<void> | null = null;

  constructor(
    readonly api: ApiClient,
    readonly feed: EventFeed,
  ) {
    feed.subscribe((event) => this.onEvent(event));
  }

  onChange(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  /** One event -> one refresh pass; views re-render within the same cycle. */
  private onEvent(event: PlatformEvent): void {
    this.recentEvents.push(event);
    if (this.recentEvents.length > 500) this.recentEvents.shift();
    if (event.kind === "TemplatePublished") {
      void this.refreshTemplates().then(() => this.notify());
    } else if (MODEL_EVENT_KINDS.has(event.kind)) {
      void this.refreshModels().then(() => this.notify());
    } else {
      this.notify();
    }
  }

  async refreshModels(): Promise<void> {
    if (!this.refreshing) {
      this.refreshing = this.api
        .listModels()
        .then((models) => {
          this.models = models;
        })
        .finally(() => {
          this.refreshing = null;
        });
    }
    return this.refreshing;
  }

  async refreshTemplates(): Promise<void> {
    this.templates = await this.api.listTemplates();
  }

  async refreshAll(): Promise<void> {
    await Promise.all([this.refreshModels(), this.refreshTemplates()]);
    this.notify();
  }
}
