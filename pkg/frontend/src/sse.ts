// Server-sent-events subscription over fetch (EventSource cannot send the
// Authorization header). Reconnects with ?since=<last seq> so no event is
// missed across drops.

import type { PlatformEvent } from "./types";
import type { FetchLike } from "./api";

export type EventListener = (event: PlatformEvent) => void;

export class EventFeed {
  private lastSeq = 0;
  private listeners = new Set<EventListener>();
  private stopped = false;

  constructor(
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    private readonly tokenFn: () => string | null = () => null,
    private readonly base = "",
  ) {}

  subscribe(listener: EventListener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  /** Inject one event into every listener (also the test seam). */
  dispatch(event: PlatformEvent): void {
    if (event.seq > this.lastSeq) this.lastSeq = event.seq;
    for (const listener of this.listeners) listener(event);
  }

  stop(): void {
    this.stopped = true;
  }

  async run(): Promise<void> {
    this.stopped = false;
    while (!this.stopped) {
      try {
        await this.readStream();
      } catch {
        // fall through to the reconnect delay
      }
      if (this.stopped) return;
      await new Promise((resolve) => setTimeout(resolve, 1000));
    }
  }

  private async readStream(): Promise<void> {
    const headers: Record<string, string> = {};
    const token = this.tokenFn();
    if (token) headers["Authorization"] = `Bearer ${token}`;
    const resp = await this.fetchFn(
      `${this.base}/v1/events?follow=true&since=${this.lastSeq}`,
      { headers },
    );
    if (!resp.ok || !resp.body) throw new Error(`stream failed: ${resp.status}`);
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    while (!this.stopped) {
      const { done, value } = await reader.read();
      if (done) return;
      buffer += decoder.decode(value, { stream: true });
      let idx: number;
      while ((idx = buffer.indexOf("\n\n")) >= 0) {
        const frame = buffer.slice(0, idx);
        buffer = buffer.slice(idx + 2);
        for (const line of frame.split("\n")) {
          if (line.startsWith("data: ")) {
            this.dispatch(JSON.parse(line.slice(6)) as PlatformEvent);
          }
        }
      }
    }
    reader.cancel().catch(() => undefined);
  }
}
