// Acceptance: an injected TrainingSucceeded SSE event flips the model list
// badge within one render cycle, with no manual refresh.

import { beforeEach, describe, expect, it } from "vitest";

import { renderModelsPage } from "../src/views/models";
import { flush, makeApp, makeBackend, makeModel } from "./helpers";

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("live updates from the event stream", () => {
  it("TrainingSucceeded flips the badge without refresh", async () => {
    const backend = makeBackend([makeModel("Training")]);
    const { store, feed } = makeApp(backend);
    await store.refreshModels();

    const root = document.createElement("div");
    document.body.append(root);
    const teardown = renderModelsPage(root, store);

    const badgeOf = () =>
      root.querySelector<HTMLElement>("tr.model-row .badge")!.dataset.state;
    expect(badgeOf()).toBe("Training");

    // the server-side transition the event reports
    backend.models = [makeModel("PendingApproval")];
    backend.calls.length = 0;
    feed.dispatch({
      seq: 42,
      kind: "TrainingSucceeded",
      model_id: "fcr-001",
      at: 1767225700,
      payload: { version: 1 },
    });
    await flush(); // one render cycle

    expect(badgeOf()).toBe("PendingApproval");
    // the update came from a refetch, not from client-side state invention
    expect(backend.calls.some((c) => c.method === "GET" && c.path === "/v1/models")).toBe(true);
    teardown();
  });

  it("ModelDeployed updates the serving column live", async () => {
    const backend = makeBackend([makeModel("PendingApproval")]);
    const { store, feed } = makeApp(backend);
    await store.refreshModels();
    const root = document.createElement("div");
    document.body.append(root);
    renderModelsPage(root, store);

    backend.models = [makeModel("Serving")];
    feed.dispatch({
      seq: 43, kind: "ModelDeployed", model_id: "fcr-001",
      at: 1767225800, payload: { version: 1 },
    });
    await flush();

    const cells = [...root.querySelectorAll("tr.model-row td")].map(
      (td) => td.textContent,
    );
    expect(cells).toContain("v1");
    expect(root.querySelector<HTMLElement>(".badge")!.dataset.state).toBe("Serving");
  });

  it("unrelated event kinds do not trigger a model refetch", async () => {
    const backend = makeBackend([makeModel("Serving")]);
    const { store, feed } = makeApp(backend);
    await store.refreshModels();
    backend.calls.length = 0;
    feed.dispatch({
      seq: 44, kind: "FeedbackOverwritten", model_id: "fcr-001",
      at: 1767225900, payload: {},
    });
    await flush();
    expect(backend.calls.filter((c) => c.path === "/v1/models")).toHaveLength(0);
  });
});
