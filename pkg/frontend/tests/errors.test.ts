// API errors must surface verbatim: server code + message + detail.

import { beforeEach, describe, expect, it } from "vitest";

import { ApiError } from "../src/api";
import { renderModelDetail } from "../src/views/modelDetail";
import { flush, makeApp, makeBackend, makeModel } from "./helpers";

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("error surfacing", () => {
  it("ApiError carries the server body untouched", async () => {
    const backend = makeBackend([makeModel("PendingApproval")]);
    backend.responses.set("POST /v1/models/fcr-001/approve", {
      status: 409,
      body: {
        error: {
          code: "state-conflict",
          message: "model fcr-001 is Serving, not PendingApproval",
          detail: [{ field: "state" }],
        },
      },
    });
    const { api } = makeApp(backend);
    try {
      await api.approve("fcr-001");
      expect.unreachable("approve must reject");
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      const apiErr = err as ApiError;
      expect(apiErr.status).toBe(409);
      expect(apiErr.body.code).toBe("state-conflict");
      expect(apiErr.body.message).toContain("not PendingApproval");
      expect(apiErr.body.detail).toEqual([{ field: "state" }]);
    }
  });

  it("the detail view shows code and detail after a failed action", async () => {
    const backend = makeBackend([makeModel("PendingApproval")]);
    backend.responses.set("POST /v1/models/fcr-001/approve", {
      status: 409,
      body: {
        error: { code: "state-conflict", message: "already decided", detail: [] },
      },
    });
    const { store } = makeApp(backend);
    await store.refreshModels();
    const root = document.createElement("div");
    document.body.append(root);
    renderModelDetail(root, store, "fcr-001");
    await flush();

    root.querySelector<HTMLButtonElement>("button.action-approve")!.click();
    await flush();
    const notice = root.querySelector("#action-error");
    expect(notice?.textContent).toContain("state-conflict");
    expect(notice?.textContent).toContain("already decided");
  });
});
