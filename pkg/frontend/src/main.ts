// Hash router + bootstrapping. One event-stream subscription per session;
// the feed reconnects with the last-seen seq on drops.

import { ApiClient } from "./api";
import { h } from "./render";
import { EventFeed } from "./sse";
import { AppStore } from "./store";
import { renderCreateModel } from "./views/createModel";
import { renderEventsPage } from "./views/events";
import { renderLogin } from "./views/login";
import { renderModelDetail } from "./views/modelDetail";
import { renderModelsPage } from "./views/models";
import { renderTemplatesPage } from "./views/templates";

const api = new ApiClient();
const feed = new EventFeed(undefined, () => api.token());
const store = new AppStore(api, feed);

const nav = h(
  "nav",
  {},
  h("strong", { class: "brand" }, "modelforge"),
  h("a", { href: "#/models" }, "Models"),
  h("a", { href: "#/templates" }, "Templates"),
  h("a", { href: "#/create" }, "Create"),
  h("a", { href: "#/events" }, "Events"),
);
const outlet = h("main", { id: "outlet" });
document.body.append(nav, outlet);

let teardown: (() => void) | null = null;

function route(): void {
  teardown?.();
  const hash = location.hash || "#/models";
  const [path, query] = hash.slice(2).split("?");
  const parts = path.split("/");
  if (parts[0] === "models" && parts[1]) {
    teardown = renderModelDetail(outlet, store, parts[1]);
  } else if (parts[0] === "templates") {
    teardown = renderTemplatesPage(outlet, store);
  } else if (parts[0] === "create") {
    const preselect = new URLSearchParams(query ?? "").get("template");
    teardown = renderCreateModel(outlet, store, preselect);
  } else if (parts[0] === "events") {
    teardown = renderEventsPage(outlet, store);
  } else if (parts[0] === "login") {
    teardown = renderLogin(outlet, store, () => {
      location.hash = "#/models";
      void start();
    });
  } else {
    teardown = renderModelsPage(outlet, store);
  }
}

async function start(): Promise<void> {
  try {
    await api.health();
  } catch {
    location.hash = "#/login";
    route();
    return;
  }
  await store.refreshAll();
  void feed.run();
  route();
}

window.addEventListener("hashchange", route);
void start();
