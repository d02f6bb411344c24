// Token entry; stored in session storage and attached to every call.

import { clear, h } from "../render";
import type { AppStore } from "../store";

export function renderLogin(root: HTMLElement, store: AppStore, onDone: () => void): () => void {
  const container = h("div", { class: "page" });
  root.append(container);
  let notice = "";

  const draw = () => {
    clear(container);
    container.append(h("h2", {}, "Connect"));
    const input = h("input", {
      type: "password", id: "token-input", placeholder: "bearer token (empty if auth is off)",
    }) as HTMLInputElement;
    input.value = store.api.token() ?? "";
    const form = h("form", {},
      h("p", { class: "field" }, h("label", { for: "token-input" }, "API token"), input),
      h("p", {}, h("button", { class: "button", type: "submit" }, "Connect")));
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      store.api.setToken(input.value.trim() || null);
      store.api
        .health()
        .then(() => onDone())
        .catch((err) => {
          notice = String(err);
          draw();
        });
    });
    container.append(form);
    if (notice) container.append(h("p", { class: "error" }, notice));
  };

  draw();
  return () => container.remove();
}
