// Models list: one row per instance with a lifecycle badge that re-renders
// on every store change (driven by the event stream, never by refresh).

import type { AppStore } from "../store";
import { badge, clear, h } from "../render";

export function renderModelsPage(root: HTMLElement, store: AppStore): () => void {
  const container = h("div", { class: "page" });
  root.append(container);

  const draw = () => {
    clear(container);
    container.append(h("h2", {}, "Models"));
    const table = h("table", { class: "grid", id: "models-table" });
    table.append(
      h(
        "tr",
        {},
        h("th", {}, "model"),
        h("th", {}, "template"),
        h("th", {}, "state"),
        h("th", {}, "serving"),
        h("th", {}, "versions"),
      ),
    );
    for (const model of store.models) {
      const row = h(
        "tr",
        { class: "model-row" },
        h("td", {}, h("a", { href: `#/models/${model.model_id}` }, model.model_id)),
        h("td", {}, `${model.template.name}@${model.template.version}`),
        h("td", {}, badge(model.state)),
        h("td", {}, model.serving_version === null ? "-" : `v${model.serving_version}`),
        h("td", {}, String(model.versions.length)),
      );
      row.dataset.modelId = model.model_id;
      table.append(row);
    }
    if (!store.models.length) {
      container.append(table, h("p", { class: "muted" }, "No models yet."));
    } else {
      container.append(table);
    }
    container.append(
      h("p", {}, h("a", { class: "button", href: "#/create" }, "Create model")),
    );
  };

  draw();
  const unsubscribe = store.onChange(draw);
  return () => {
    unsubscribe();
    container.remove();
  };
}
