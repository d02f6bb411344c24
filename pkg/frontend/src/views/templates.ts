// Template catalog with expandable param schemas.

import { clear, h } from "../render";
import type { AppStore } from "../store";

export function renderTemplatesPage(root: HTMLElement, store: AppStore): () => void {
  const container = h("div", { class: "page" });
  root.append(container);

  const draw = () => {
    clear(container);
    container.append(h("h2", {}, "Templates"));
    for (const tpl of store.templates) {
      const details = h(
        "details",
        { class: "card" },
        h(
          "summary",
          {},
          h("strong", {}, `${tpl.name}@${tpl.version}`),
          ` — ${tpl.meta.description || "(no description)"}`,
        ),
      );
      const body = h("div", {});
      body.append(
        h(
          "p",
          { class: "muted" },
          `output: ${tpl.meta.output_kind} · approval ${tpl.meta.approval_required ? "required" : "not required"}` +
            ` · digest ${tpl.digest.slice(0, 12)}`,
        ),
      );
      const inputs = h("table", { class: "grid" });
      inputs.append(h("tr", {}, h("th", {}, "input"), h("th", {}, "kind"), h("th", {}, "required")));
      for (const input of tpl.meta.inputs) {
        inputs.append(
          h("tr", {}, h("td", {}, input.name), h("td", {}, input.kind), h("td", {}, input.required ? "yes" : "no")),
        );
      }
      const params = h("table", { class: "grid" });
      params.append(
        h("tr", {}, h("th", {}, "param"), h("th", {}, "type"), h("th", {}, "default"), h("th", {}, "required")),
      );
      for (const p of tpl.meta.params) {
        params.append(
          h(
            "tr",
            {},
            h("td", {}, p.name),
            h("td", {}, p.type + (p.enum_values ? ` (${p.enum_values.join("|")})` : "")),
            h("td", {}, p.default === null || p.default === undefined ? "-" : String(p.default)),
            h("td", {}, p.required ? "yes" : "no"),
          ),
        );
      }
      body.append(h("h4", {}, "Inputs"), inputs, h("h4", {}, "Params"), params);
      body.append(
        h("p", {}, h("a", { class: "button", href: `#/create?template=${tpl.name}@${tpl.version}` }, "Instantiate")),
      );
      details.append(body);
      container.append(details);
    }
    if (!store.templates.length) {
      container.append(h("p", { class: "muted" }, "The store is empty."));
    }
  };

  draw();
  const unsubscribe = store.onChange(draw);
  return () => {
    unsubscribe();
    container.remove();
  };
}
