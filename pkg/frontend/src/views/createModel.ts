// Create-model form, generated from the selected template's param schema:
// enum -> select, bool -> checkbox, int/float -> number, string -> text.
// Defaults are prefilled; required fields are marked; omitted optional
// params are left out of the request so the server fills its defaults.

import { ApiError } from "../api";
import { clear, h } from "../render";
import type { AppStore } from "../store";
import type { ParamSpec, TemplateEntry } from "../types";

function paramInput(spec: ParamSpec): HTMLElement {
  const name = `param-${spec.name}`;
  if (spec.type === "enum") {
    const select = h("select", { id: name, name });
    if (!spec.required) select.append(h("option", { value: "" }, "(default)"));
    for (const value of spec.enum_values ?? []) {
      select.append(h("option", { value }, value));
    }
    if (spec.default !== null && spec.default !== undefined) {
      select.value = String(spec.default);
    }
    return select;
  }
  if (spec.type === "bool") {
    const box = h("input", { type: "checkbox", id: name, name }) as HTMLInputElement;
    if (spec.default === true) box.checked = true;
    return box;
  }
  const input = h("input", {
    type: spec.type === "int" || spec.type === "float" ? "number" : "text",
    id: name,
    name,
  }) as HTMLInputElement;
  if (spec.type === "float") input.step = "any";
  if (spec.default !== null && spec.default !== undefined) {
    input.value = String(spec.default);
  }
  if (spec.required) input.required = true;
  return input;
}

function readParam(spec: ParamSpec, form: HTMLFormElement): unknown | undefined {
  const el = form.querySelector<HTMLInputElement | HTMLSelectElement>(
    `[name="param-${spec.name}"]`,
  );
  if (!el) return undefined;
  if (spec.type === "bool") return (el as HTMLInputElement).checked;
  const raw = el.value.trim();
  if (raw === "") return undefined; // omitted -> server-side default fill
  if (spec.type === "int") return parseInt(raw, 10);
  if (spec.type === "float") return parseFloat(raw);
  return raw;
}

export function renderCreateModel(
  root: HTMLElement,
  store: AppStore,
  preselect: string | null,
): () => void {
  const container = h("div", { class: "page" });
  root.append(container);
  let selected: TemplateEntry | null = null;
  let notice = "";
  let noticeClass = "error";

  const draw = () => {
    clear(container);
    container.append(h("h2", {}, "Create model"));
    const picker = h("select", {
      id: "template-picker",
      onchange: (ev) => {
        const value = (ev.target as HTMLSelectElement).value;
        selected = store.templates.find((t) => `${t.name}@${t.version}` === value) ?? null;
        draw();
      },
    });
    picker.append(h("option", { value: "" }, "choose a template..."));
    for (const tpl of store.templates) {
      const coord = `${tpl.name}@${tpl.version}`;
      const opt = h("option", { value: coord }, coord);
      if (selected && coord === `${selected.name}@${selected.version}`) opt.selected = true;
      picker.append(opt);
    }
    container.append(h("p", {}, "Template: ", picker));
    if (notice) container.append(h("p", { class: noticeClass, id: "create-notice" }, notice));
    if (!selected) return;

    const form = h("form", { id: "create-form" }) as HTMLFormElement;

    form.append(h("h3", {}, "Parameters"));
    for (const spec of selected.meta.params) {
      form.append(
        h(
          "p",
          { class: "field" },
          h("label", { for: `param-${spec.name}` },
            `${spec.name}${spec.required ? " *" : ""} `,
            h("span", { class: "muted" }, spec.description || "")),
          paramInput(spec),
        ),
      );
    }

    form.append(h("h3", {}, "Data connection"));
    form.append(
      h("p", { class: "field" },
        h("label", { for: "conn-location" }, "source file / URL *"),
        h("input", { type: "text", id: "conn-location", name: "conn-location", required: true })),
      h("p", { class: "field" },
        h("label", { for: "conn-kind" }, "connector"),
        (() => {
          const sel = h("select", { id: "conn-kind", name: "conn-kind" });
          for (const kind of ["csv-file", "jsonl-file", "http-csv"]) sel.append(h("option", { value: kind }, kind));
          return sel;
        })()),
      h("p", { class: "field" },
        h("label", { for: "conn-filter" }, "row filter"),
        h("input", { type: "text", id: "conn-filter", name: "conn-filter", placeholder: 'site = "SITE-A"' })),
      h("p", { class: "field" },
        h("label", { for: "conn-label" }, "label column"),
        h("input", { type: "text", id: "conn-label", name: "conn-label" })),
    );

    form.append(h("h3", {}, "Input mapping"));
    for (const input of selected.meta.inputs) {
      form.append(
        h("p", { class: "field" },
          h("label", { for: `input-${input.name}` },
            `${input.name}${input.required ? " *" : ""} (${input.kind})`),
          h("input", { type: "text", id: `input-${input.name}`, name: `input-${input.name}` })),
      );
    }

    form.append(
      h("p", { class: "field" },
        h("label", { for: "auto-approve" }, "auto approve"),
        h("input", { type: "checkbox", id: "auto-approve", name: "auto-approve" })),
      h("p", {}, h("button", { class: "button", type: "submit" }, "Create")),
    );

    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      if (!selected) return;
      const params: Record<string, unknown> = {};
      for (const spec of selected.meta.params) {
        const value = readParam(spec, form);
        if (value !== undefined) params[spec.name] = value;
      }
      const inputs: Record<string, string> = {};
      for (const input of selected.meta.inputs) {
        const el = form.querySelector<HTMLInputElement>(`[name="input-${input.name}"]`);
        if (el && el.value.trim()) inputs[input.name] = el.value.trim();
      }
      const config: Record<string, unknown> = {
        params,
        inputs,
        label: form.querySelector<HTMLInputElement>("[name=conn-label]")?.value.trim() || null,
        connector: {
          kind: form.querySelector<HTMLSelectElement>("[name=conn-kind]")?.value,
          location: form.querySelector<HTMLInputElement>("[name=conn-location]")?.value.trim(),
          row_filter: form.querySelector<HTMLInputElement>("[name=conn-filter]")?.value.trim() || null,
        },
        auto_approve: form.querySelector<HTMLInputElement>("[name=auto-approve]")?.checked ?? false,
      };
      store.api
        .createModel(`${selected.name}@${selected.version}`, config)
        .then((model) => {
          notice = `created ${model.model_id}`;
          noticeClass = "ok";
          draw();
        })
        .catch((err) => {
          notice = err instanceof ApiError
            ? `${err.body.code}: ${err.body.message} ${JSON.stringify(err.body.detail)}`
            : String(err);
          noticeClass = "error";
          draw();
        });
    });

    container.append(form);
  };

  if (preselect) {
    selected = store.templates.find((t) => `${t.name}@${t.version}` === preselect) ?? null;
  }
  draw();
  // only re-render while no template is chosen (to populate the picker);
  // once the form is open, background events must not wipe user input
  const unsubscribe = store.onChange(() => {
    if (!selected) {
      if (preselect) {
        selected = store.templates.find((t) => `${t.name}@${t.version}` === preselect) ?? null;
      }
      draw();
    }
  });
  return () => {
    unsubscribe();
    container.remove();
  };
}
